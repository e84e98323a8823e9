//! A small arithmetic expression grammar for family definitions loaded from
//! JSON configs: literals, `x`, `pi`, `+ - * /`, unary minus, `sin`, `cos`,
//! `pow(a, b)` and parentheses.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var,
    Pi,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Pow(Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var => x,
            Node::Pi => std::f64::consts::PI,
            Node::Neg(a) => -a.eval(x),
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Sin(a) => a.eval(x).sin(),
            Node::Cos(a) => a.eval(x).cos(),
            Node::Pow(a, b) => a.eval(x).powf(b.eval(x)),
        }
    }
}

/// A parsed expression in one circle variable.
#[derive(Clone)]
pub struct Expr {
    source: String,
    root: Arc<Node>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({})", self.source)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0, source };
        let root = p.expression()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "trailing input at token {} in '{}'",
                p.pos, source
            )));
        }
        Ok(Expr { source: source.to_string(), root: Arc::new(root) })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.root.eval(x)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// The expression as a shareable closure.
    pub fn as_fn(&self) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        let root = Arc::clone(&self.root);
        Arc::new(move |x| root.eval(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == b'.'
                        || bytes[i] == b'e'
                        || bytes[i] == b'E'
                        || ((bytes[i] == b'+' || bytes[i] == b'-')
                            && i > start
                            && (bytes[i - 1] == b'e' || bytes[i - 1] == b'E')))
                {
                    i += 1;
                }
                let text = &s[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Expr(format!("bad number '{text}' in '{s}'")))?;
                out.push(Token::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token::Ident(s[start..i].to_string()));
            }
            _ => return Err(Error::Expr(format!("unexpected character '{c}' in '{s}'"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    source: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.bump() {
            Some(got) if got == t => Ok(()),
            got => Err(Error::Expr(format!(
                "expected {t:?}, got {got:?} in '{}'",
                self.source
            ))),
        }
    }

    fn expression(&mut self) -> Result<Node> {
        let mut node = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    node = Node::Add(Box::new(node), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.bump();
                    node = Node::Sub(Box::new(node), Box::new(self.term()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut node = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    node = Node::Mul(Box::new(node), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.bump();
                    node = Node::Div(Box::new(node), Box::new(self.unary()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if matches!(self.peek(), Some(Token::Plus)) {
            self.bump();
            return self.unary();
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Node> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Node::Num(v)),
            Some(Token::LParen) => {
                let node = self.expression()?;
                self.expect(Token::RParen)?;
                Ok(node)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "x" => Ok(Node::Var),
                "pi" => Ok(Node::Pi),
                "sin" | "cos" => {
                    self.expect(Token::LParen)?;
                    let arg = self.expression()?;
                    self.expect(Token::RParen)?;
                    Ok(if name == "sin" {
                        Node::Sin(Box::new(arg))
                    } else {
                        Node::Cos(Box::new(arg))
                    })
                }
                "pow" => {
                    self.expect(Token::LParen)?;
                    let base = self.expression()?;
                    self.expect(Token::Comma)?;
                    let exp = self.expression()?;
                    self.expect(Token::RParen)?;
                    Ok(Node::Pow(Box::new(base), Box::new(exp)))
                }
                other => Err(Error::Expr(format!(
                    "unknown identifier '{other}' in '{}'",
                    self.source
                ))),
            },
            got => Err(Error::Expr(format!(
                "unexpected token {got:?} in '{}'",
                self.source
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn matches_reference_evaluator() {
        let cases: Vec<(&str, fn(f64) -> f64)> = vec![
            ("sin(2*pi*x)", |x| (2.0 * PI * x).sin()),
            ("(3+cos(2*pi*x))/4", |x| (3.0 + (2.0 * PI * x).cos()) / 4.0),
            ("-0.5*x + 1", |x| -0.5 * x + 1.0),
            ("pow(x, 3) - pow(2, x)", |x| x.powi(3) - 2f64.powf(x)),
            ("1e-3 + 2.5E2*x", |x| 1e-3 + 2.5e2 * x),
            ("x/4/2", |x| x / 8.0),
            ("x - -x", |x| 2.0 * x),
        ];
        for (src, reference) in cases {
            let e = Expr::parse(src).unwrap();
            for i in 0..100 {
                let x = -1.3 + 0.031 * i as f64;
                let got = e.eval(x);
                let want = reference(x);
                assert!(
                    (got - want).abs() <= 1e-15 * (1.0 + want.abs()),
                    "{src} at {x}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(Expr::parse("2+3*4").unwrap().eval(0.0), 14.0);
        assert_eq!(Expr::parse("(2+3)*4").unwrap().eval(0.0), 20.0);
        assert_eq!(Expr::parse("2-3-4").unwrap().eval(0.0), -5.0);
        assert_eq!(Expr::parse("-2*x").unwrap().eval(3.0), -6.0);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Expr::parse("sin(").is_err());
        assert!(Expr::parse("2 +* 3").is_err());
        assert!(Expr::parse("y + 1").is_err());
        assert!(Expr::parse("pow(2)").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("").is_err());
    }
}
