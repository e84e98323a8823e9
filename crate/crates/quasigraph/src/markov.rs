//! Expanding Markov maps of the circle and their symbolic structure:
//! branches, inverse branches, cylinders, Moran covers and the shadowing
//! geometry near periodic points.

use std::fmt;
use std::sync::Arc;

use crate::circle::{dist, wrap, Angle};
use crate::error::{Error, Result};

/// Tolerance for the closed-form-free inverse branch solver.
const BISECTION_TOL: f64 = 1e-14;
/// Slack when testing whether a point lies in a branch image.
const IMAGE_TOL: f64 = 1e-9;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One nonlinear branch, registered as an (eval, deriv, inverse) triple.
/// `inverse` may be omitted, in which case monotone bisection is used.
#[derive(Clone)]
pub struct CustomBranch {
    pub eval: RealFn,
    pub deriv: RealFn,
    pub inverse: Option<RealFn>,
    /// Image interval T(X_j), as a sub-interval of [0, 1] (1 meaning the
    /// full circle when paired with lo = 0).
    pub image: (f64, f64),
}

enum Branches {
    /// The b-ary map T(x) = b x mod 1. Supports exact angle stepping.
    Linear { b: u64 },
    Custom(Vec<CustomBranch>),
}

/// A continuous expanding Markov map of the circle.
pub struct MarkovMap {
    /// Branch cut points t_0 = 0 < t_1 < ... < t_b = 1.
    endpoints: Vec<f64>,
    kind: Branches,
    /// Contraction bound: every inverse branch is a theta-contraction.
    theta: f64,
    full_branch: bool,
    /// adjacency[j][k] = true when X_k is contained in T(X_j).
    adjacency: Vec<Vec<bool>>,
}

impl fmt::Debug for MarkovMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarkovMap")
            .field("branches", &self.branch_count())
            .field("theta", &self.theta)
            .field("full_branch", &self.full_branch)
            .finish()
    }
}

impl MarkovMap {
    /// The doubling map T(x) = 2x mod 1.
    pub fn doubling() -> Self {
        Self::bary(2)
    }

    /// The b-ary map T(x) = b x mod 1.
    pub fn bary(b: u64) -> Self {
        assert!(b >= 2, "an expanding map needs at least two branches");
        let endpoints = (0..=b).map(|j| j as f64 / b as f64).collect();
        let adjacency = vec![vec![true; b as usize]; b as usize];
        MarkovMap {
            endpoints,
            kind: Branches::Linear { b },
            theta: 1.0 / b as f64,
            full_branch: true,
            adjacency,
        }
    }

    /// Register a map from user-supplied C^1 branches.
    ///
    /// `endpoints` must start at 0 and end at 1; `theta` is the declared
    /// contraction bound (|T'| >= 1/theta everywhere). Branch images must
    /// align with partition points — that is what makes the map Markov.
    pub fn from_branches(
        endpoints: Vec<f64>,
        branches: Vec<CustomBranch>,
        theta: f64,
    ) -> Result<Self> {
        if endpoints.len() != branches.len() + 1 {
            return Err(Error::Config(format!(
                "{} endpoints do not delimit {} branches",
                endpoints.len(),
                branches.len()
            )));
        }
        if (endpoints[0] - 0.0).abs() > 1e-12 || (endpoints[endpoints.len() - 1] - 1.0).abs() > 1e-12
        {
            return Err(Error::Config("endpoints must span [0, 1]".into()));
        }
        if endpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("endpoints must be strictly increasing".into()));
        }
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::Config(format!("theta must be in (0,1), got {theta}")));
        }
        let b = branches.len();
        let mut adjacency = vec![vec![false; b]; b];
        let mut full_branch = true;
        for (j, br) in branches.iter().enumerate() {
            let (ilo, ihi) = br.image;
            if !(0.0..=1.0 + 1e-12).contains(&ilo) || !(ilo..=1.0 + 1e-12).contains(&ihi) {
                return Err(Error::Config(format!("branch {j} image {ilo}..{ihi} invalid")));
            }
            let covers_all = ilo <= IMAGE_TOL && ihi >= 1.0 - IMAGE_TOL;
            if !covers_all {
                full_branch = false;
            }
            for k in 0..b {
                let (xlo, xhi) = (endpoints[k], endpoints[k + 1]);
                adjacency[j][k] = xlo >= ilo - IMAGE_TOL && xhi <= ihi + IMAGE_TOL;
            }
        }
        let map = MarkovMap {
            endpoints,
            kind: Branches::Custom(branches),
            theta,
            full_branch,
            adjacency,
        };
        map.validate()?;
        Ok(map)
    }

    /// Sampled checks of the structural invariants: expansion |T'| >= 1/theta,
    /// continuity across branch cuts, and contraction of inverse branches.
    pub fn validate(&self) -> Result<()> {
        let b = self.branch_count();
        for j in 0..b {
            let (lo, hi) = self.branch_interval(j);
            let w = hi - lo;
            for i in 1..64 {
                let x = lo + w * i as f64 / 64.0;
                let d = self.deriv(x).abs();
                if d * self.theta < 1.0 - 1e-9 {
                    return Err(Error::Config(format!(
                        "|T'({x})| = {d} violates the declared bound 1/theta = {}",
                        1.0 / self.theta
                    )));
                }
            }
        }
        // Continuity at interior cuts: left and right limits agree mod 1.
        for j in 1..b {
            let t = self.endpoints[j];
            let left = self.eval_f64(t - 1e-9);
            let right = self.eval_f64(t + 1e-9);
            if dist(left, right) > 1e-6 {
                return Err(Error::Config(format!(
                    "map discontinuous at branch cut {t}: {left} vs {right}"
                )));
            }
        }
        Ok(())
    }

    pub fn branch_count(&self) -> usize {
        self.endpoints.len() - 1
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn is_full_branch(&self) -> bool {
        self.full_branch
    }

    pub fn endpoints(&self) -> &[f64] {
        &self.endpoints
    }

    pub fn branch_interval(&self, j: usize) -> (f64, f64) {
        (self.endpoints[j], self.endpoints[j + 1])
    }

    /// Whether exact rational orbits are available (integer-linear maps).
    pub fn has_exact_orbits(&self) -> bool {
        matches!(self.kind, Branches::Linear { .. })
    }

    /// Index of the branch owning x. Branch cut points belong to the branch
    /// on their right (left-closed convention).
    pub fn branch_of(&self, x: f64) -> usize {
        let x = wrap(x);
        match &self.kind {
            Branches::Linear { b } => {
                let j = (x * *b as f64).floor() as usize;
                j.min(*b as usize - 1)
            }
            Branches::Custom(_) => {
                match self
                    .endpoints
                    .binary_search_by(|t| t.partial_cmp(&x).unwrap())
                {
                    Ok(j) => j.min(self.branch_count() - 1),
                    Err(i) => i - 1,
                }
            }
        }
    }

    /// Evaluate T(x). At a branch cut the left-closed convention applies,
    /// which coincides with the common continuous value.
    pub fn eval_f64(&self, x: f64) -> f64 {
        let x = wrap(x);
        match &self.kind {
            Branches::Linear { b } => wrap(x * *b as f64),
            Branches::Custom(branches) => wrap((branches[self.branch_of(x)].eval)(x)),
        }
    }

    /// One orbit step, exact when the map supports it.
    pub fn step(&self, a: Angle) -> Angle {
        match &self.kind {
            Branches::Linear { b } => a.mul_int(*b),
            Branches::Custom(_) => Angle::Float(self.eval_f64(a.to_f64())),
        }
    }

    /// The orbit x, Tx, ..., T^(len-1) x.
    pub fn orbit(&self, start: Angle, len: usize) -> Vec<Angle> {
        let mut out = Vec::with_capacity(len);
        let mut a = start;
        for _ in 0..len {
            out.push(a);
            a = self.step(a);
        }
        out
    }

    /// T^n(x) in plain coordinates.
    pub fn eval_n(&self, x: f64, n: usize) -> f64 {
        let mut y = wrap(x);
        for _ in 0..n {
            y = self.eval_f64(y);
        }
        y
    }

    /// T'(x) on the branch interior owning x.
    pub fn deriv(&self, x: f64) -> f64 {
        match &self.kind {
            Branches::Linear { b } => *b as f64,
            Branches::Custom(branches) => (branches[self.branch_of(wrap(x))].deriv)(wrap(x)),
        }
    }

    /// |T'|^n(x) = product of |T'| along the orbit segment of length n.
    pub fn deriv_n(&self, x: f64, n: usize) -> f64 {
        let mut y = wrap(x);
        let mut prod = 1.0;
        for _ in 0..n {
            prod *= self.deriv(y).abs();
            y = self.eval_f64(y);
        }
        prod
    }

    pub fn branch_image(&self, j: usize) -> (f64, f64) {
        match &self.kind {
            Branches::Linear { .. } => (0.0, 1.0),
            Branches::Custom(branches) => branches[j].image,
        }
    }

    /// Markov adjacency: may the symbol k follow the symbol j?
    pub fn admissible(&self, j: usize, k: usize) -> bool {
        self.adjacency[j][k]
    }

    /// The inverse branch omega_j evaluated at y.
    pub fn inverse_branch(&self, j: usize, y: f64) -> Result<f64> {
        let y = wrap(y);
        match &self.kind {
            Branches::Linear { b } => Ok((y + j as f64) / *b as f64),
            Branches::Custom(branches) => {
                let br = &branches[j];
                let (ilo, ihi) = br.image;
                if y < ilo - IMAGE_TOL || y > ihi + IMAGE_TOL {
                    return Err(Error::OutOfImage { branch: j, point: y });
                }
                if let Some(inv) = &br.inverse {
                    return Ok(wrap(inv(y)));
                }
                self.bisect_branch(j, y.clamp(ilo, ihi))
            }
        }
    }

    /// Monotone bisection of T|_{X_j} = y on the branch interval.
    fn bisect_branch(&self, j: usize, y: f64) -> Result<f64> {
        let branches = match &self.kind {
            Branches::Custom(branches) => branches,
            Branches::Linear { .. } => unreachable!("linear maps have closed-form inverses"),
        };
        let br = &branches[j];
        let (mut lo, mut hi) = self.branch_interval(j);
        // Work with the continuous (unwrapped) branch lift so the image is
        // an honest interval even when it crosses 0.
        let f = |x: f64| (br.eval)(x);
        let (flo, fhi) = (f(lo), f(hi));
        let increasing = fhi > flo;
        let target = {
            // Lift y into [min(flo,fhi), max(flo,fhi)] by integer shifts.
            let (a, b) = if increasing { (flo, fhi) } else { (fhi, flo) };
            let mut t = y;
            while t < a - IMAGE_TOL {
                t += 1.0;
            }
            while t > b + IMAGE_TOL {
                t -= 1.0;
            }
            if t < a - IMAGE_TOL || t > b + IMAGE_TOL {
                return Err(Error::OutOfImage { branch: j, point: y });
            }
            t
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = f(mid);
            if (v - target) * if increasing { 1.0 } else { -1.0 } < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < BISECTION_TOL {
                break;
            }
        }
        Ok(wrap(0.5 * (lo + hi)))
    }

    /// The interval omega_{j0} ∘ ... ∘ omega_{j_{n-1}} (X).
    pub fn cylinder_interval(&self, word: &CylinderWord) -> Result<(f64, f64)> {
        self.check_admissible(word)?;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for (pos, &j) in word.symbols().iter().enumerate().rev() {
            let (ilo, ihi) = self.branch_image(j as usize);
            lo = lo.max(ilo);
            hi = hi.min(ihi);
            if hi - lo < 1e-15 {
                return Err(Error::Inadmissible { position: pos });
            }
            // hi may be the full-circle coordinate 1.0, which omega maps to
            // the branch's right endpoint.
            let a = self.inverse_branch(j as usize, lo)?;
            let b = if (hi - 1.0).abs() < 1e-15 {
                self.branch_interval(j as usize).1
            } else {
                self.inverse_branch(j as usize, hi)?
            };
            (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        }
        Ok((lo, hi))
    }

    fn check_admissible(&self, word: &CylinderWord) -> Result<()> {
        let syms = word.symbols();
        for (pos, &j) in syms.iter().enumerate() {
            if j as usize >= self.branch_count() {
                return Err(Error::Inadmissible { position: pos });
            }
            if pos + 1 < syms.len() && !self.admissible(j as usize, syms[pos + 1] as usize) {
                return Err(Error::Inadmissible { position: pos });
            }
        }
        Ok(())
    }

    /// All admissible words of the given rank, in lexicographic order.
    pub fn cylinders_of_rank(&self, rank: usize) -> Vec<CylinderWord> {
        let b = self.branch_count();
        let mut out = Vec::new();
        let mut word: Vec<u8> = Vec::with_capacity(rank);
        fn go(map: &MarkovMap, b: usize, rank: usize, word: &mut Vec<u8>, out: &mut Vec<CylinderWord>) {
            if word.len() == rank {
                out.push(CylinderWord::new(word.clone()));
                return;
            }
            for k in 0..b {
                if let Some(&last) = word.last() {
                    if !map.admissible(last as usize, k) {
                        continue;
                    }
                }
                word.push(k as u8);
                go(map, b, rank, word, out);
                word.pop();
            }
        }
        go(self, b, rank, &mut word, &mut out);
        out
    }

    /// Moran cover at scale r: along each branch-word path, the minimal rank
    /// n with (|T'|^n(x_ref))^{-1} <= r at the cylinder's left endpoint.
    pub fn moran_cover(&self, r: f64) -> Result<MoranCover> {
        self.moran_cover_budgeted(r, 1 << 22)
    }

    pub fn moran_cover_budgeted(&self, r: f64, budget: u64) -> Result<MoranCover> {
        if r <= 0.0 {
            return Err(Error::ScaleTooCoarse { scale: r });
        }
        let mut cells = Vec::new();
        // (word, contraction (|T'|^n(x_ref))^{-1} at the word's left endpoint)
        let mut stack: Vec<(Vec<u8>, f64)> = vec![(Vec::new(), 1.0)];
        while let Some((word, _)) = stack.pop() {
            let cw = CylinderWord::new(word.clone());
            let (lo, _hi) = self.cylinder_interval(&cw)?;
            let contraction = 1.0 / self.deriv_n(lo, word.len());
            if contraction <= r {
                cells.push(cw);
                continue;
            }
            if cells.len() as u64 + stack.len() as u64 > budget {
                return Err(Error::BudgetExceeded { needed: budget as u128 + 1, budget });
            }
            // Push children in reverse so they pop in lexicographic order.
            for k in (0..self.branch_count()).rev() {
                if let Some(&last) = word.last() {
                    if !self.admissible(last as usize, k) {
                        continue;
                    }
                }
                let mut child = word.clone();
                child.push(k as u8);
                stack.push((child, contraction));
            }
        }
        // Depth-first with reversed pushes emits cells lexicographically
        // except across subtree boundaries; sort to make the order canonical.
        cells.sort_by(|a, b| a.symbols().cmp(b.symbols()));
        Ok(MoranCover { cells, scale: r })
    }

    /// Max over j of d(T^j x, T^j p) / theta^(n-j) for a confined orbit
    /// segment; the shadowing lemma asserts this stays below delta.
    pub fn shadowing_deviation(&self, x: Angle, p: f64, n: usize, delta: f64) -> Result<f64> {
        let orbit_p = self.orbit(Angle::Float(p), n + 1);
        let mut worst = 0.0f64;
        let mut a = x;
        for j in 0..=n {
            let d_to_orbit = dist(a.to_f64(), orbit_p[j].to_f64());
            if d_to_orbit >= delta {
                return Err(Error::OrbitEscapes { step: j, delta });
            }
            let ratio = d_to_orbit / self.theta.powi((n - j) as i32);
            worst = worst.max(ratio);
            a = self.step(a);
        }
        Ok(worst)
    }

    /// Fixed points of T, in increasing order.
    pub fn fixed_points(&self) -> Vec<f64> {
        match &self.kind {
            Branches::Linear { b } => {
                (0..*b - 1).map(|j| j as f64 / (*b - 1) as f64).collect()
            }
            Branches::Custom(_) => {
                let mut out = Vec::new();
                for j in 0..self.branch_count() {
                    let (lo, hi) = self.branch_interval(j);
                    if dist(self.eval_f64(lo), lo) < 1e-12 {
                        out.push(lo);
                    }
                    let g = |x: f64| {
                        let mut d = self.eval_f64(x) - x;
                        // Centre the displacement in (-1/2, 1/2].
                        while d > 0.5 {
                            d -= 1.0;
                        }
                        while d <= -0.5 {
                            d += 1.0;
                        }
                        d
                    };
                    let steps = 512;
                    let w = (hi - lo) / steps as f64;
                    let mut prev = lo + 0.5 * w * 1e-6;
                    for i in 1..=steps {
                        let x = (lo + i as f64 * w).min(hi - 1e-12);
                        if g(prev) == 0.0 {
                            out.push(prev);
                        } else if g(prev) * g(x) < 0.0 {
                            let (mut a, mut c) = (prev, x);
                            for _ in 0..100 {
                                let m = 0.5 * (a + c);
                                if g(a) * g(m) <= 0.0 {
                                    c = m;
                                } else {
                                    a = m;
                                }
                            }
                            out.push(0.5 * (a + c));
                        }
                        prev = x;
                    }
                }
                out.sort_by(|a, b| a.partial_cmp(b).unwrap());
                out.dedup_by(|a, b| dist(*a, *b) < 1e-9);
                out
            }
        }
    }

    /// The power map T^ell as a Markov map with b^ell branches.
    pub fn power(&self, ell: u32, branch_budget: u64) -> Result<MarkovMap> {
        let b = self.branch_count() as u128;
        let needed = b.pow(ell);
        if needed > branch_budget as u128 {
            return Err(Error::BudgetExceeded { needed, budget: branch_budget });
        }
        if ell == 0 {
            return Err(Error::Config("power must be at least 1".into()));
        }
        match &self.kind {
            Branches::Linear { b } => Ok(MarkovMap::bary(b.pow(ell))),
            Branches::Custom(_) => {
                let mut words: Vec<(f64, CylinderWord)> = self
                    .cylinders_of_rank(ell as usize)
                    .into_iter()
                    .map(|w| {
                        let (lo, _) = self.cylinder_interval(&w).unwrap();
                        (lo, w)
                    })
                    .collect();
                words.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let mut endpoints = Vec::with_capacity(words.len() + 1);
                let mut branches = Vec::with_capacity(words.len());
                let base = Arc::new(self.clone_custom()?);
                for (lo, word) in &words {
                    endpoints.push(*lo);
                    let m = Arc::clone(&base);
                    let ml = Arc::clone(&base);
                    let ell = ell as usize;
                    branches.push(CustomBranch {
                        eval: Arc::new(move |x| m.eval_n(x, ell)),
                        deriv: Arc::new(move |x| {
                            let mut y = x;
                            let mut prod = 1.0;
                            for _ in 0..ell {
                                prod *= ml.deriv(y);
                                y = ml.eval_f64(y);
                            }
                            prod
                        }),
                        inverse: None,
                        image: self.word_image(word),
                    });
                }
                endpoints.push(1.0);
                MarkovMap::from_branches(endpoints, branches, self.theta.powi(ell as i32))
            }
        }
    }

    /// The image T^n(C_word) = T(X_{last symbol}).
    fn word_image(&self, word: &CylinderWord) -> (f64, f64) {
        match word.symbols().last() {
            Some(&j) => self.branch_image(j as usize),
            None => (0.0, 1.0),
        }
    }

    fn clone_custom(&self) -> Result<MarkovMap> {
        match &self.kind {
            Branches::Custom(branches) => Ok(MarkovMap {
                endpoints: self.endpoints.clone(),
                kind: Branches::Custom(branches.clone()),
                theta: self.theta,
                full_branch: self.full_branch,
                adjacency: self.adjacency.clone(),
            }),
            Branches::Linear { b } => Ok(MarkovMap::bary(*b)),
        }
    }
}

/// A finite branch itinerary (j_0, ..., j_{n-1}) naming the cylinder
/// C = omega_{j0} ... omega_{j_{n-1}}(X).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CylinderWord(Vec<u8>);

impl CylinderWord {
    pub fn new(symbols: Vec<u8>) -> Self {
        CylinderWord(symbols)
    }

    pub fn empty() -> Self {
        CylinderWord(Vec::new())
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn push(&mut self, symbol: u8) {
        self.0.push(symbol);
    }

    /// Concatenation: the child cylinder refined by `tail`.
    pub fn concat(&self, tail: &CylinderWord) -> CylinderWord {
        let mut v = self.0.clone();
        v.extend_from_slice(&tail.0);
        CylinderWord(v)
    }

    /// Compact digit rendering used in CSV output.
    pub fn render(&self) -> String {
        self.0.iter().map(|d| char::from(b'0' + d)).collect()
    }
}

impl fmt::Display for CylinderWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}

/// A cover of X by cylinders whose contraction is comparable to `scale`.
#[derive(Debug)]
pub struct MoranCover {
    pub cells: Vec<CylinderWord>,
    pub scale: f64,
}

impl MoranCover {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// A doubling map with a smooth non-constant derivative, used in tests that
/// need a genuinely nonlinear Markov map: T(x) = 2x + eps sin(2 pi x) mod 1.
pub fn perturbed_doubling(eps: f64) -> Result<MarkovMap> {
    use std::f64::consts::PI;
    assert!(eps.abs() < 0.15, "keep the perturbation expanding");
    let eval = move |x: f64| 2.0 * x + eps * (2.0 * PI * x).sin();
    let deriv = move |x: f64| 2.0 + eps * 2.0 * PI * (2.0 * PI * x).cos();
    let mk = |_j: usize| CustomBranch {
        eval: Arc::new(eval),
        deriv: Arc::new(deriv),
        inverse: None,
        image: (0.0, 1.0),
    };
    let theta = 1.0 / (2.0 - eps * 2.0 * PI);
    MarkovMap::from_branches(vec![0.0, 0.5, 1.0], vec![mk(0), mk(1)], theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::golden_grid;

    #[test]
    fn doubling_evaluates() {
        let t = MarkovMap::doubling();
        assert!((t.eval_f64(0.3) - 0.6).abs() < 1e-15);
        assert!((t.eval_f64(0.75) - 0.5).abs() < 1e-15);
        assert_eq!(t.eval_f64(0.0), 0.0);
    }

    #[test]
    fn doubling_inverse_branches() {
        let t = MarkovMap::doubling();
        assert!((t.inverse_branch(0, 0.5).unwrap() - 0.25).abs() < 1e-15);
        assert!((t.inverse_branch(1, 0.5).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(t.inverse_branch(0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn doubling_cylinders() {
        let t = MarkovMap::doubling();
        let c = t.cylinder_interval(&CylinderWord::new(vec![0, 1])).unwrap();
        assert!((c.0 - 0.25).abs() < 1e-12 && (c.1 - 0.5).abs() < 1e-12);
        let c = t.cylinder_interval(&CylinderWord::empty()).unwrap();
        assert_eq!(c, (0.0, 1.0));
        let c = t.cylinder_interval(&CylinderWord::new(vec![1, 1, 1])).unwrap();
        assert!((c.0 - 0.875).abs() < 1e-12 && (c.1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_n_cylinders_tile_the_circle() {
        for map in [MarkovMap::doubling(), MarkovMap::bary(3)] {
            for rank in 0..=6 {
                let words = map.cylinders_of_rank(rank);
                assert_eq!(words.len(), map.branch_count().pow(rank as u32));
                let mut ivs: Vec<(f64, f64)> = words
                    .iter()
                    .map(|w| map.cylinder_interval(w).unwrap())
                    .collect();
                ivs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let total: f64 = ivs.iter().map(|(a, b)| b - a).sum();
                assert!((total - 1.0).abs() < 1e-9, "rank {rank}: total {total}");
                for pair in ivs.windows(2) {
                    assert!(pair[0].1 <= pair[1].0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn deep_partition_tiles_exactly() {
        // Rank 12 on the doubling map: 4096 cylinders, constant derivative,
        // so lengths are exactly 2^-12.
        let t = MarkovMap::doubling();
        let words = t.cylinders_of_rank(12);
        assert_eq!(words.len(), 4096);
        let total: f64 = words
            .iter()
            .map(|w| {
                let (a, b) = t.cylinder_interval(w).unwrap();
                b - a
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn moran_cover_matches_enumeration() {
        let t = MarkovMap::doubling();
        // 2^-2 <= 0.3 < 2^-1 forces uniform rank 2.
        let cover = t.moran_cover(0.3).unwrap();
        assert_eq!(cover.len(), 4);
        assert!(cover.cells.iter().all(|w| w.rank() == 2));
        // 2^-1 <= 0.6 < 1 gives the two rank-1 cylinders.
        let cover = t.moran_cover(0.6).unwrap();
        assert_eq!(cover.len(), 2);
        assert!(cover.cells.iter().all(|w| w.rank() == 1));
        // Coarsest nontrivial cover.
        let cover = t.moran_cover(0.99).unwrap();
        assert_eq!(cover.len(), 2);
        assert!(t.moran_cover(-0.1).is_err());
    }

    #[test]
    fn moran_cover_partitions_for_nonlinear_map() {
        let t = perturbed_doubling(0.05).unwrap();
        for r in [0.3, 0.1, 0.03] {
            let cover = t.moran_cover(r).unwrap();
            let mut ivs: Vec<(f64, f64)> = cover
                .cells
                .iter()
                .map(|w| t.cylinder_interval(w).unwrap())
                .collect();
            ivs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let total: f64 = ivs.iter().map(|(a, b)| b - a).sum();
            assert!((total - 1.0).abs() < 1e-7, "r={r}: total {total}");
            for pair in ivs.windows(2) {
                assert!(pair[0].1 <= pair[1].0 + 1e-9);
            }
            // Scale condition at the reference point.
            for w in &cover.cells {
                let (lo, _) = t.cylinder_interval(w).unwrap();
                let c = 1.0 / t.deriv_n(lo, w.rank());
                assert!(c <= r + 1e-12);
                if w.rank() > 0 {
                    let parent = CylinderWord::new(w.symbols()[..w.rank() - 1].to_vec());
                    let (plo, _) = t.cylinder_interval(&parent).unwrap();
                    assert!(1.0 / t.deriv_n(plo, parent.rank()) > r);
                }
            }
        }
    }

    #[test]
    fn nonlinear_inverse_branch_round_trip() {
        let t = perturbed_doubling(0.08).unwrap();
        for y in golden_grid(50) {
            for j in 0..2 {
                let x = t.inverse_branch(j, y).unwrap();
                assert!(dist(t.eval_f64(x), y) < 1e-12, "branch {j} at {y}");
                let (lo, hi) = t.branch_interval(j);
                assert!(x >= lo - 1e-12 && x <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn inverse_branches_contract() {
        // Contraction holds in the line metric of [0, 1]: inverse branches
        // map the image interval diffeomorphically into one branch cell, so
        // the mean value theorem applies on the line.
        let t = perturbed_doubling(0.08).unwrap();
        for (x, y) in golden_grid(40).zip(golden_grid(40).map(|v| wrap(v + 0.123))) {
            for j in 0..2 {
                let ix = t.inverse_branch(j, x).unwrap();
                let iy = t.inverse_branch(j, y).unwrap();
                assert!((ix - iy).abs() <= t.theta() * (x - y).abs() + 1e-12);
            }
        }
    }

    #[test]
    fn shadowing_on_confined_segments() {
        let t = MarkovMap::doubling();
        // x = delta * theta^n doubles to exactly delta after n steps.
        let delta = 0.01;
        for n in [1usize, 5, 20] {
            let x = Angle::exact_from_f64(delta * 0.5f64.powi(n as i32) * 0.999);
            let ratio = t.shadowing_deviation(x, 0.0, n, delta).unwrap();
            assert!(ratio < delta, "n={n}: ratio {ratio}");
        }
        // The fixed point itself has deviation 0.
        let r = t.shadowing_deviation(Angle::Exact(0), 0.0, 10, delta).unwrap();
        assert_eq!(r, 0.0);
        // A point at distance delta*theta^n exactly escapes one step later.
        let x = Angle::exact_from_f64(2.0 * delta);
        assert!(matches!(
            t.shadowing_deviation(x, 0.0, 3, delta),
            Err(Error::OrbitEscapes { .. })
        ));
    }

    #[test]
    fn escape_from_neutral_neighbourhood() {
        // Any x with d(x, P) > 10 delta theta^m must leave B_delta(P)
        // within m steps.
        let t = MarkovMap::doubling();
        let delta = 0.01;
        let m = 12;
        for x in golden_grid(100) {
            if dist(x, 0.0) <= 10.0 * delta * t.theta().powi(m) {
                continue;
            }
            let mut a = Angle::exact_from_f64(x);
            let mut escaped = false;
            for _ in 0..=m {
                if dist(a.to_f64(), 0.0) >= delta {
                    escaped = true;
                    break;
                }
                a = t.step(a);
            }
            assert!(escaped, "x={x} stayed confined");
        }
    }

    #[test]
    fn bounded_distortion_band() {
        let t = perturbed_doubling(0.08).unwrap();
        let mut spreads = Vec::new();
        for rank in 1..=10usize {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for w in t.cylinders_of_rank(rank) {
                let (a, b) = t.cylinder_interval(&w).unwrap();
                for frac in [0.01, 0.5, 0.99] {
                    let x = a + frac * (b - a);
                    let ratio = (b - a) * t.deriv_n(x, rank);
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                }
            }
            spreads.push(hi / lo);
        }
        // The spread saturates: the band stays bounded and stops growing
        // past the middle ranks.
        let d0 = *spreads.last().unwrap();
        assert!(d0 < 4.0, "empirical distortion constant {d0}");
        assert!(
            spreads[9] <= spreads[4] * 1.05,
            "distortion spread still growing: {spreads:?}"
        );
    }

    #[test]
    fn inadmissible_words_are_rejected() {
        // The doubling map on the refined partition {0, 1/2, 3/4, 1} is a
        // continuous Markov map with non-full branches: T(X_1) = [0, 1/2]
        // and T(X_2) = [1/2, 1].
        let double = |x: f64| 2.0 * x;
        let double_hi = |x: f64| 2.0 * x - 1.0;
        let t = MarkovMap::from_branches(
            vec![0.0, 0.5, 0.75, 1.0],
            vec![
                CustomBranch {
                    eval: Arc::new(double),
                    deriv: Arc::new(|_| 2.0),
                    inverse: Some(Arc::new(|y| y / 2.0)),
                    image: (0.0, 1.0),
                },
                CustomBranch {
                    eval: Arc::new(double_hi),
                    deriv: Arc::new(|_| 2.0),
                    inverse: Some(Arc::new(|y| (y + 1.0) / 2.0)),
                    image: (0.0, 0.5),
                },
                CustomBranch {
                    eval: Arc::new(double_hi),
                    deriv: Arc::new(|_| 2.0),
                    inverse: Some(Arc::new(|y| (y + 1.0) / 2.0)),
                    image: (0.5, 1.0),
                },
            ],
            0.5,
        )
        .unwrap();
        assert!(!t.is_full_branch());
        assert!(t.admissible(1, 0) && !t.admissible(1, 1) && !t.admissible(1, 2));
        let c = t.cylinder_interval(&CylinderWord::new(vec![1, 0])).unwrap();
        assert!((c.0 - 0.5).abs() < 1e-12 && (c.1 - 0.75).abs() < 1e-12);
        assert!(matches!(
            t.cylinder_interval(&CylinderWord::new(vec![1, 1])),
            Err(Error::Inadmissible { position: 0 })
        ));
        // Words of rank 3 tile the circle even without full branches.
        let words = t.cylinders_of_rank(3);
        let total: f64 = words
            .iter()
            .map(|w| {
                let (a, b) = t.cylinder_interval(w).unwrap();
                b - a
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_map_composition() {
        let t = MarkovMap::doubling();
        let t2 = t.power(2, 1024).unwrap();
        assert_eq!(t2.branch_count(), 4);
        for x in golden_grid(64) {
            assert!(dist(t2.eval_f64(x), t.eval_n(x, 2)) < 1e-12);
        }
        assert!(t.power(40, 1024).is_err());

        let nt = perturbed_doubling(0.05).unwrap();
        let nt2 = nt.power(2, 1024).unwrap();
        assert_eq!(nt2.branch_count(), 4);
        for x in golden_grid(64) {
            assert!(dist(nt2.eval_f64(x), nt.eval_n(x, 2)) < 1e-9, "at {x}");
        }
    }

    #[test]
    fn fixed_points_found() {
        assert_eq!(MarkovMap::doubling().fixed_points(), vec![0.0]);
        let f3 = MarkovMap::bary(3).fixed_points();
        assert_eq!(f3.len(), 2);
        assert!((f3[1] - 0.5).abs() < 1e-12);
        let nt = perturbed_doubling(0.05).unwrap();
        let fps = nt.fixed_points();
        assert_eq!(fps.len(), 1);
        assert!(dist(nt.eval_f64(fps[0]), fps[0]) < 1e-9);
    }
}
