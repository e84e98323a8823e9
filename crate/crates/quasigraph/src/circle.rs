//! Circle arithmetic and exact angle representation.
//!
//! Long forward orbits of integer-linear circle maps cannot be run in plain
//! `f64`: every float is a dyadic rational, so under `x -> b*x mod 1` the
//! mantissa shifts out and the orbit collapses onto 0 after at most ~60
//! steps. Points are therefore carried as exact rationals `num / MODULUS`
//! with a fixed prime modulus, on which multiplication by a branch count `b`
//! acts exactly and with astronomically long period.

/// Fixed denominator for exact angles: the prime 2^62 - 57.
///
/// The multiplicative orders of 2, 3, 5, 6, 7 and 10 modulo this prime all
/// exceed 2^58, so exact orbits of b-ary maps neither repeat nor hit 0 on
/// any feasible horizon (unless the numerator is 0, which is a genuine
/// preimage of the fixed point).
pub const MODULUS: u64 = 4_611_686_018_427_387_847;

/// A point of the circle X = R/Z.
///
/// `Exact` carries `num / MODULUS`; `Float` is the fallback used for maps
/// without an exact integer action (registered nonlinear branches).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Angle {
    Exact(u64),
    Float(f64),
}

impl Angle {
    /// Snap an `f64` coordinate to the nearest exact rational `a / MODULUS`.
    pub fn exact_from_f64(x: f64) -> Angle {
        let x = wrap(x);
        let a = (x * MODULUS as f64).round() as u64 % MODULUS;
        Angle::Exact(a)
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Angle::Exact(a) => a as f64 / MODULUS as f64,
            Angle::Float(x) => x,
        }
    }

    /// Multiply by an integer factor mod 1. Exact for `Exact` angles.
    pub fn mul_int(self, b: u64) -> Angle {
        match self {
            Angle::Exact(a) => {
                Angle::Exact(((a as u128 * b as u128) % MODULUS as u128) as u64)
            }
            Angle::Float(x) => Angle::Float(wrap(x * b as f64)),
        }
    }

    pub fn is_exact_zero(self) -> bool {
        matches!(self, Angle::Exact(0))
    }

    /// Stable key for memoization tables.
    pub fn key(self) -> u64 {
        match self {
            Angle::Exact(a) => a,
            Angle::Float(x) => x.to_bits(),
        }
    }
}

/// Reduce a real number to the fundamental domain [0, 1).
pub fn wrap(x: f64) -> f64 {
    let mut y = x - x.floor();
    if y >= 1.0 {
        y -= 1.0;
    }
    if y < 0.0 {
        y += 1.0;
    }
    y
}

/// Circle distance d(x, y) = min(|x-y|, 1-|x-y|).
pub fn dist(x: f64, y: f64) -> f64 {
    let d = (wrap(x) - wrap(y)).abs();
    d.min(1.0 - d)
}

/// Fractional part of the golden ratio, used to offset sampling grids away
/// from dyadic rationals (which are preimages of 0 under b-ary maps).
pub const GOLDEN_FRAC: f64 = 0.618_033_988_749_894_9;

/// Uniform n-point grid offset by the golden fraction: (i + phi)/n mod 1.
pub fn golden_grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| wrap((i as f64 + GOLDEN_FRAC) / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_fundamental_domain() {
        assert_eq!(wrap(0.25), 0.25);
        assert_eq!(wrap(1.25), 0.25);
        assert_eq!(wrap(-0.25), 0.75);
        assert_eq!(wrap(0.0), 0.0);
        assert!(wrap(1.0 - 1e-17) < 1.0);
    }

    #[test]
    fn dist_is_circle_metric() {
        assert!((dist(0.1, 0.9) - 0.2).abs() < 1e-15);
        assert!((dist(0.0, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(dist(0.3, 0.3), 0.0);
    }

    #[test]
    fn exact_doubling_never_dies() {
        // A float orbit of the doubling map hits 0 after ~60 steps; the
        // exact orbit must not.
        let mut a = Angle::exact_from_f64(GOLDEN_FRAC);
        for _ in 0..10_000 {
            a = a.mul_int(2);
            assert!(!a.is_exact_zero());
        }
    }

    #[test]
    fn exact_orbit_has_no_short_period() {
        let start = Angle::exact_from_f64(GOLDEN_FRAC);
        let mut seen = std::collections::HashSet::new();
        let mut a = start;
        for _ in 0..100_000 {
            assert!(seen.insert(a.key()));
            a = a.mul_int(2);
        }
    }

    #[test]
    fn snap_error_below_float_resolution() {
        for x in golden_grid(97) {
            let a = Angle::exact_from_f64(x);
            assert!((a.to_f64() - x).abs() < 1e-15);
        }
    }
}
