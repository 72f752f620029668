//! Bracketed root finding for monotone scalar functions.

use crate::error::{Error, Result};

/// Bisection settings.
///
/// Iteration stops once the bracket is narrower than `xtol` and the function
/// value at the midpoint is within `ftol` of zero, or once the bracket can no
/// longer be split in floating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub xtol: f64,
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for Bisection {
    fn default() -> Self {
        Bisection {
            xtol: 1e-10,
            ftol: 1e-9,
            max_iter: 2000,
        }
    }
}

impl Bisection {
    /// Find a root of `f` in `[lo, hi]`. `f(lo)` and `f(hi)` must not share a strict sign.
    pub fn solve<F>(&self, f: F, mut lo: f64, mut hi: f64) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        let mut f_lo = f(lo);
        let f_hi = f(hi);
        if !f_lo.is_finite() || !f_hi.is_finite() {
            return Err(Error::NotBracketed {
                lo,
                hi,
                context: "function not finite at bracket ends".into(),
            });
        }
        if f_lo == 0.0 {
            return Ok(lo);
        }
        if f_hi == 0.0 {
            return Ok(hi);
        }
        if f_lo.signum() == f_hi.signum() {
            return Err(Error::NotBracketed {
                lo,
                hi,
                context: format!("f(lo) = {f_lo}, f(hi) = {f_hi}"),
            });
        }
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..self.max_iter {
            mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f_mid = f(mid);
            if f_mid == 0.0 || (hi - lo <= self.xtol && f_mid.abs() <= self.ftol) {
                return Ok(mid);
            }
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        Ok(mid)
    }
}

/// Double `hi` (starting from `hi0`) until `f(hi)` changes sign relative to `f(lo)`.
///
/// Returns the bracketing upper end, or an error reporting the last bound tried.
pub fn expand_upper<F>(f: F, lo: f64, hi0: f64, max_doublings: u32) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let f_lo = f(lo);
    let mut hi = hi0;
    for _ in 0..=max_doublings {
        let f_hi = f(hi);
        if f_hi == 0.0 || f_hi.signum() != f_lo.signum() {
            return Ok(hi);
        }
        hi *= 2.0;
    }
    Err(Error::NotBracketed {
        lo,
        hi: hi / 2.0,
        context: format!("no sign change after {max_doublings} doublings"),
    })
}

/// Grow a symmetric interval around `center` until `f` changes sign across it.
pub fn expand_symmetric<F>(f: F, center: f64, half0: f64, max_doublings: u32) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let mut half = half0;
    for _ in 0..=max_doublings {
        let (lo, hi) = (center - half, center + half);
        let (a, b) = (f(lo), f(hi));
        if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
            return Ok((lo, hi));
        }
        half *= 2.0;
    }
    Err(Error::NotBracketed {
        lo: center - half / 2.0,
        hi: center + half / 2.0,
        context: format!("no sign change after {max_doublings} doublings"),
    })
}
