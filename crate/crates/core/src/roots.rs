//! Bracketed scalar root finding.
//!
//! Every solver checks for a sign change across its bracket before iterating.

use crate::error::{ModelError, Result};

const MAX_ITER: usize = 200;

fn check_bracket(lo: f64, hi: f64, f_lo: f64, f_hi: f64) -> Result<()> {
    if !(f_lo.is_finite() && f_hi.is_finite()) {
        return Err(ModelError::NonFinite("root bracket"));
    }
    if f_lo * f_hi > 0.0 {
        return Err(ModelError::NoBracket { lo, hi, f_lo, f_hi });
    }
    Ok(())
}

/// Plain bisection to an absolute width `xtol`.
pub fn bisection<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    check_bracket(lo, hi, f_lo, f_hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    Err(ModelError::NonConvergence {
        method: "bisection",
        iterations: MAX_ITER,
    })
}

/// Newton iteration safeguarded by bisection.
///
/// `f` returns the value and derivative. A Newton step that leaves the current
/// bracket, or does not at least halve the previous step, is replaced by a
/// bisection step.
pub fn newton_bisection<F>(f: F, lo: f64, hi: f64, xtol: f64) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let (f_lo, _) = f(lo);
    let (f_hi, _) = f(hi);
    check_bracket(lo, hi, f_lo, f_hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    // orient so that f(neg) < 0 < f(pos)
    let (mut neg, mut pos) = if f_lo < 0.0 { (lo, hi) } else { (hi, lo) };
    let mut x = 0.5 * (lo + hi);
    let mut dx_old = (hi - lo).abs();
    let mut dx = dx_old;
    let (mut fx, mut dfx) = f(x);
    for _ in 0..MAX_ITER {
        let newton_ok = dfx.is_finite()
            && dfx != 0.0
            && ((x - pos) * dfx - fx) * ((x - neg) * dfx - fx) < 0.0
            && (2.0 * fx).abs() <= (dx_old * dfx).abs();
        dx_old = dx;
        if newton_ok {
            dx = fx / dfx;
            x -= dx;
        } else {
            dx = 0.5 * (pos - neg);
            x = neg + dx;
        }
        if dx.abs() <= xtol {
            return Ok(x);
        }
        (fx, dfx) = f(x);
        if !fx.is_finite() {
            return Err(ModelError::NonFinite("root iteration"));
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            neg = x;
        } else {
            pos = x;
        }
    }
    Err(ModelError::NonConvergence {
        method: "safeguarded Newton",
        iterations: MAX_ITER,
    })
}

/// Doubles `hi` until `f(hi)` has the opposite sign of `f(lo)`.
pub fn expand_upper<F: Fn(f64) -> f64>(f: F, lo: f64, mut hi: f64, max_doublings: usize) -> Result<f64> {
    let f_lo = f(lo);
    for _ in 0..max_doublings {
        let f_hi = f(hi);
        if f_lo * f_hi <= 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
    }
    Err(ModelError::NoBracket {
        lo,
        hi,
        f_lo,
        f_hi: f(hi),
    })
}
