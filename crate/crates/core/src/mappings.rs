//! Maps between the substrate axis and the quota / attached-biomass axes.
//!
//! `cap_q(s)` is the quota toward which `q` relaxes at fixed `s`, and
//! `s_of_q` its inverse; `cap_y(s)` is the attached biomass whose growth
//! balances dilution at substrate `s`, and `s_of_y` its inverse. Each pair
//! satisfies `sign(q') = sign(cap_q(s) - q) = sign(s - s_of_q(q))` (and the
//! analogue for `y`), which is what lets the whole system be read on one axis.

use serde::{Serialize, Serializer};

use crate::error::{ModelError, Result};
use crate::rates::QuotaGrowth;
use crate::roots::{expand_upper, newton_bisection};
use crate::scenario::{CSpecies, QSpecies};

/// Relative margin used when clamping quotas into `(Q0, Q^m)`.
pub const QUOTA_CLAMP_EPS: f64 = 1e-12;

/// A substrate concentration or the `+inf` sentinel produced by `s_of_y`
/// for biomasses that no substrate level can sustain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedSubstrate {
    Finite(f64),
    Infinite,
}

impl ExtendedSubstrate {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedSubstrate::Finite(v) => Some(v),
            ExtendedSubstrate::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedSubstrate::Infinite)
    }
}

impl Serialize for ExtendedSubstrate {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtendedSubstrate::Finite(v) => ser.serialize_f64(*v),
            ExtendedSubstrate::Infinite => ser.serialize_str("inf"),
        }
    }
}

/// `f(q) = gamma(q) q`.
pub fn f_of_q(k: &QSpecies, q: f64) -> Result<f64> {
    if !(q >= 0.0) {
        return Err(ModelError::Domain {
            what: "f(q)",
            value: q,
            expected: ">= 0",
        });
    }
    Ok(k.growth.f(q))
}

/// Unique `q > Q0` with `f(q) = v`.
pub fn f_inverse(k: &QSpecies, v: f64) -> Result<f64> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(ModelError::Domain {
            what: "f^-1",
            value: v,
            expected: "finite and > 0",
        });
    }
    match k.growth {
        QuotaGrowth::Droop { gamma_bar, q0 } => Ok(q0 + v / gamma_bar),
        QuotaGrowth::CaperonMeyer { gamma_bar, q0, k_q } => {
            let g = &k.growth;
            let hi0 = q0 + 2.0 * (v / gamma_bar).max(k_q);
            let hi = expand_upper(|q| g.f(q) - v, q0, hi0, 64).map_err(|_| ModelError::UnboundedDemand {
                value: v,
                sup: g.f(hi0 * 2f64.powi(64)),
            })?;
            newton_bisection(|q| (g.f(q) - v, g.df_dq(q)), q0, hi, 1e-15 * hi)
        }
    }
}

/// Upper quota bound `Q^m = f^-1(rho_max)`.
pub fn q_max(k: &QSpecies) -> f64 {
    f_inverse(k, k.uptake.rho_max).expect("rho_max > 0 by construction")
}

/// Equilibrium quota at substrate `s`, with a flag set when `s <= 0` and the
/// limiting value `Q0` is returned.
pub fn cap_q_flagged(k: &QSpecies, s: f64) -> (f64, bool) {
    if !(s > 0.0) {
        return (k.q0(), true);
    }
    let v = k.uptake.value(s);
    if v <= 0.0 {
        return (k.q0(), true);
    }
    match f_inverse(k, v) {
        Ok(q) => (q, false),
        Err(_) => (k.q0(), true),
    }
}

/// Equilibrium quota at substrate `s`; `Q0` for `s <= 0`.
pub fn cap_q(k: &QSpecies, s: f64) -> f64 {
    cap_q_flagged(k, s).0
}

/// `dQ/ds`, from the inverse function rule.
pub fn cap_q_ds(k: &QSpecies, s: f64) -> f64 {
    let q = cap_q(k, s);
    k.uptake.d_ds(s) / k.growth.df_dq(q)
}

/// Substrate level at which quota `q` is at equilibrium. Requires
/// `Q0 < q < Q^m`.
pub fn s_of_q(k: &QSpecies, q: f64) -> Result<f64> {
    let q0 = k.q0();
    if !(q > q0) {
        return Err(ModelError::Domain {
            what: "S^z(q)",
            value: q,
            expected: "q > Q0",
        });
    }
    let f = k.growth.f(q);
    k.uptake.inverse(f).ok_or(ModelError::Domain {
        what: "S^z(q)",
        value: q,
        expected: "q < Q^m",
    })
}

/// `s_of_q` after clamping `q` into `[Q0 (1+eps), Q^m (1-eps)]`.
pub fn s_of_q_clamped(k: &QSpecies, q: f64) -> f64 {
    let lo = k.q0() * (1.0 + QUOTA_CLAMP_EPS);
    let hi = q_max(k) * (1.0 - QUOTA_CLAMP_EPS);
    let qc = q.clamp(lo, hi);
    s_of_q(k, qc).unwrap_or(if qc <= lo { 0.0 } else { f64::MAX })
}

/// Attached biomass in balance with dilution at substrate `s`
/// (`beta(s, Y(s)) = D`), or 0 when `beta(s, 0) <= D`.
pub fn cap_y(j: &CSpecies, d: f64, s: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(ModelError::Domain {
            what: "Y(s)",
            value: d,
            expected: "D > 0",
        });
    }
    if !(s >= 0.0) {
        return Err(ModelError::Domain {
            what: "Y(s)",
            value: s,
            expected: "s >= 0",
        });
    }
    Ok(cap_y_unchecked(j, d, s))
}

#[inline]
pub(crate) fn cap_y_unchecked(j: &CSpecies, d: f64, s: f64) -> f64 {
    let c = &j.growth;
    if s > 0.0 && c.beta_max > d {
        s * (c.beta_max - d) / (c.k_s * d)
    } else {
        0.0
    }
}

/// Slope of `cap_y` in `s` (zero where `cap_y` vanishes).
pub(crate) fn cap_y_ds(j: &CSpecies, d: f64) -> f64 {
    let c = &j.growth;
    if c.beta_max > d {
        (c.beta_max - d) / (c.k_s * d)
    } else {
        0.0
    }
}

/// Substrate level at which attached biomass `y` is in balance, `+inf` if
/// no substrate level sustains it. At `y = 0` this is the infimum over
/// positive biomasses.
pub fn s_of_y(j: &CSpecies, d: f64, y: f64) -> ExtendedSubstrate {
    let c = &j.growth;
    if c.beta_max <= d {
        return ExtendedSubstrate::Infinite;
    }
    ExtendedSubstrate::Finite(y.max(0.0) * c.k_s * d / (c.beta_max - d))
}
