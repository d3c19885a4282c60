//! Parametric rate families.
//!
//! Each family satisfies the structural requirements of its species class by
//! construction, so no run-time check of monotonicity or boundedness is needed
//! beyond strictly positive parameters:
//!
//! * [`Monod`]: `alpha(s) = alpha_max * s / (s + K_s)`, growth of free bacteria.
//! * [`Contois`]: `beta(s, y) = beta_max * (s/y) / (K_s + s/y)`, ratio-dependent
//!   growth of attached bacteria.
//! * [`Uptake`]: Michaelis-Menten substrate uptake of phytoplankton.
//! * [`QuotaGrowth`]: Droop or Caperon-Meyer growth as a function of the cell
//!   quota `q`, identically zero below the minimal quota `Q0`.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

fn check_nonneg(what: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(ModelError::NonFinite(what));
    }
    if v < 0.0 {
        return Err(ModelError::Domain {
            what,
            value: v,
            expected: ">= 0",
        });
    }
    Ok(())
}

pub(crate) fn check_positive_param(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(ModelError::InvalidScenario(format!(
            "parameter {name} must be finite and > 0, got {v}"
        )));
    }
    Ok(())
}

/// Michaelis-Menten growth on extracellular substrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monod {
    pub alpha_max: f64,
    #[serde(rename = "K_s")]
    pub k_s: f64,
}

impl Monod {
    pub fn new(alpha_max: f64, k_s: f64) -> Result<Self> {
        let m = Self { alpha_max, k_s };
        m.check()?;
        Ok(m)
    }

    pub(crate) fn check(&self) -> Result<()> {
        check_positive_param("alpha_max", self.alpha_max)?;
        check_positive_param("K_s", self.k_s)
    }

    /// Growth rate at substrate `s`; errors on negative input.
    pub fn rate(&self, s: f64) -> Result<f64> {
        check_nonneg("Monod rate", s)?;
        Ok(self.value(s))
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        self.alpha_max * s / (s + self.k_s)
    }

    #[inline]
    pub fn d_ds(&self, s: f64) -> f64 {
        let den = s + self.k_s;
        self.alpha_max * self.k_s / (den * den)
    }

    /// Substrate level where the rate equals `d`, if `d < alpha_max`.
    pub fn inverse(&self, d: f64) -> Option<f64> {
        (d > 0.0 && d < self.alpha_max).then(|| d * self.k_s / (self.alpha_max - d))
    }
}

/// Classical Contois ratio-dependent growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contois {
    pub beta_max: f64,
    /// Dimensionless ratio constant.
    #[serde(rename = "K_s")]
    pub k_s: f64,
}

impl Contois {
    pub fn new(beta_max: f64, k_s: f64) -> Result<Self> {
        let c = Self { beta_max, k_s };
        c.check()?;
        Ok(c)
    }

    pub(crate) fn check(&self) -> Result<()> {
        check_positive_param("beta_max", self.beta_max)?;
        check_positive_param("K_s", self.k_s)
    }

    /// Growth rate at `(s, y)`. At `y = 0` with `s > 0` this is the limit
    /// `beta_max`; `(0, 0)` is an error.
    pub fn rate(&self, s: f64, y: f64) -> Result<f64> {
        check_nonneg("Contois rate (s)", s)?;
        check_nonneg("Contois rate (y)", y)?;
        if s == 0.0 && y == 0.0 {
            return Err(ModelError::UndefinedPoint);
        }
        Ok(self.value(s, y))
    }

    /// Unchecked evaluation, written as `beta_max * s / (K y + s)` so that the
    /// `y = 0` limit falls out of the same expression.
    #[inline]
    pub fn value(&self, s: f64, y: f64) -> f64 {
        self.beta_max * (s / (self.k_s * y + s))
    }

    #[inline]
    pub fn d_ds(&self, s: f64, y: f64) -> f64 {
        let den = self.k_s * y + s;
        self.beta_max * self.k_s * y / (den * den)
    }

    #[inline]
    pub fn d_dy(&self, s: f64, y: f64) -> f64 {
        let den = self.k_s * y + s;
        -self.beta_max * self.k_s * s / (den * den)
    }
}

/// Michaelis-Menten uptake of the substrate by phytoplankton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Uptake {
    pub rho_max: f64,
    #[serde(rename = "K_s")]
    pub k_s: f64,
}

impl Uptake {
    pub fn new(rho_max: f64, k_s: f64) -> Result<Self> {
        let u = Self { rho_max, k_s };
        u.check()?;
        Ok(u)
    }

    pub(crate) fn check(&self) -> Result<()> {
        check_positive_param("rho_max", self.rho_max)?;
        check_positive_param("K_s", self.k_s)
    }

    pub fn rate(&self, s: f64) -> Result<f64> {
        check_nonneg("uptake rate", s)?;
        Ok(self.value(s))
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        self.rho_max * s / (s + self.k_s)
    }

    #[inline]
    pub fn d_ds(&self, s: f64) -> f64 {
        let den = s + self.k_s;
        self.rho_max * self.k_s / (den * den)
    }

    /// Substrate level with uptake `v`, for `0 <= v < rho_max`.
    pub fn inverse(&self, v: f64) -> Option<f64> {
        (v >= 0.0 && v < self.rho_max).then(|| self.k_s * v / (self.rho_max - v))
    }
}

/// Quota-dependent growth: zero below `Q0`, increasing and bounded above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuotaGrowth {
    /// `gamma(q) = gamma_bar * (1 - Q0/q)`.
    Droop { gamma_bar: f64, q0: f64 },
    /// `gamma(q) = gamma_bar * (q - Q0) / (q - Q0 + K_q)`.
    CaperonMeyer { gamma_bar: f64, q0: f64, k_q: f64 },
}

impl QuotaGrowth {
    pub fn droop(gamma_bar: f64, q0: f64) -> Result<Self> {
        let g = QuotaGrowth::Droop { gamma_bar, q0 };
        g.check()?;
        Ok(g)
    }

    pub fn caperon_meyer(gamma_bar: f64, q0: f64, k_q: f64) -> Result<Self> {
        let g = QuotaGrowth::CaperonMeyer { gamma_bar, q0, k_q };
        g.check()?;
        Ok(g)
    }

    pub(crate) fn check(&self) -> Result<()> {
        check_positive_param("gamma_bar", self.gamma_bar())?;
        check_positive_param("Q0", self.q0())?;
        if let QuotaGrowth::CaperonMeyer { k_q, .. } = *self {
            check_positive_param("K_q", k_q)?;
        }
        Ok(())
    }

    pub fn gamma_bar(&self) -> f64 {
        match *self {
            QuotaGrowth::Droop { gamma_bar, .. } | QuotaGrowth::CaperonMeyer { gamma_bar, .. } => gamma_bar,
        }
    }

    pub fn q0(&self) -> f64 {
        match *self {
            QuotaGrowth::Droop { q0, .. } | QuotaGrowth::CaperonMeyer { q0, .. } => q0,
        }
    }

    pub fn rate(&self, q: f64) -> Result<f64> {
        check_nonneg("quota growth rate", q)?;
        Ok(self.value(q))
    }

    #[inline]
    pub fn value(&self, q: f64) -> f64 {
        match *self {
            QuotaGrowth::Droop { gamma_bar, q0 } => {
                if q >= q0 {
                    (1.0 - q0 / q) * gamma_bar
                } else {
                    0.0
                }
            }
            QuotaGrowth::CaperonMeyer { gamma_bar, q0, k_q } => {
                if q >= q0 {
                    gamma_bar * (q - q0) / (q - q0 + k_q)
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative in `q`; the right derivative is used at the kink `q = Q0`.
    #[inline]
    pub fn d_dq(&self, q: f64) -> f64 {
        match *self {
            QuotaGrowth::Droop { gamma_bar, q0 } => {
                if q >= q0 {
                    gamma_bar * q0 / (q * q)
                } else {
                    0.0
                }
            }
            QuotaGrowth::CaperonMeyer { gamma_bar, q0, k_q } => {
                if q >= q0 {
                    let den = q - q0 + k_q;
                    gamma_bar * k_q / (den * den)
                } else {
                    0.0
                }
            }
        }
    }

    /// Net quota consumption by growth, `f(q) = gamma(q) * q`.
    #[inline]
    pub fn f(&self, q: f64) -> f64 {
        self.value(q) * q
    }

    #[inline]
    pub fn df_dq(&self, q: f64) -> f64 {
        self.d_dq(q) * q + self.value(q)
    }

    /// Quota at which growth equals `d`, if `0 < d < gamma_bar`.
    pub fn inverse(&self, d: f64) -> Option<f64> {
        if !(d > 0.0 && d < self.gamma_bar()) {
            return None;
        }
        Some(match *self {
            QuotaGrowth::Droop { gamma_bar, q0 } => q0 * gamma_bar / (gamma_bar - d),
            QuotaGrowth::CaperonMeyer { gamma_bar, q0, k_q } => q0 + d * k_q / (gamma_bar - d),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monod_values() {
        let m = Monod::new(1.0, 1.0).unwrap();
        assert_eq!(m.rate(0.0).unwrap(), 0.0);
        assert_eq!(m.rate(1.0).unwrap(), 0.5);
        assert_eq!(Monod::new(1.0, 2.0).unwrap().rate(2.0).unwrap(), 0.5);
        assert!(matches!(m.rate(-1.0), Err(ModelError::Domain { .. })));
    }

    #[test]
    fn contois_values() {
        let c = Contois::new(1.0, 1.0).unwrap();
        assert_eq!(c.rate(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(c.rate(0.0, 1.0).unwrap(), 0.0);
        assert!(c.rate(1.0, 1e300).unwrap() < 1e-299);
        assert_eq!(c.rate(2.0, 0.0).unwrap(), 1.0);
        assert_eq!(c.rate(0.0, 0.0), Err(ModelError::UndefinedPoint));
    }

    #[test]
    fn quota_values() {
        let g = QuotaGrowth::droop(1.0, 0.5).unwrap();
        assert_eq!(g.rate(1.0).unwrap(), 0.5);
        assert_eq!(g.rate(0.4).unwrap(), 0.0);
        assert_eq!(Uptake::new(1.0, 1.0).unwrap().rate(1.0).unwrap(), 0.5);
        assert_eq!(g.inverse(0.5), Some(1.0));
        assert_eq!(g.inverse(1.0), None);
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(Monod::new(0.0, 1.0).is_err());
        assert!(Contois::new(1.0, -1.0).is_err());
        assert!(QuotaGrowth::caperon_meyer(1.0, 0.5, f64::NAN).is_err());
    }

    fn grid(hi: f64) -> impl Iterator<Item = f64> {
        (0..1000).map(move |i| hi * i as f64 / 999.0)
    }

    #[test]
    fn monotone_and_bounded_on_grid() {
        let m = Monod::new(1.3, 0.7).unwrap();
        let u = Uptake::new(2.1, 0.4).unwrap();
        let mut prev = (-1.0, -1.0);
        for s in grid(10.0 * 0.7) {
            let (a, r) = (m.value(s), u.value(s));
            assert!(a >= prev.0 && r >= prev.1);
            assert!(a <= m.alpha_max && r <= u.rho_max);
            prev = (a, r);
        }

        let c = Contois::new(1.5, 0.8).unwrap();
        for s in [0.1, 1.0, 5.0] {
            let mut last_rate = f64::INFINITY;
            let mut last_uptake = -1.0;
            for y in grid(8.0).skip(1) {
                let b = c.value(s, y);
                assert!(b <= last_rate);
                assert!(b * y > last_uptake, "beta*y must increase in y");
                last_rate = b;
                last_uptake = b * y;
            }
        }

        for g in [
            QuotaGrowth::droop(1.2, 0.3).unwrap(),
            QuotaGrowth::caperon_meyer(1.2, 0.3, 0.5).unwrap(),
        ] {
            let mut last = -1.0;
            for i in 1..1000 {
                let q = 0.3 + 3.0 * i as f64 / 999.0;
                let f = g.f(q);
                assert!(f >= last);
                assert!(g.value(q) <= g.gamma_bar());
                last = f;
            }
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        let m = Monod::new(1.3, 0.7).unwrap();
        let c = Contois::new(1.5, 0.8).unwrap();
        let g = QuotaGrowth::caperon_meyer(1.2, 0.3, 0.5).unwrap();
        let d = QuotaGrowth::droop(1.2, 0.3).unwrap();
        for x in [0.4, 1.0, 2.5] {
            let fd = (m.value(x + h) - m.value(x - h)) / (2.0 * h);
            assert!((fd - m.d_ds(x)).abs() < 1e-8);
            let fd = (c.value(x + h, 0.9) - c.value(x - h, 0.9)) / (2.0 * h);
            assert!((fd - c.d_ds(x, 0.9)).abs() < 1e-8);
            let fd = (c.value(0.9, x + h) - c.value(0.9, x - h)) / (2.0 * h);
            assert!((fd - c.d_dy(0.9, x)).abs() < 1e-8);
            for q in [g, d] {
                let fd = (q.f(x + h) - q.f(x - h)) / (2.0 * h);
                assert!((fd - q.df_dq(x)).abs() < 1e-8);
            }
        }
    }
}
