//! Scenario-level checks on subsistence concentrations.
//!
//! The parametric rate families satisfy the per-species requirements by
//! construction, so what remains is washout detection and the genericity
//! conditions: no two species may share a subsistence level, and no
//! attached-species threshold may coincide with the attached-only equilibrium.

use serde::Serialize;

use crate::equilibria::{s_y_star, subsistence_x, subsistence_y, subsistence_z, Subsistence};
use crate::error::Result;
use crate::scenario::{CSpecies, Scenario, SpeciesClass};

/// Default separation below which two substrate levels count as equal.
pub const TOL_DISTINCT: f64 = 1e-9;

/// Pairwise collision between subsistence levels within one class, or
/// between an attached species and a free or quota species.
pub const CODE_DISTINCT: &str = "HYP6";
/// Collision between a free species and a quota species.
pub const CODE_DISTINCT_XZ: &str = "HYP6_XZ";
/// Attached-species threshold equal to the attached-only substrate level.
pub const CODE_ATTACHED_LEVEL: &str = "HYP7";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub hypothesis: String,
    pub species: Vec<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// True iff `violations` is empty.
    pub ok: bool,
    pub violations: Vec<Violation>,
    /// No species grows faster than dilution at `s_in`; washout is then the
    /// global attractor. Not a violation.
    #[serde(rename = "E0_globally_attractive")]
    pub washout: bool,
    pub n_x: usize,
    pub n_y: usize,
    pub n_z: usize,
}

impl ValidationReport {
    pub fn codes(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.hypothesis.as_str()).collect()
    }
}

/// Checks a structurally sound scenario. Structural problems (bad
/// parameters, duplicate ids) are returned as errors rather than violations.
pub fn validate_scenario(sc: &Scenario, tol_distinct: f64) -> Result<ValidationReport> {
    sc.check_structure()?;
    let (d, s_in) = (sc.d, sc.s_in);
    let xs: Vec<Subsistence> = sc.m_species.iter().map(|m| subsistence_x(m, d, s_in)).collect();
    let ys: Vec<Subsistence> = sc.c_species.iter().map(|c| subsistence_y(c, d, s_in)).collect();
    let zs: Vec<Subsistence> = sc.q_species.iter().map(|q| subsistence_z(q, d, s_in)).collect();

    let n_x = xs.iter().filter(|s| s.value.is_some()).count();
    let n_y = ys.iter().filter(|s| s.value.is_some()).count();
    let n_z = zs.iter().filter(|s| s.value.is_some()).count();

    let mut violations = Vec::new();
    let mut compare = |a: &Subsistence, b: &Subsistence, code: &str| {
        if let (Some(va), Some(vb)) = (a.value, b.value) {
            if (va - vb).abs() <= tol_distinct {
                violations.push(Violation {
                    hypothesis: code.to_string(),
                    species: vec![a.id.clone(), b.id.clone()],
                    detail: format!(
                        "subsistence levels {va} ({:?}) and {vb} ({:?}) differ by at most {tol_distinct}",
                        a.class, b.class
                    ),
                });
            }
        }
    };
    // Attached species pairs are not compared: every viable one has
    // threshold S^y(0) = 0 under the Contois form.
    for (i, a) in xs.iter().enumerate() {
        for b in &xs[i + 1..] {
            compare(a, b, CODE_DISTINCT);
        }
    }
    for (i, a) in zs.iter().enumerate() {
        for b in &zs[i + 1..] {
            compare(a, b, CODE_DISTINCT);
        }
    }
    for y in &ys {
        for a in xs.iter().chain(&zs) {
            compare(a, y, CODE_DISTINCT);
        }
    }
    for a in &xs {
        for b in &zs {
            compare(a, b, CODE_DISTINCT_XZ);
        }
    }

    let members: Vec<&CSpecies> = sc
        .c_species
        .iter()
        .zip(&ys)
        .filter(|(_, s)| s.value.is_some())
        .map(|(c, _)| c)
        .collect();
    let level = s_y_star(&members, d, s_in)?;
    for y in &ys {
        if let Some(v) = y.value {
            if (v - level).abs() <= tol_distinct {
                violations.push(Violation {
                    hypothesis: CODE_ATTACHED_LEVEL.to_string(),
                    species: vec![y.id.clone()],
                    detail: format!("threshold {v} coincides with attached-only substrate level {level}"),
                });
            }
        }
    }

    Ok(ValidationReport {
        ok: violations.is_empty(),
        violations,
        washout: n_x + n_y + n_z == 0,
        n_x,
        n_y,
        n_z,
    })
}

/// Species class and index of every viable species, for callers that need
/// to know which subsistence levels are finite.
pub fn viable_species(sc: &Scenario) -> Vec<(SpeciesClass, usize)> {
    let (d, s_in) = (sc.d, sc.s_in);
    let mut out = Vec::new();
    for (i, m) in sc.m_species.iter().enumerate() {
        if subsistence_x(m, d, s_in).value.is_some() {
            out.push((SpeciesClass::M, i));
        }
    }
    for (j, c) in sc.c_species.iter().enumerate() {
        if subsistence_y(c, d, s_in).value.is_some() {
            out.push((SpeciesClass::C, j));
        }
    }
    for (k, q) in sc.q_species.iter().enumerate() {
        if subsistence_z(q, d, s_in).value.is_some() {
            out.push((SpeciesClass::Q, k));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{MSpecies, QSpecies};

    #[test]
    fn canonical_scenario_is_valid() {
        let sc = Scenario::new(0.5, 3.0)
            .with_m(MSpecies::new("M", 1.0, 2.0).unwrap())
            .with_c(CSpecies::new("C", 1.0, 1.0).unwrap())
            .with_q(QSpecies::droop("Q", 1.0, 1.0, 1.0, 0.5).unwrap());
        let r = validate_scenario(&sc, TOL_DISTINCT).unwrap();
        assert!(r.ok, "{:?}", r.violations);
        assert_eq!((r.n_x, r.n_y, r.n_z), (1, 1, 1));
        assert!(!r.washout);
    }

    #[test]
    fn identical_free_species_collide() {
        let sc = Scenario::new(0.5, 3.0)
            .with_m(MSpecies::new("A", 1.0, 2.0).unwrap())
            .with_m(MSpecies::new("B", 1.0, 2.0).unwrap());
        let r = validate_scenario(&sc, TOL_DISTINCT).unwrap();
        assert!(!r.ok);
        assert_eq!(r.codes(), vec![CODE_DISTINCT]);
        assert_eq!(r.violations[0].species, vec!["A", "B"]);
    }

    #[test]
    fn free_and_quota_collision_has_own_code() {
        // both subsistence levels equal 1
        let sc = Scenario::new(0.5, 3.0)
            .with_m(MSpecies::new("M", 1.0, 1.0).unwrap())
            .with_q(QSpecies::droop("Q", 1.0, 1.0, 1.0, 0.5).unwrap());
        let r = validate_scenario(&sc, TOL_DISTINCT).unwrap();
        assert_eq!(r.codes(), vec![CODE_DISTINCT_XZ]);
    }

    #[test]
    fn several_attached_species_are_allowed() {
        let sc = Scenario::new(0.5, 3.0)
            .with_c(CSpecies::new("C1", 1.0, 1.0).unwrap())
            .with_c(CSpecies::new("C2", 2.0, 3.0).unwrap());
        let r = validate_scenario(&sc, TOL_DISTINCT).unwrap();
        assert!(r.ok);
        assert_eq!(r.n_y, 2);
    }

    #[test]
    fn washout_is_flagged_not_rejected() {
        let sc = Scenario::new(0.5, 3.0)
            .with_m(MSpecies::new("M", 0.4, 1.0).unwrap())
            .with_c(CSpecies::new("C", 0.5, 1.0).unwrap());
        let r = validate_scenario(&sc, TOL_DISTINCT).unwrap();
        assert!(r.ok);
        assert!(r.washout);
        assert_eq!((r.n_x, r.n_y, r.n_z), (0, 0, 0));
        assert!(viable_species(&sc).is_empty());
    }

    #[test]
    fn structural_errors_are_errors() {
        let sc = Scenario::new(-1.0, 3.0);
        assert!(validate_scenario(&sc, TOL_DISTINCT).is_err());
    }

    #[test]
    fn report_serializes_with_flag_name() {
        let r = validate_scenario(&Scenario::new(0.5, 1.0), TOL_DISTINCT).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["E0_globally_attractive"], true);
        assert_eq!(v["ok"], true);
    }
}
