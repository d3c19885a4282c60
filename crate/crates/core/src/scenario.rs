//! Scenario description, state vectors, and the yield normalization.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::rates::{check_positive_param, Contois, Monod, QuotaGrowth, Uptake};

/// Species class: free (Monod), attached (Contois) or quota (Droop-type).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeciesClass {
    M,
    C,
    Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpecies<RawM>", into = "RawSpecies<RawM>")]
pub struct MSpecies {
    pub id: String,
    pub growth: Monod,
    /// Biomass produced per unit substrate (`a_i`).
    pub yield_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpecies<RawC>", into = "RawSpecies<RawC>")]
pub struct CSpecies {
    pub id: String,
    pub growth: Contois,
    /// Biomass produced per unit substrate (`b_j`).
    pub yield_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpecies<RawQ>", into = "RawSpecies<RawQ>")]
pub struct QSpecies {
    pub id: String,
    pub uptake: Uptake,
    pub growth: QuotaGrowth,
}

impl MSpecies {
    pub fn new(id: impl Into<String>, alpha_max: f64, k_s: f64) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            growth: Monod::new(alpha_max, k_s)?,
            yield_a: 1.0,
        })
    }
}

impl CSpecies {
    pub fn new(id: impl Into<String>, beta_max: f64, k_s: f64) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            growth: Contois::new(beta_max, k_s)?,
            yield_b: 1.0,
        })
    }
}

impl QSpecies {
    /// Michaelis-Menten uptake with Droop growth.
    pub fn droop(id: impl Into<String>, rho_max: f64, k_s: f64, gamma_bar: f64, q0: f64) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            uptake: Uptake::new(rho_max, k_s)?,
            growth: QuotaGrowth::droop(gamma_bar, q0)?,
        })
    }

    /// Michaelis-Menten uptake with Caperon-Meyer growth.
    pub fn caperon_meyer(
        id: impl Into<String>,
        rho_max: f64,
        k_s: f64,
        gamma_bar: f64,
        q0: f64,
        k_q: f64,
    ) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            uptake: Uptake::new(rho_max, k_s)?,
            growth: QuotaGrowth::caperon_meyer(gamma_bar, q0, k_q)?,
        })
    }

    pub fn q0(&self) -> f64 {
        self.growth.q0()
    }
}

// JSON wire forms: `{ "id": ..., "params": { ... } }`.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecies<P> {
    id: String,
    params: P,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawM {
    alpha_max: f64,
    #[serde(rename = "K_s")]
    k_s: f64,
    #[serde(rename = "yield", default = "one")]
    yield_a: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawC {
    beta_max: f64,
    #[serde(rename = "K_s")]
    k_s: f64,
    #[serde(rename = "yield", default = "one")]
    yield_b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQ {
    rho_max: f64,
    #[serde(rename = "K_s")]
    k_s: f64,
    gamma_bar: f64,
    #[serde(rename = "Q0")]
    q0: f64,
    /// Present only for Caperon-Meyer growth.
    #[serde(rename = "K_q", default, skip_serializing_if = "Option::is_none")]
    k_q: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn labelled<T>(id: &str, r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| format!("species {id:?}: {e}"))
}

impl TryFrom<RawSpecies<RawM>> for MSpecies {
    type Error = String;
    fn try_from(r: RawSpecies<RawM>) -> std::result::Result<Self, String> {
        let growth = labelled(&r.id, Monod::new(r.params.alpha_max, r.params.k_s))?;
        labelled(&r.id, check_positive_param("yield", r.params.yield_a))?;
        Ok(Self {
            id: r.id,
            growth,
            yield_a: r.params.yield_a,
        })
    }
}

impl From<MSpecies> for RawSpecies<RawM> {
    fn from(m: MSpecies) -> Self {
        RawSpecies {
            id: m.id,
            params: RawM {
                alpha_max: m.growth.alpha_max,
                k_s: m.growth.k_s,
                yield_a: m.yield_a,
            },
        }
    }
}

impl TryFrom<RawSpecies<RawC>> for CSpecies {
    type Error = String;
    fn try_from(r: RawSpecies<RawC>) -> std::result::Result<Self, String> {
        let growth = labelled(&r.id, Contois::new(r.params.beta_max, r.params.k_s))?;
        labelled(&r.id, check_positive_param("yield", r.params.yield_b))?;
        Ok(Self {
            id: r.id,
            growth,
            yield_b: r.params.yield_b,
        })
    }
}

impl From<CSpecies> for RawSpecies<RawC> {
    fn from(c: CSpecies) -> Self {
        RawSpecies {
            id: c.id,
            params: RawC {
                beta_max: c.growth.beta_max,
                k_s: c.growth.k_s,
                yield_b: c.yield_b,
            },
        }
    }
}

impl TryFrom<RawSpecies<RawQ>> for QSpecies {
    type Error = String;
    fn try_from(r: RawSpecies<RawQ>) -> std::result::Result<Self, String> {
        let p = r.params;
        let sp = match p.k_q {
            None => QSpecies::droop(r.id.clone(), p.rho_max, p.k_s, p.gamma_bar, p.q0),
            Some(k_q) => QSpecies::caperon_meyer(r.id.clone(), p.rho_max, p.k_s, p.gamma_bar, p.q0, k_q),
        };
        labelled(&r.id, sp)
    }
}

impl From<QSpecies> for RawSpecies<RawQ> {
    fn from(q: QSpecies) -> Self {
        let k_q = match q.growth {
            QuotaGrowth::Droop { .. } => None,
            QuotaGrowth::CaperonMeyer { k_q, .. } => Some(k_q),
        };
        RawSpecies {
            id: q.id,
            params: RawQ {
                rho_max: q.uptake.rho_max,
                k_s: q.uptake.k_s,
                gamma_bar: q.growth.gamma_bar(),
                q0: q.growth.q0(),
                k_q,
            },
        }
    }
}

/// Chemostat controls plus the three species rosters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Dilution rate.
    #[serde(rename = "D")]
    pub d: f64,
    /// Input substrate concentration.
    pub s_in: f64,
    #[serde(default)]
    pub m_species: Vec<MSpecies>,
    #[serde(default)]
    pub c_species: Vec<CSpecies>,
    #[serde(default)]
    pub q_species: Vec<QSpecies>,
}

impl Scenario {
    pub fn new(d: f64, s_in: f64) -> Self {
        Self {
            d,
            s_in,
            m_species: Vec::new(),
            c_species: Vec::new(),
            q_species: Vec::new(),
        }
    }

    pub fn with_m(mut self, m: MSpecies) -> Self {
        self.m_species.push(m);
        self
    }

    pub fn with_c(mut self, c: CSpecies) -> Self {
        self.c_species.push(c);
        self
    }

    pub fn with_q(mut self, q: QSpecies) -> Self {
        self.q_species.push(q);
        self
    }

    /// Same rosters under different controls.
    pub fn with_controls(&self, d: f64, s_in: f64) -> Self {
        Self {
            d,
            s_in,
            ..self.clone()
        }
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn layout(&self) -> Layout {
        Layout {
            nx: self.m_species.len(),
            ny: self.c_species.len(),
            nz: self.q_species.len(),
        }
    }

    /// Structural checks: positive controls, valid parameters, unique ids.
    pub fn check_structure(&self) -> Result<()> {
        check_positive_param("D", self.d)?;
        check_positive_param("s_in", self.s_in)?;
        for m in &self.m_species {
            m.growth.check()?;
            check_positive_param("yield", m.yield_a)?;
        }
        for c in &self.c_species {
            c.growth.check()?;
            check_positive_param("yield", c.yield_b)?;
        }
        for q in &self.q_species {
            q.uptake.check()?;
            q.growth.check()?;
        }
        let mut seen = HashSet::new();
        for id in self.species_ids() {
            if !seen.insert(id) {
                return Err(ModelError::InvalidScenario(format!("duplicate species id {id:?}")));
            }
        }
        Ok(())
    }

    /// Ids in state order: M, then C, then Q.
    pub fn species_ids(&self) -> impl Iterator<Item = &str> {
        self.m_species
            .iter()
            .map(|m| m.id.as_str())
            .chain(self.c_species.iter().map(|c| c.id.as_str()))
            .chain(self.q_species.iter().map(|q| q.id.as_str()))
    }

    pub fn is_normalized(&self) -> bool {
        self.m_species.iter().all(|m| m.yield_a == 1.0) && self.c_species.iter().all(|c| c.yield_b == 1.0)
    }

    /// Change of variables `x~ = x/a`, `y~ = y/b` giving unit yields.
    ///
    /// Monod rates are unchanged. A Contois rate evaluated at `y = b y~`
    /// is again a Contois rate in `y~` with ratio constant `K_s * b`.
    pub fn normalize(&self) -> Result<(Scenario, Normalization)> {
        self.check_structure()?;
        let mut out = self.clone();
        for m in &mut out.m_species {
            m.yield_a = 1.0;
        }
        for c in &mut out.c_species {
            c.growth.k_s *= c.yield_b;
            c.yield_b = 1.0;
        }
        let norm = Normalization {
            a: self.m_species.iter().map(|m| m.yield_a).collect(),
            b: self.c_species.iter().map(|c| c.yield_b).collect(),
        };
        Ok((out, norm))
    }
}

/// Scale factors relating original and normalized biomasses.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Normalization {
    pub fn to_normalized(&self, st: &State) -> State {
        let mut out = st.clone();
        out.x.iter_mut().zip(&self.a).for_each(|(x, a)| *x /= a);
        out.y.iter_mut().zip(&self.b).for_each(|(y, b)| *y /= b);
        out
    }

    pub fn to_original(&self, st: &State) -> State {
        let mut out = st.clone();
        out.x.iter_mut().zip(&self.a).for_each(|(x, a)| *x *= a);
        out.y.iter_mut().zip(&self.b).for_each(|(y, b)| *y *= b);
        out
    }

    /// The normalization with reciprocal yields.
    pub fn inverse(&self) -> Normalization {
        Normalization {
            a: self.a.iter().map(|a| 1.0 / a).collect(),
            b: self.b.iter().map(|b| 1.0 / b).collect(),
        }
    }
}

/// Index layout of the flat state vector `(s, x.., y.., z.., q..)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        1 + self.nx + self.ny + 2 * self.nz
    }
    pub fn x(&self, i: usize) -> usize {
        1 + i
    }
    pub fn y(&self, j: usize) -> usize {
        1 + self.nx + j
    }
    pub fn z(&self, k: usize) -> usize {
        1 + self.nx + self.ny + k
    }
    pub fn q(&self, k: usize) -> usize {
        1 + self.nx + self.ny + self.nz + k
    }
}

/// Full model state. Biomasses `x`, `y` are in substrate units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    pub s: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub q: Vec<f64>,
}

impl State {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            s: 0.0,
            x: vec![0.0; layout.nx],
            y: vec![0.0; layout.ny],
            z: vec![0.0; layout.nz],
            q: vec![0.0; layout.nz],
        }
    }

    pub fn from_slice(layout: Layout, v: &[f64]) -> Self {
        assert_eq!(v.len(), layout.dim(), "state vector length");
        let (nx, ny, nz) = (layout.nx, layout.ny, layout.nz);
        Self {
            s: v[0],
            x: v[1..1 + nx].to_vec(),
            y: v[1 + nx..1 + nx + ny].to_vec(),
            z: v[1 + nx + ny..1 + nx + ny + nz].to_vec(),
            q: v[1 + nx + ny + nz..].to_vec(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.x.len() + self.y.len() + 2 * self.z.len());
        v.push(self.s);
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.y);
        v.extend_from_slice(&self.z);
        v.extend_from_slice(&self.q);
        v
    }

    /// Checks dimensions against the scenario and that every entry is
    /// finite and nonnegative.
    pub fn check(&self, layout: Layout) -> Result<()> {
        if self.x.len() != layout.nx
            || self.y.len() != layout.ny
            || self.z.len() != layout.nz
            || self.q.len() != layout.nz
        {
            return Err(ModelError::InvalidState(format!(
                "dimensions (x {}, y {}, z {}, q {}) do not match roster ({}, {}, {})",
                self.x.len(),
                self.y.len(),
                self.z.len(),
                self.q.len(),
                layout.nx,
                layout.ny,
                layout.nz
            )));
        }
        for v in self.to_vec() {
            if !v.is_finite() {
                return Err(ModelError::NonFinite("state"));
            }
            if v < 0.0 {
                return Err(ModelError::InvalidState(format!("negative component {v}")));
            }
        }
        Ok(())
    }

    /// Total intra- and extracellular substrate `M`.
    pub fn total_substrate(&self) -> f64 {
        self.s
            + self.x.iter().sum::<f64>()
            + self.y.iter().sum::<f64>()
            + self.z.iter().zip(&self.q).map(|(z, q)| z * q).sum::<f64>()
    }

    /// Sup-norm distance between two states of the same shape.
    pub fn distance(&self, other: &State) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = r#"{
        "D": 0.5, "s_in": 3.0,
        "m_species": [{"id": "M", "params": {"alpha_max": 1.0, "K_s": 2.0}}],
        "c_species": [{"id": "C", "params": {"beta_max": 1.0, "K_s": 1.0}}],
        "q_species": [{"id": "Q", "params": {"rho_max": 1.0, "K_s": 1.0, "gamma_bar": 1.0, "Q0": 0.5}}]
    }"#;

    #[test]
    fn parses_scenario_json() {
        let sc = Scenario::from_json(CANONICAL).unwrap();
        assert_eq!(sc.d, 0.5);
        assert_eq!(sc.layout(), Layout { nx: 1, ny: 1, nz: 1 });
        assert!(matches!(sc.q_species[0].growth, QuotaGrowth::Droop { .. }));
        sc.check_structure().unwrap();
        let back: Scenario = serde_json::from_str(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_params() {
        let bad = CANONICAL.replace("\"s_in\"", "\"S_in\"");
        assert!(Scenario::from_json(&bad).is_err());
        let bad = CANONICAL.replace("\"beta_max\": 1.0", "\"beta_max\": -1.0");
        let err = Scenario::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("beta_max"), "{err}");
        let bad = CANONICAL.replace("\"Q0\": 0.5", "\"Q0\": 0.5, \"extra\": 1");
        assert!(Scenario::from_json(&bad).is_err());
    }

    #[test]
    fn caperon_meyer_selected_by_k_q() {
        let text = CANONICAL.replace("\"Q0\": 0.5", "\"Q0\": 0.5, \"K_q\": 0.2");
        let sc = Scenario::from_json(&text).unwrap();
        assert!(matches!(
            sc.q_species[0].growth,
            QuotaGrowth::CaperonMeyer { k_q, .. } if k_q == 0.2
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let sc = Scenario::new(0.5, 1.0)
            .with_m(MSpecies::new("a", 1.0, 1.0).unwrap())
            .with_c(CSpecies::new("a", 1.0, 1.0).unwrap());
        assert!(sc.check_structure().is_err());
    }

    #[test]
    fn normalization_identity_and_scaling() {
        let sc = Scenario::from_json(CANONICAL).unwrap();
        let (n, norm) = sc.normalize().unwrap();
        assert_eq!(n, sc);

        let mut sc2 = sc.clone();
        sc2.m_species[0].yield_a = 2.0;
        sc2.c_species[0].yield_b = 4.0;
        let (n2, norm2) = sc2.normalize().unwrap();
        assert!(n2.is_normalized());
        assert_eq!(n2.c_species[0].growth.k_s, 4.0);
        let st = State {
            s: 1.0,
            x: vec![4.0],
            y: vec![2.0],
            z: vec![1.0],
            q: vec![1.0],
        };
        let t = norm2.to_normalized(&st);
        assert_eq!(t.x[0], 2.0);
        assert_eq!(t.y[0], 0.5);
        assert_eq!(norm.to_normalized(&st), st);
    }

    #[test]
    fn flat_layout_round_trip() {
        let l = Layout { nx: 2, ny: 1, nz: 2 };
        let v: Vec<f64> = (0..l.dim()).map(|i| i as f64).collect();
        let st = State::from_slice(l, &v);
        assert_eq!(st.to_vec(), v);
        assert_eq!(st.q, vec![v[l.q(0)], v[l.q(1)]]);
        assert_eq!(st.y[0], v[l.y(0)]);
    }
}
