//! Subsistence concentrations, equilibrium enumeration and the predicted
//! globally attracting outcome.
//!
//! All routines expect a normalized scenario (unit yields).

use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::mappings::{cap_q, cap_y_ds, cap_y_unchecked, q_max, s_of_q, s_of_y};
use crate::roots::newton_bisection;
use crate::scenario::{CSpecies, MSpecies, QSpecies, Scenario, SpeciesClass, State};
use crate::validate::TOL_DISTINCT;

/// Hard cap on the number of viable attached species for full subset
/// enumeration.
pub const MAX_SUBSET_SPECIES: usize = 12;

/// Subsistence concentration of one species. For attached species the
/// stored value is `S^y(0)`, the threshold above which it is compliant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subsistence {
    pub id: String,
    pub class: SpeciesClass,
    /// `None` when the species cannot persist below `s_in`.
    pub value: Option<f64>,
}

/// Root of `alpha(s) = D`, ignoring `s_in`.
pub fn intrinsic_x(m: &MSpecies, d: f64) -> Option<f64> {
    m.growth.inverse(d)
}

/// Root of `gamma(Q(s)) = D`, ignoring `s_in`: first `q* = gamma^-1(D)`,
/// then `s* = S^z(q*)` provided `q* < Q^m`.
pub fn intrinsic_z(k: &QSpecies, d: f64) -> Option<f64> {
    let q_star = k.growth.inverse(d)?;
    if q_star >= q_max(k) {
        return None;
    }
    s_of_q(k, q_star).ok()
}

/// `S^y(0)`, ignoring `s_in`.
pub fn intrinsic_y(c: &CSpecies, d: f64) -> Option<f64> {
    s_of_y(c, d, 0.0).finite()
}

fn below(v: Option<f64>, s_in: f64) -> Option<f64> {
    v.filter(|&s| s < s_in)
}

pub fn subsistence_x(m: &MSpecies, d: f64, s_in: f64) -> Subsistence {
    Subsistence {
        id: m.id.clone(),
        class: SpeciesClass::M,
        value: below(intrinsic_x(m, d), s_in),
    }
}

pub fn subsistence_z(k: &QSpecies, d: f64, s_in: f64) -> Subsistence {
    Subsistence {
        id: k.id.clone(),
        class: SpeciesClass::Q,
        value: below(intrinsic_z(k, d), s_in),
    }
}

pub fn subsistence_y(c: &CSpecies, d: f64, s_in: f64) -> Subsistence {
    Subsistence {
        id: c.id.clone(),
        class: SpeciesClass::C,
        value: below(intrinsic_y(c, d), s_in),
    }
}

/// Substrate level of the attached-only equilibrium of the set `g`:
/// the root of `s + sum_j Y_j(s) = s_in`. Returns `s_in` for an empty set.
pub fn s_y_star(g: &[&CSpecies], d: f64, s_in: f64) -> Result<f64> {
    if g.is_empty() {
        return Ok(s_in);
    }
    let slope: f64 = g.iter().map(|c| cap_y_ds(c, d)).sum();
    newton_bisection(
        |s| {
            let total: f64 = g.iter().map(|c| cap_y_unchecked(c, d, s)).sum();
            (s + total - s_in, 1.0 + slope)
        },
        0.0,
        s_in,
        1e-12,
    )
}

/// Borrowed reference to a species of any class.
#[derive(Debug, Clone, Copy)]
pub enum SpeciesRef<'a> {
    M(&'a MSpecies),
    C(&'a CSpecies),
    Q(&'a QSpecies),
}

/// Whether the species can grow exactly at rate `D` at substrate `s0`.
///
/// Free and quota species must have their subsistence concentration at `s0`
/// (within [`TOL_DISTINCT`]); attached species only need `S^y(0) < s0`.
pub fn is_compliant(species: SpeciesRef<'_>, s0: f64, d: f64) -> bool {
    match species {
        SpeciesRef::M(m) => intrinsic_x(m, d).is_some_and(|s| (s - s0).abs() <= TOL_DISTINCT),
        SpeciesRef::Q(k) => intrinsic_z(k, d).is_some_and(|s| (s - s0).abs() <= TOL_DISTINCT),
        SpeciesRef::C(c) => intrinsic_y(c, d).is_some_and(|s| s < s0),
    }
}

/// Equilibrium class. Indices refer to positions in the scenario rosters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EquilibriumClass {
    /// Washout.
    E0,
    /// Free species `i` alone.
    Ex(usize),
    /// Quota species `k` alone.
    Ez(usize),
    /// Attached species in the set.
    Ey(Vec<usize>),
    /// Free species with attached species.
    Exy(usize, Vec<usize>),
    /// Quota species with attached species.
    Ezy(usize, Vec<usize>),
}

impl EquilibriumClass {
    fn rank(&self) -> u8 {
        match self {
            EquilibriumClass::E0 => 0,
            EquilibriumClass::Ex(_) => 1,
            EquilibriumClass::Ez(_) => 2,
            EquilibriumClass::Ey(_) => 3,
            EquilibriumClass::Exy(..) => 4,
            EquilibriumClass::Ezy(..) => 5,
        }
    }

    /// Human-readable label using species ids, e.g. `Ezy(Q1;{C1,C2})`.
    pub fn label(&self, sc: &Scenario) -> String {
        let set = |g: &[usize]| {
            let ids: Vec<&str> = g.iter().map(|&j| sc.c_species[j].id.as_str()).collect();
            format!("{{{}}}", ids.join(","))
        };
        match self {
            EquilibriumClass::E0 => "E0".to_string(),
            EquilibriumClass::Ex(i) => format!("Ex({})", sc.m_species[*i].id),
            EquilibriumClass::Ez(k) => format!("Ez({})", sc.q_species[*k].id),
            EquilibriumClass::Ey(g) => format!("Ey{}", set(g)),
            EquilibriumClass::Exy(i, g) => format!("Exy({};{})", sc.m_species[*i].id, set(g)),
            EquilibriumClass::Ezy(k, g) => format!("Ezy({};{})", sc.q_species[*k].id, set(g)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub class: EquilibriumClass,
    pub state: State,
    /// Ids of species with positive biomass.
    pub survivors: Vec<String>,
    pub s_eq: f64,
    /// Set for coexistence equilibria whose free-species biomass is negative.
    pub outside_positive_orthant: bool,
}

/// JSON form of an equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub class: String,
    pub s: f64,
    pub state: State,
    pub survivors: Vec<String>,
    pub flags: Vec<String>,
}

impl Equilibrium {
    fn new(sc: &Scenario, class: EquilibriumClass, state: State) -> Self {
        let survivors = survivors_of(sc, &state);
        let outside = state.to_vec().iter().any(|&v| v < 0.0);
        Self {
            class,
            s_eq: state.s,
            state,
            survivors,
            outside_positive_orthant: outside,
        }
    }

    pub fn flags(&self) -> Vec<String> {
        let mut f = Vec::new();
        if self.outside_positive_orthant {
            f.push("outside_positive_orthant".to_string());
        }
        f
    }

    pub fn report(&self, sc: &Scenario) -> EquilibriumReport {
        EquilibriumReport {
            class: self.class.label(sc),
            s: self.s_eq,
            state: self.state.clone(),
            survivors: self.survivors.clone(),
            flags: self.flags(),
        }
    }
}

fn survivors_of(sc: &Scenario, st: &State) -> Vec<String> {
    let mut out = Vec::new();
    for (m, &x) in sc.m_species.iter().zip(&st.x) {
        if x > 0.0 {
            out.push(m.id.clone());
        }
    }
    for (c, &y) in sc.c_species.iter().zip(&st.y) {
        if y > 0.0 {
            out.push(c.id.clone());
        }
    }
    for (k, &z) in sc.q_species.iter().zip(&st.z) {
        if z > 0.0 {
            out.push(k.id.clone());
        }
    }
    out
}

/// State at substrate `s` with no biomass and all quotas at `Q(s)`.
fn substrate_only(sc: &Scenario, s: f64) -> State {
    let mut st = State::zeros(sc.layout());
    st.s = s;
    for (q, k) in st.q.iter_mut().zip(&sc.q_species) {
        *q = cap_q(k, s);
    }
    st
}

/// Indices of attached species compliant at `s` (those with `S^y(0) < s`).
fn compliant_c(sc: &Scenario, s: f64) -> Vec<usize> {
    (0..sc.c_species.len())
        .filter(|&j| is_compliant(SpeciesRef::C(&sc.c_species[j]), s, sc.d))
        .collect()
}

/// Attached-only equilibrium for the set `g`. The class records the members
/// that end with positive biomass.
fn attached_equilibrium(sc: &Scenario, g: &[usize]) -> Result<Equilibrium> {
    let members: Vec<&CSpecies> = g.iter().map(|&j| &sc.c_species[j]).collect();
    let s = s_y_star(&members, sc.d, sc.s_in)?;
    let mut st = substrate_only(sc, s);
    let mut present = Vec::new();
    for &j in g {
        let y = cap_y_unchecked(&sc.c_species[j], sc.d, s);
        st.y[j] = y;
        if y > 0.0 {
            present.push(j);
        }
    }
    Ok(Equilibrium::new(sc, EquilibriumClass::Ey(present), st))
}

/// Free species at substrate `s` together with the attached set `g`.
fn free_with_attached(sc: &Scenario, free: Free, s: f64, g: &[usize]) -> Equilibrium {
    let mut st = substrate_only(sc, s);
    let mut attached = 0.0;
    for &j in g {
        let y = cap_y_unchecked(&sc.c_species[j], sc.d, s);
        st.y[j] = y;
        attached += y;
    }
    let residual = sc.s_in - s - attached;
    let class = match free {
        Free::X(i) => {
            st.x[i] = residual;
            if g.is_empty() {
                EquilibriumClass::Ex(i)
            } else {
                EquilibriumClass::Exy(i, g.to_vec())
            }
        }
        Free::Z(k) => {
            st.z[k] = residual / st.q[k];
            if g.is_empty() {
                EquilibriumClass::Ez(k)
            } else {
                EquilibriumClass::Ezy(k, g.to_vec())
            }
        }
    };
    Equilibrium::new(sc, class, st)
}

#[derive(Debug, Clone, Copy)]
enum Free {
    X(usize),
    Z(usize),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EnumerateOptions {
    /// Enumerate every subset of viable attached species, not only the
    /// maximal one.
    pub all_subsets: bool,
}

fn viable_x(sc: &Scenario) -> Vec<(usize, f64)> {
    sc.m_species
        .iter()
        .enumerate()
        .filter_map(|(i, m)| subsistence_x(m, sc.d, sc.s_in).value.map(|s| (i, s)))
        .collect()
}

fn viable_z(sc: &Scenario) -> Vec<(usize, f64)> {
    sc.q_species
        .iter()
        .enumerate()
        .filter_map(|(k, q)| subsistence_z(q, sc.d, sc.s_in).value.map(|s| (k, s)))
        .collect()
}

fn viable_y(sc: &Scenario) -> Vec<usize> {
    sc.c_species
        .iter()
        .enumerate()
        .filter(|(_, c)| subsistence_y(c, sc.d, sc.s_in).value.is_some())
        .map(|(j, _)| j)
        .collect()
}

fn same_state(a: &State, b: &State) -> bool {
    a.distance(b) <= 1e-12 * (1.0 + a.s.abs())
}

/// All equilibria of the scenario, sorted by class then substrate level.
///
/// Identical states reached through different constructions are merged,
/// keeping the first (simplest) class.
pub fn enumerate_equilibria(sc: &Scenario, opts: EnumerateOptions) -> Result<Vec<Equilibrium>> {
    sc.check_structure()?;
    let mut out: Vec<Equilibrium> = Vec::new();
    let mut push = |e: Equilibrium| {
        if !out.iter().any(|o| same_state(&o.state, &e.state)) {
            out.push(e);
        }
    };

    push(Equilibrium::new(sc, EquilibriumClass::E0, substrate_only(sc, sc.s_in)));

    let xs = viable_x(sc);
    let zs = viable_z(sc);
    let ys = viable_y(sc);

    for &(i, s) in &xs {
        push(free_with_attached(sc, Free::X(i), s, &[]));
    }
    for &(k, s) in &zs {
        push(free_with_attached(sc, Free::Z(k), s, &[]));
    }

    if opts.all_subsets {
        if ys.len() > MAX_SUBSET_SPECIES {
            return Err(ModelError::InvalidScenario(format!(
                "{} viable attached species exceed the subset enumeration cap of {}",
                ys.len(),
                MAX_SUBSET_SPECIES
            )));
        }
        for mask in 1u32..(1u32 << ys.len()) {
            let g: Vec<usize> = ys
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, &j)| j)
                .collect();
            push(attached_equilibrium(sc, &g)?);
        }
    } else if !ys.is_empty() {
        push(attached_equilibrium(sc, &ys)?);
    }

    for &(i, s) in &xs {
        let g = compliant_c(sc, s);
        if !g.is_empty() {
            push(free_with_attached(sc, Free::X(i), s, &g));
        }
    }
    for &(k, s) in &zs {
        let g = compliant_c(sc, s);
        if !g.is_empty() {
            push(free_with_attached(sc, Free::Z(k), s, &g));
        }
    }

    out.sort_by(|a, b| {
        a.class
            .rank()
            .cmp(&b.class.rank())
            .then(a.s_eq.total_cmp(&b.s_eq))
            .then(a.class.cmp(&b.class))
    });
    Ok(out)
}

/// Which family attains the lowest subsistence level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StarClass {
    X,
    Y,
    Z,
}

/// Predicted limit of every trajectory with positive initial biomass for all
/// compliant species.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub s_star: f64,
    /// `None` for washout.
    pub s_star_class: Option<StarClass>,
    pub s_x_star: f64,
    pub s_y_star: f64,
    pub s_z_star: f64,
    pub e_star: Equilibrium,
    /// Ids of the species surviving at `e_star`.
    pub compliant: Vec<String>,
    /// No species can grow faster than dilution at `s_in`.
    pub washout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionReport {
    pub s_star: f64,
    pub s_star_class: Option<StarClass>,
    pub s_x_star: f64,
    pub s_y_star: f64,
    pub s_z_star: f64,
    pub washout: bool,
    pub compliant: Vec<String>,
    pub e_star: EquilibriumReport,
}

impl Prediction {
    pub fn report(&self, sc: &Scenario) -> PredictionReport {
        PredictionReport {
            s_star: self.s_star,
            s_star_class: self.s_star_class,
            s_x_star: self.s_x_star,
            s_y_star: self.s_y_star,
            s_z_star: self.s_z_star,
            washout: self.washout,
            compliant: self.compliant.clone(),
            e_star: self.e_star.report(sc),
        }
    }
}

/// Lowest subsistence level `s*` and the equilibrium holding every
/// `s*`-compliant species.
pub fn predict_outcome(sc: &Scenario) -> Result<Prediction> {
    sc.check_structure()?;
    let xs = viable_x(sc);
    let zs = viable_z(sc);
    let ys = viable_y(sc);

    let best = |v: &[(usize, f64)]| v.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1));
    let best_x = best(&xs);
    let best_z = best(&zs);
    let members: Vec<&CSpecies> = ys.iter().map(|&j| &sc.c_species[j]).collect();
    let s_y = s_y_star(&members, sc.d, sc.s_in)?;
    let s_x = best_x.map_or(sc.s_in, |b| b.1);
    let s_z = best_z.map_or(sc.s_in, |b| b.1);

    let washout = xs.is_empty() && zs.is_empty() && ys.is_empty();
    let (class, e_star) = if washout {
        (
            None,
            Equilibrium::new(sc, EquilibriumClass::E0, substrate_only(sc, sc.s_in)),
        )
    } else if s_y <= s_x && s_y <= s_z {
        (Some(StarClass::Y), attached_equilibrium(sc, &ys)?)
    } else if s_x < s_z {
        let (i, s) = best_x.expect("s_x < s_in implies a viable free species");
        let g = compliant_c(sc, s);
        (Some(StarClass::X), free_with_attached(sc, Free::X(i), s, &g))
    } else {
        let (k, s) = best_z.expect("s_z < s_in implies a viable quota species");
        let g = compliant_c(sc, s);
        (Some(StarClass::Z), free_with_attached(sc, Free::Z(k), s, &g))
    };

    Ok(Prediction {
        s_star: e_star.s_eq,
        s_star_class: class,
        s_x_star: s_x,
        s_y_star: s_y,
        s_z_star: s_z,
        compliant: e_star.survivors.clone(),
        e_star,
        washout,
    })
}
