//! Outcome maps over `(D, s_in)` grids and the zone thresholds for a roster
//! with a single attached species.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{intrinsic_x, intrinsic_y, intrinsic_z, predict_outcome, EquilibriumReport, StarClass};
use crate::error::{ModelError, Result};
use crate::mappings::cap_y_unchecked;
use crate::scenario::Scenario;
use crate::validate::{validate_scenario, TOL_DISTINCT};

/// Substrate thresholds splitting the `s_in` axis at fixed `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZoneThresholds {
    /// Attached-species threshold `S^y(0)`; `None` when it can never grow
    /// faster than dilution.
    pub t1: Option<f64>,
    /// `s_f + Y(s_f)` for the lowest free or quota subsistence level `s_f`;
    /// `None` when no free or quota species is viable at this `D`.
    pub t2: Option<f64>,
}

/// Thresholds for a roster with exactly one attached species, evaluated at
/// dilution rate `d` (the scenario's own `s_in` is irrelevant).
pub fn zone_thresholds(sc: &Scenario, d: f64) -> Result<ZoneThresholds> {
    if sc.c_species.len() != 1 {
        return Err(ModelError::InvalidScenario(format!(
            "zone thresholds need exactly one attached species, found {}",
            sc.c_species.len()
        )));
    }
    let c = &sc.c_species[0];
    let t1 = intrinsic_y(c, d);
    let s_f = sc
        .m_species
        .iter()
        .filter_map(|m| intrinsic_x(m, d))
        .chain(sc.q_species.iter().filter_map(|k| intrinsic_z(k, d)))
        .min_by(f64::total_cmp);
    let t2 = s_f.map(|s| s + cap_y_unchecked(c, d, s));
    Ok(ZoneThresholds { t1, t2 })
}

/// Axis specification `min,max,n,lin|log`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
    pub log: bool,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.min];
        }
        let last = (self.n - 1) as f64;
        (0..self.n)
            .map(|i| {
                let u = i as f64 / last;
                if i + 1 == self.n {
                    self.max
                } else if self.log {
                    (self.min.ln() + u * (self.max.ln() - self.min.ln())).exp()
                } else {
                    self.min + u * (self.max - self.min)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridParseError(pub String);

impl fmt::Display for GridParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid grid: {}", self.0)
    }
}

impl std::error::Error for GridParseError {}

impl FromStr for GridSpec {
    type Err = GridParseError;

    fn from_str(text: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let [min, max, n, kind] = parts.as_slice() else {
            return Err(GridParseError(format!("expected min,max,n,lin|log, got {text:?}")));
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| GridParseError(format!("not a number: {s:?}")))
        };
        let (min, max) = (num(min)?, num(max)?);
        let n: usize = n.parse().map_err(|_| GridParseError(format!("not a count: {n:?}")))?;
        let log = match *kind {
            "lin" => false,
            "log" => true,
            other => return Err(GridParseError(format!("spacing must be lin or log, got {other:?}"))),
        };
        if !(min.is_finite() && max.is_finite() && min > 0.0 && max >= min) {
            return Err(GridParseError(format!("need 0 < min <= max, got [{min}, {max}]")));
        }
        if n == 0 {
            return Err(GridParseError("count must be at least 1".to_string()));
        }
        Ok(GridSpec { min, max, n, log })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    #[serde(rename = "D")]
    pub d: f64,
    pub s_in: f64,
    pub s_star: Option<f64>,
    pub s_star_class: Option<StarClass>,
    pub survivors: Vec<String>,
    pub zone: Option<u8>,
    pub washout: bool,
    /// Subsistence levels collide, or `s_in` sits on a zone boundary.
    pub degenerate: bool,
    pub error: Option<String>,
    pub e_star: Option<EquilibriumReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeMap {
    pub d_grid: Vec<f64>,
    pub s_in_grid: Vec<f64>,
    /// Row-major: `D` outer, `s_in` inner.
    pub cells: Vec<Cell>,
}

impl OutcomeMap {
    pub fn cell(&self, i_d: usize, i_s: usize) -> &Cell {
        &self.cells[i_d * self.s_in_grid.len() + i_s]
    }

    /// CSV with header `D,s_in,s_star,s_star_class,zone,survivors`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("D,s_in,s_star,s_star_class,zone,survivors\n");
        for c in &self.cells {
            let class = match (c.s_star_class, c.error.is_some()) {
                (_, true) => "error",
                (Some(StarClass::X), _) => "X",
                (Some(StarClass::Y), _) => "Y",
                (Some(StarClass::Z), _) => "Z",
                (None, _) => "washout",
            };
            let s_star = c.s_star.map(|v| format!("{v:.16e}")).unwrap_or_default();
            let zone = c.zone.map(|z| z.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{:.16e},{:.16e},{},{},{},{}",
                c.d,
                c.s_in,
                s_star,
                class,
                zone,
                c.survivors.join(";")
            )
            .unwrap();
        }
        out
    }
}

fn zone_of(thresholds: Option<ZoneThresholds>, s_in: f64, washout: bool) -> (Option<u8>, bool) {
    if washout {
        return (Some(1), false);
    }
    let Some(ZoneThresholds { t1: Some(_), t2 }) = thresholds else {
        return (None, false);
    };
    match t2 {
        None => (Some(2), false),
        Some(t2) => {
            let on_boundary = (s_in - t2).abs() <= TOL_DISTINCT;
            (Some(if s_in <= t2 { 2 } else { 3 }), on_boundary)
        }
    }
}

/// One cell of the outcome map.
pub fn evaluate_cell(sc: &Scenario, d: f64, s_in: f64) -> Cell {
    let cell_sc = sc.with_controls(d, s_in);
    let mut cell = Cell {
        d,
        s_in,
        s_star: None,
        s_star_class: None,
        survivors: Vec::new(),
        zone: None,
        washout: false,
        degenerate: false,
        error: None,
        e_star: None,
    };
    let report = match validate_scenario(&cell_sc, TOL_DISTINCT) {
        Ok(r) => r,
        Err(e) => {
            cell.error = Some(e.to_string());
            return cell;
        }
    };
    cell.degenerate = !report.ok;
    match predict_outcome(&cell_sc) {
        Ok(p) => {
            cell.s_star = Some(p.s_star);
            cell.s_star_class = p.s_star_class;
            cell.survivors = p.compliant.clone();
            cell.washout = p.washout;
            cell.e_star = Some(p.e_star.report(&cell_sc));
        }
        Err(e) => {
            cell.error = Some(e.to_string());
            return cell;
        }
    }
    let thresholds = zone_thresholds(&cell_sc, d).ok();
    let (zone, boundary) = zone_of(thresholds, s_in, cell.washout);
    cell.zone = zone;
    cell.degenerate |= boundary;
    cell
}

/// Predicted outcome on every grid cell. Cells are evaluated in parallel and
/// assembled in row-major order.
pub fn outcome_map(sc: &Scenario, d_grid: &[f64], s_in_grid: &[f64]) -> Result<OutcomeMap> {
    sc.check_structure()?;
    for (name, g) in [("D", d_grid), ("s_in", s_in_grid)] {
        if g.is_empty() {
            return Err(ModelError::InvalidScenario(format!("{name} grid is empty")));
        }
        if g.iter().any(|v| !(v.is_finite() && *v > 0.0)) || g.windows(2).any(|w| w[0] > w[1]) {
            return Err(ModelError::InvalidScenario(format!(
                "{name} grid must be positive and sorted"
            )));
        }
    }
    let pairs: Vec<(f64, f64)> = d_grid
        .iter()
        .flat_map(|&d| s_in_grid.iter().map(move |&s| (d, s)))
        .collect();
    let cells = pairs.par_iter().map(|&(d, s_in)| evaluate_cell(sc, d, s_in)).collect();
    Ok(OutcomeMap {
        d_grid: d_grid.to_vec(),
        s_in_grid: s_in_grid.to_vec(),
        cells,
    })
}
