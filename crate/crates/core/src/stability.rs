//! Jacobians of the model and stability classification of equilibria.
//!
//! The reduced Jacobian acts on `(x.., y.., z.., q..)` restricted to the
//! invariant surface `M = s_in`, with `s = s_in - sum x - sum y - sum q z`.
//! At an equilibrium each absent species contributes an eigenvalue that can
//! be read off directly; only the block of present species needs a numerical
//! eigenvalue solve.

use num_complex::Complex64;
use serde::Serialize;

use crate::equilibria::Equilibrium;
use crate::error::{ModelError, Result};
use crate::linalg::{eigenvalues, Matrix};
use crate::scenario::{Layout, Scenario, State};

/// Default threshold on real parts separating stable, marginal and unstable.
pub const TOL_EIG: f64 = 1e-7;
/// Allowed distance of a state from the surface `M = s_in`, relative to
/// `1 + s_in`.
pub const SURFACE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    pub matrix: Matrix,
    /// Coordinate name of each row and column, e.g. `s`, `x_M1`, `q_Q2`.
    pub labels: Vec<String>,
}

fn coordinate_labels(sc: &Scenario, with_s: bool) -> Vec<String> {
    let mut out = Vec::new();
    if with_s {
        out.push("s".to_string());
    }
    out.extend(sc.m_species.iter().map(|m| format!("x_{}", m.id)));
    out.extend(sc.c_species.iter().map(|c| format!("y_{}", c.id)));
    out.extend(sc.q_species.iter().map(|k| format!("z_{}", k.id)));
    out.extend(sc.q_species.iter().map(|k| format!("q_{}", k.id)));
    out
}

/// Rates and their partial derivatives at one point.
struct Local {
    alpha: Vec<f64>,
    alpha_s: Vec<f64>,
    beta: Vec<f64>,
    beta_s: Vec<f64>,
    beta_y: Vec<f64>,
    rho: Vec<f64>,
    rho_s: Vec<f64>,
    gamma: Vec<f64>,
    gamma_q: Vec<f64>,
    f_q: Vec<f64>,
}

impl Local {
    fn at(sc: &Scenario, s: f64, st: &State) -> Result<Self> {
        for &y in &st.y {
            if s == 0.0 && y == 0.0 {
                return Err(ModelError::UndefinedPoint);
            }
        }
        let c = &sc.c_species;
        Ok(Self {
            alpha: sc.m_species.iter().map(|m| m.growth.value(s)).collect(),
            alpha_s: sc.m_species.iter().map(|m| m.growth.d_ds(s)).collect(),
            beta: c.iter().zip(&st.y).map(|(c, &y)| c.growth.value(s, y)).collect(),
            beta_s: c.iter().zip(&st.y).map(|(c, &y)| c.growth.d_ds(s, y)).collect(),
            beta_y: c.iter().zip(&st.y).map(|(c, &y)| c.growth.d_dy(s, y)).collect(),
            rho: sc.q_species.iter().map(|k| k.uptake.value(s)).collect(),
            rho_s: sc.q_species.iter().map(|k| k.uptake.d_ds(s)).collect(),
            gamma: sc
                .q_species
                .iter()
                .zip(&st.q)
                .map(|(k, &q)| k.growth.value(q))
                .collect(),
            gamma_q: sc.q_species.iter().zip(&st.q).map(|(k, &q)| k.growth.d_dq(q)).collect(),
            f_q: sc
                .q_species
                .iter()
                .zip(&st.q)
                .map(|(k, &q)| k.growth.df_dq(q))
                .collect(),
        })
    }
}

fn check_shape(sc: &Scenario, st: &State) -> Result<Layout> {
    let l = sc.layout();
    if st.x.len() != l.nx || st.y.len() != l.ny || st.z.len() != l.nz || st.q.len() != l.nz {
        return Err(ModelError::InvalidState("dimensions do not match roster".to_string()));
    }
    if st.to_vec().iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("state"));
    }
    Ok(l)
}

/// Jacobian of the reduced system on the surface `M = s_in`.
///
/// The state must lie on the surface and every quota in `(Q0, Q^m)`.
pub fn jacobian_sigma(sc: &Scenario, st: &State) -> Result<JacobianMatrix> {
    let l = check_shape(sc, st)?;
    let m = st.total_substrate();
    if (m - sc.s_in).abs() >= SURFACE_TOL * (1.0 + sc.s_in) {
        return Err(ModelError::InvalidState(format!(
            "total substrate {m} is off the surface M = s_in = {}",
            sc.s_in
        )));
    }
    for (k, &q) in sc.q_species.iter().zip(&st.q) {
        let qm = crate::mappings::q_max(k);
        if !(q > k.q0() && q < qm) {
            return Err(ModelError::InvalidState(format!(
                "quota {q} of {} outside ({}, {qm})",
                k.id,
                k.q0()
            )));
        }
    }
    let s = sc.s_in
        - st.x.iter().sum::<f64>()
        - st.y.iter().sum::<f64>()
        - st.z.iter().zip(&st.q).map(|(z, q)| z * q).sum::<f64>();
    if s < 0.0 {
        return Err(ModelError::InvalidState(format!("implied substrate {s} is negative")));
    }
    let r = Local::at(sc, s, st)?;
    let d = sc.d;
    let n = l.dim() - 1;
    let mut j = Matrix::zeros(n);
    // Σ index of a full-layout index
    let ix = |i: usize| l.x(i) - 1;
    let iy = |i: usize| l.y(i) - 1;
    let iz = |i: usize| l.z(i) - 1;
    let iq = |i: usize| l.q(i) - 1;

    // ds/dx_l = ds/dy_l = -1, ds/dz_l = -q_l, ds/dq_l = -z_l
    let mut ds = vec![0.0; n];
    for i in 0..l.nx {
        ds[ix(i)] = -1.0;
    }
    for i in 0..l.ny {
        ds[iy(i)] = -1.0;
    }
    for k in 0..l.nz {
        ds[iz(k)] = -st.q[k];
        ds[iq(k)] = -st.z[k];
    }

    for i in 0..l.nx {
        let row = ix(i);
        let g = r.alpha_s[i] * st.x[i];
        for (c, v) in ds.iter().enumerate() {
            j[(row, c)] = g * v;
        }
        j[(row, row)] += r.alpha[i] - d;
    }
    for i in 0..l.ny {
        let row = iy(i);
        let g = r.beta_s[i] * st.y[i];
        for (c, v) in ds.iter().enumerate() {
            j[(row, c)] = g * v;
        }
        j[(row, row)] += r.beta[i] - d + r.beta_y[i] * st.y[i];
    }
    for k in 0..l.nz {
        let row = iz(k);
        j[(row, iz(k))] = r.gamma[k] - d;
        j[(row, iq(k))] = r.gamma_q[k] * st.z[k];
        let row = iq(k);
        for (c, v) in ds.iter().enumerate() {
            j[(row, c)] = r.rho_s[k] * v;
        }
        j[(row, iq(k))] -= r.f_q[k];
    }

    Ok(JacobianMatrix {
        matrix: j,
        labels: coordinate_labels(sc, false),
    })
}

/// Jacobian of the full model on `(s, x.., y.., z.., q..)`.
pub fn jacobian_full(sc: &Scenario, st: &State) -> Result<JacobianMatrix> {
    let l = check_shape(sc, st)?;
    let s = st.s;
    let r = Local::at(sc, s, st)?;
    let d = sc.d;
    let mut j = Matrix::zeros(l.dim());

    let mut dss = -d;
    for i in 0..l.nx {
        dss -= r.alpha_s[i] * st.x[i];
        j[(0, l.x(i))] = -r.alpha[i];
        j[(l.x(i), 0)] = r.alpha_s[i] * st.x[i];
        j[(l.x(i), l.x(i))] = r.alpha[i] - d;
    }
    for i in 0..l.ny {
        let y = st.y[i];
        dss -= r.beta_s[i] * y;
        j[(0, l.y(i))] = -(r.beta[i] + r.beta_y[i] * y);
        j[(l.y(i), 0)] = r.beta_s[i] * y;
        j[(l.y(i), l.y(i))] = r.beta[i] - d + r.beta_y[i] * y;
    }
    for k in 0..l.nz {
        dss -= r.rho_s[k] * st.z[k];
        j[(0, l.z(k))] = -r.rho[k];
        j[(l.z(k), l.z(k))] = r.gamma[k] - d;
        j[(l.z(k), l.q(k))] = r.gamma_q[k] * st.z[k];
        j[(l.q(k), 0)] = r.rho_s[k];
        j[(l.q(k), l.q(k))] = -r.f_q[k];
    }
    j[(0, 0)] = dss;

    Ok(JacobianMatrix {
        matrix: j,
        labels: coordinate_labels(sc, true),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenEntry {
    pub re: f64,
    pub im: f64,
    /// `analytic:<coordinate>` for eigenvalues read off an absent species,
    /// `numeric` for the block of present species.
    pub source: String,
}

impl EigenEntry {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Eigenvalue contributed by an absent species.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attribution {
    pub species: String,
    pub coordinate: String,
    /// Which expression gives the eigenvalue, e.g. `alpha(s)-D`.
    pub expression: &'static str,
    pub value: f64,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub equilibrium_class: String,
    pub eigenvalues: Vec<EigenEntry>,
    pub classification: Classification,
    pub attributions: Vec<Attribution>,
    pub tol_eig: f64,
}

impl StabilityReport {
    pub fn spectrum(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(EigenEntry::value).collect()
    }

    /// Eigenvalues of the block of present species.
    pub fn numeric(&self) -> Vec<Complex64> {
        self.eigenvalues
            .iter()
            .filter(|e| e.source == "numeric")
            .map(EigenEntry::value)
            .collect()
    }
}

fn sign_of(v: f64, tol: f64) -> i8 {
    if v > tol {
        1
    } else if v < -tol {
        -1
    } else {
        0
    }
}

/// Classifies an equilibrium in the closed positive orthant.
///
/// Absent species give the eigenvalues `alpha_i(s) - D`, `beta_j(s, 0) - D`,
/// and, for quota species, `gamma_k(q_k) - D` together with `-f_k'(q_k)`.
/// The remaining block is solved numerically.
pub fn classify(sc: &Scenario, eq: &Equilibrium, tol_eig: f64) -> Result<StabilityReport> {
    let st = &eq.state;
    if eq.outside_positive_orthant || st.to_vec().iter().any(|&v| v < 0.0) {
        return Err(ModelError::InvalidState(
            "equilibrium lies outside the positive orthant".to_string(),
        ));
    }
    let jac = jacobian_sigma(sc, st)?;
    let l = sc.layout();
    let s = st.s;
    let d = sc.d;

    let mut eigen = Vec::new();
    let mut attributions = Vec::new();
    let mut keep = Vec::new();
    let mut analytic = |species: &str, coord: String, expression: &'static str, v: f64| {
        eigen.push(EigenEntry {
            re: v,
            im: 0.0,
            source: format!("analytic:{coord}"),
        });
        attributions.push(Attribution {
            species: species.to_string(),
            coordinate: coord,
            expression,
            value: v,
            sign: sign_of(v, tol_eig),
        });
    };

    for (i, m) in sc.m_species.iter().enumerate() {
        if st.x[i] == 0.0 {
            analytic(&m.id, format!("x_{}", m.id), "alpha(s)-D", m.growth.value(s) - d);
        } else {
            keep.push(l.x(i) - 1);
        }
    }
    for (j, c) in sc.c_species.iter().enumerate() {
        if st.y[j] == 0.0 {
            analytic(&c.id, format!("y_{}", c.id), "beta(s,0)-D", c.growth.value(s, 0.0) - d);
        } else {
            keep.push(l.y(j) - 1);
        }
    }
    for (k, p) in sc.q_species.iter().enumerate() {
        if st.z[k] == 0.0 {
            analytic(&p.id, format!("z_{}", p.id), "gamma(q)-D", p.growth.value(st.q[k]) - d);
            analytic(&p.id, format!("q_{}", p.id), "-f'(q)", -p.growth.df_dq(st.q[k]));
        } else {
            keep.push(l.z(k) - 1);
            keep.push(l.q(k) - 1);
        }
    }
    keep.sort_unstable();

    let block = jac.matrix.submatrix(&keep);
    for e in eigenvalues(&block)? {
        eigen.push(EigenEntry {
            re: e.re,
            im: e.im,
            source: "numeric".to_string(),
        });
    }

    let classification = if eigen.iter().any(|e| e.re.abs() <= tol_eig) {
        Classification::Marginal
    } else if eigen.iter().all(|e| e.re < -tol_eig) {
        Classification::Stable
    } else {
        Classification::Unstable
    };

    Ok(StabilityReport {
        equilibrium_class: eq.class.label(sc),
        eigenvalues: eigen,
        classification,
        attributions,
        tol_eig,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{enumerate_equilibria, predict_outcome, EnumerateOptions, EquilibriumClass};
    use crate::linalg::match_spectra;
    use crate::scenario::{CSpecies, MSpecies, QSpecies};

    fn canonical() -> Scenario {
        Scenario::new(0.5, 3.0)
            .with_m(MSpecies::new("M", 1.0, 2.0).unwrap())
            .with_c(CSpecies::new("C", 1.0, 1.0).unwrap())
            .with_q(QSpecies::droop("Q", 1.0, 1.0, 1.0, 0.5).unwrap())
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn single_free_species_examples() {
        let sc = Scenario::new(0.5, 3.0).with_m(MSpecies::new("M", 1.0, 1.0).unwrap());
        let eqs = enumerate_equilibria(&sc, EnumerateOptions::default()).unwrap();
        let ex = &eqs[1];
        let j = jacobian_sigma(&sc, &ex.state).unwrap();
        assert_eq!(j.labels, vec!["x_M"]);
        assert!((j.matrix[(0, 0)] + 0.5).abs() < 1e-14);
        let full = eigenvalues(&jacobian_full(&sc, &ex.state).unwrap().matrix).unwrap();
        assert!(match_spectra(&full, &[c(-0.5), c(-0.5)]).unwrap() < 1e-12);

        let e0 = &eqs[0];
        let full = eigenvalues(&jacobian_full(&sc, &e0.state).unwrap().matrix).unwrap();
        assert!(match_spectra(&full, &[c(0.25), c(-0.5)]).unwrap() < 1e-14);
    }

    #[test]
    fn single_quota_species_block() {
        let sc = Scenario::new(0.5, 3.0).with_q(QSpecies::droop("Q", 1.0, 1.0, 1.0, 0.5).unwrap());
        let eqs = enumerate_equilibria(&sc, EnumerateOptions::default()).unwrap();
        let ez = &eqs[1];
        let j = jacobian_sigma(&sc, &ez.state).unwrap().matrix;
        let expected = [[0.0, 1.0], [-0.25, -1.5]];
        for (r, row) in expected.iter().enumerate() {
            for (col, v) in row.iter().enumerate() {
                assert!((j[(r, col)] - v).abs() < 1e-12, "({r},{col}) = {}", j[(r, col)]);
            }
        }
    }

    #[test]
    fn canonical_classifications() {
        let sc = canonical();
        let eqs = enumerate_equilibria(&sc, EnumerateOptions::default()).unwrap();
        let star = predict_outcome(&sc).unwrap().e_star;
        let mut stable = 0;
        for e in eqs.iter().filter(|e| !e.outside_positive_orthant) {
            let rep = classify(&sc, e, TOL_EIG).unwrap();
            assert_eq!(rep.eigenvalues.len(), 4);
            match e.class {
                EquilibriumClass::E0 => {
                    assert_eq!(rep.classification, Classification::Unstable);
                    let positive = rep.attributions.iter().filter(|a| a.sign > 0).count();
                    assert_eq!(positive, 3);
                }
                EquilibriumClass::Ex(_) => {
                    assert_eq!(rep.classification, Classification::Unstable);
                    let z = rep.attributions.iter().find(|a| a.coordinate == "z_Q").unwrap();
                    assert!(z.value > 0.0);
                }
                _ => {}
            }
            if rep.classification == Classification::Stable {
                stable += 1;
                assert_eq!(e.state, star.state);
                assert!(rep.spectrum().iter().all(|v| v.re < 0.0));
            }
        }
        assert_eq!(stable, 1);
    }

    #[test]
    fn analytic_eigenvalues_appear_in_full_spectrum() {
        let sc = canonical();
        for e in enumerate_equilibria(&sc, EnumerateOptions::default()).unwrap() {
            if e.outside_positive_orthant {
                continue;
            }
            let rep = classify(&sc, &e, TOL_EIG).unwrap();
            let whole = eigenvalues(&jacobian_sigma(&sc, &e.state).unwrap().matrix).unwrap();
            assert!(match_spectra(&rep.spectrum(), &whole).unwrap() < 1e-6);
            let mut with_d = whole.clone();
            with_d.push(c(-sc.d));
            let full = eigenvalues(&jacobian_full(&sc, &e.state).unwrap().matrix).unwrap();
            assert!(match_spectra(&full, &with_d).unwrap() < 1e-6);
        }
    }

    #[test]
    fn rejects_off_surface_and_outside_states() {
        let sc = canonical();
        let mut st = predict_outcome(&sc).unwrap().e_star.state;
        st.y[0] += 1e-3;
        assert!(jacobian_sigma(&sc, &st).is_err());
        assert!(jacobian_full(&sc, &st).is_ok());
        let eqs = enumerate_equilibria(&sc, EnumerateOptions::default()).unwrap();
        let outside = eqs.iter().find(|e| e.outside_positive_orthant).unwrap();
        assert!(classify(&sc, outside, TOL_EIG).is_err());
    }

    #[test]
    fn report_json_shape() {
        let sc = canonical();
        let star = predict_outcome(&sc).unwrap().e_star;
        let rep = classify(&sc, &star, TOL_EIG).unwrap();
        let v = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["equilibrium_class"], "Ezy(Q;{C})");
        assert_eq!(v["classification"], "Stable");
        assert_eq!(v["eigenvalues"][0]["source"], "analytic:x_M");
    }
}
