//! Time integration of the normalized model with per-sample monitors.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::equilibria::predict_outcome;
use crate::error::ModelError;
use crate::mappings::{cap_q, cap_y_unchecked, q_max, s_of_q_clamped, s_of_y};
use crate::ode::{self, OdeError, OdeOptions, OdeStats};
use crate::roots::bisection;
use crate::scenario::{Layout, Scenario, State};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_max: f64,
    pub max_step: f64,
    pub sample_dt: f64,
}

impl IntegratorOptions {
    /// Defaults for a given horizon: `rel_tol = 1e-8`, `abs_tol = 1e-10`,
    /// samples every `min(1, t_max / 2000)`.
    pub fn with_t_max(t_max: f64) -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            t_max,
            max_step: f64::INFINITY,
            sample_dt: (t_max / 2000.0).min(1.0),
        }
    }

    fn check(&self) -> Result<(), ModelError> {
        let tol_ok = |v: f64| v > 0.0 && v <= 1e-2;
        if !(tol_ok(self.rel_tol) && tol_ok(self.abs_tol)) {
            return Err(ModelError::InvalidScenario(format!(
                "tolerances must lie in (0, 1e-2], got rel {} abs {}",
                self.rel_tol, self.abs_tol
            )));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(ModelError::InvalidScenario(format!(
                "t_max must be > 0, got {}",
                self.t_max
            )));
        }
        if !(self.sample_dt > 0.0) || !(self.max_step > 0.0) {
            return Err(ModelError::InvalidScenario(
                "sample_dt and max_step must be > 0".to_string(),
            ));
        }
        Ok(())
    }
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self::with_t_max(2000.0)
    }
}

/// Right-hand side on the flat layout `(s, x.., y.., z.., q..)`.
///
/// Rates are evaluated at the nonnegative parts of `s` and `y`, so the
/// transient negative values an explicit stage can produce do not hit the
/// Contois singularity. On the nonnegative orthant this is exactly the model.
pub fn rhs_into(sc: &Scenario, y: &[f64], dy: &mut [f64]) {
    let l = sc.layout();
    let s = y[0];
    let sp = s.max(0.0);
    let d = sc.d;
    let mut consumed = 0.0;
    for (i, m) in sc.m_species.iter().enumerate() {
        let x = y[l.x(i)];
        let a = m.growth.value(sp);
        dy[l.x(i)] = (a - d) * x;
        consumed += a * x;
    }
    for (j, c) in sc.c_species.iter().enumerate() {
        let yj = y[l.y(j)];
        if yj > 0.0 {
            let b = c.growth.value(sp, yj);
            dy[l.y(j)] = (b - d) * yj;
            consumed += b * yj;
        } else {
            dy[l.y(j)] = -d * yj;
        }
    }
    for (k, p) in sc.q_species.iter().enumerate() {
        let z = y[l.z(k)];
        let q = y[l.q(k)];
        let r = p.uptake.value(sp);
        dy[l.z(k)] = (p.growth.value(q) - d) * z;
        dy[l.q(k)] = r - p.growth.f(q);
        consumed += r * z;
    }
    dy[0] = d * (sc.s_in - s) - consumed;
}

/// Time derivative of the state.
pub fn rhs(sc: &Scenario, st: &State) -> Result<State, ModelError> {
    let layout = sc.layout();
    let v = st.to_vec();
    if v.len() != layout.dim() {
        return Err(ModelError::InvalidState("dimensions do not match roster".to_string()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ModelError::NonFinite("state"));
    }
    let mut dv = vec![0.0; v.len()];
    rhs_into(sc, &v, &mut dv);
    Ok(State::from_slice(layout, &dv))
}

/// Lower bound `L` for the substrate: the smallest of the substrate levels
/// matching each quota and each attached biomass, the predicted `s*`, and
/// `s` itself. Quotas are clamped into `(Q0, Q^m)`; attached species that
/// no substrate level sustains are skipped.
pub fn monitor_l(sc: &Scenario, st: &State, s_star: f64) -> f64 {
    let mut l = s_star.min(st.s);
    for (k, &q) in sc.q_species.iter().zip(&st.q) {
        l = l.min(s_of_q_clamped(k, q));
    }
    for (c, &y) in sc.c_species.iter().zip(&st.y) {
        if let Some(v) = s_of_y(c, sc.d, y).finite() {
            l = l.min(v);
        }
    }
    l
}

fn quotas_in_range(sc: &Scenario, st: &State) -> bool {
    sc.q_species.iter().zip(&st.q).all(|(k, &q)| q > k.q0() && q < q_max(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Monitor {
    /// Total substrate.
    #[serde(rename = "M")]
    pub m: f64,
    /// Lower bound for `s`, once every quota lies in `(Q0, Q^m)`.
    #[serde(rename = "L")]
    pub l: Option<f64>,
    /// Deviation of `M` from its exact exponential relaxation toward `s_in`.
    pub mass_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub layout: Layout,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub monitors: Vec<Monitor>,
    /// Predicted `s*` used by the `L` monitor.
    pub s_star: f64,
    pub stats: OdeStats,
}

impl Trajectory {
    pub fn last_state(&self) -> Option<&State> {
        self.states.last()
    }

    /// CSV with header `t,s,x_<id>..,y_<id>..,z_<id>..,q_<id>..,M,L,mass_residual`.
    /// `L` is empty before the monitor starts.
    pub fn to_csv(&self, sc: &Scenario) -> String {
        let mut out = String::from("t,s");
        for m in &sc.m_species {
            write!(out, ",x_{}", m.id).unwrap();
        }
        for c in &sc.c_species {
            write!(out, ",y_{}", c.id).unwrap();
        }
        for k in &sc.q_species {
            write!(out, ",z_{}", k.id).unwrap();
        }
        for k in &sc.q_species {
            write!(out, ",q_{}", k.id).unwrap();
        }
        out.push_str(",M,L,mass_residual\n");
        for ((t, st), mon) in self.times.iter().zip(&self.states).zip(&self.monitors) {
            write!(out, "{t:.16e}").unwrap();
            for v in st.to_vec() {
                write!(out, ",{v:.16e}").unwrap();
            }
            write!(out, ",{:.16e},", mon.m).unwrap();
            if let Some(l) = mon.l {
                write!(out, "{l:.16e}").unwrap();
            }
            writeln!(out, ",{:.16e}", mon.mass_residual).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    /// Integration stopped early; the samples computed so far are kept.
    #[error("integration failed: {source}")]
    Integrator { source: OdeError, partial: Box<Trajectory> },
}

impl SimulationError {
    pub fn is_stiffness(&self) -> bool {
        matches!(
            self,
            SimulationError::Integrator {
                source: OdeError::StepUnderflow { .. } | OdeError::TooManySteps { .. },
                ..
            }
        )
    }
}

fn sample_times(opts: &IntegratorOptions) -> Vec<f64> {
    let n = (opts.t_max / opts.sample_dt - 1e-9).ceil() as usize;
    let mut times: Vec<f64> = (0..n).map(|i| i as f64 * opts.sample_dt).collect();
    times.push(opts.t_max);
    times
}

/// Integrates the normalized model from `x0` up to `opts.t_max`.
pub fn integrate(sc: &Scenario, x0: &State, opts: &IntegratorOptions) -> Result<Trajectory, SimulationError> {
    sc.check_structure()?;
    if !sc.is_normalized() {
        return Err(ModelError::InvalidScenario("scenario must be normalized before integration".to_string()).into());
    }
    opts.check()?;
    let layout = sc.layout();
    x0.check(layout)?;
    let s_star = predict_outcome(sc)?.s_star;

    let m0 = x0.total_substrate();
    let ode_opts = OdeOptions {
        rel_tol: opts.rel_tol,
        abs_tol: opts.abs_tol,
        max_step: opts.max_step,
        nonnegative: true,
        ..OdeOptions::default()
    };
    let times = sample_times(opts);
    let mut traj = Trajectory {
        layout,
        times: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
        monitors: Vec::with_capacity(times.len()),
        s_star,
        stats: OdeStats::default(),
    };
    let mut gate_open = false;
    let result = ode::integrate(
        |y, dy| rhs_into(sc, y, dy),
        0.0,
        &x0.to_vec(),
        &times,
        &ode_opts,
        |t, y| {
            let st = State::from_slice(layout, y);
            let m = st.total_substrate();
            gate_open = gate_open || quotas_in_range(sc, &st);
            let monitor = Monitor {
                m,
                l: gate_open.then(|| monitor_l(sc, &st, s_star)),
                mass_residual: m - (sc.s_in + (m0 - sc.s_in) * (-sc.d * t).exp()),
            };
            traj.times.push(t);
            traj.states.push(st);
            traj.monitors.push(monitor);
        },
    );
    match result {
        Ok(stats) => {
            traj.stats = stats;
            Ok(traj)
        }
        Err(source) => Err(SimulationError::Integrator {
            source,
            partial: Box::new(traj),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub bound: String,
    pub coordinate: String,
    pub sample: usize,
    pub t: f64,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub ok: bool,
    pub violations: Vec<BoundViolation>,
    /// Upper bound for the total substrate.
    pub m_max: f64,
    /// Upper bound for each quota species' biomass.
    pub z_max: Vec<f64>,
    /// Positive floor for the substrate after its first arrival.
    pub s_floor: f64,
}

const BOUND_SLACK: f64 = 1e-8;

/// Substrate floor: the level where the worst-case consumption, with every
/// biomass at its upper bound, leaves `s' = D s_in / 2`.
fn substrate_floor(sc: &Scenario, m_max: f64, z_max: &[f64]) -> f64 {
    let phi = |s: f64| {
        let mut v = sc.d * (sc.s_in - s);
        for m in &sc.m_species {
            v -= m.growth.value(s) * m_max;
        }
        for c in &sc.c_species {
            v -= c.growth.value(s, m_max) * m_max;
        }
        for (k, zm) in sc.q_species.iter().zip(z_max) {
            v -= k.uptake.value(s) * zm;
        }
        v - 0.5 * sc.d * sc.s_in
    };
    bisection(phi, 0.0, sc.s_in, 1e-14 * sc.s_in).unwrap_or(0.0)
}

/// Checks the a priori bounds along a trajectory: total substrate and
/// quota-species biomass stay below their bounds, each quota eventually
/// enters `(Q0, Q^m)` and stays, and the substrate stays above a positive
/// floor once it has reached it. Each violation is reported at its first
/// offending sample.
pub fn check_bounds(sc: &Scenario, traj: &Trajectory) -> BoundsReport {
    let mut violations = Vec::new();
    let Some(first) = traj.states.first() else {
        return BoundsReport {
            ok: true,
            violations,
            m_max: sc.s_in,
            z_max: Vec::new(),
            s_floor: 0.0,
        };
    };
    let m_max = first.total_substrate().max(sc.s_in);
    let z_max: Vec<f64> = sc
        .q_species
        .iter()
        .zip(&first.z)
        .map(|(k, &z0)| {
            let q_star = k.growth.inverse(sc.d).unwrap_or(f64::INFINITY);
            (m_max / q_star).max(z0)
        })
        .collect();
    let s_floor = substrate_floor(sc, m_max, &z_max);

    let mut push = |bound: &str, coordinate: String, sample: usize, value: f64, limit: f64| {
        if !violations
            .iter()
            .any(|v: &BoundViolation| v.bound == bound && v.coordinate == coordinate)
        {
            violations.push(BoundViolation {
                bound: bound.to_string(),
                coordinate,
                sample,
                t: traj.times[sample],
                value,
                limit,
            });
        }
    };

    let mut quota_entered = vec![false; sc.q_species.len()];
    let mut s_reached = false;
    for (n, st) in traj.states.iter().enumerate() {
        let m = st.total_substrate();
        if m > m_max * (1.0 + BOUND_SLACK) {
            push("total_substrate", "M".to_string(), n, m, m_max);
        }
        for (k, sp) in sc.q_species.iter().enumerate() {
            if st.z[k] > z_max[k] * (1.0 + BOUND_SLACK) {
                push("quota_biomass", format!("z_{}", sp.id), n, st.z[k], z_max[k]);
            }
            let inside = st.q[k] > sp.q0() && st.q[k] < q_max(sp);
            if inside {
                quota_entered[k] = true;
            } else if quota_entered[k] {
                let limit = if st.q[k] <= sp.q0() { sp.q0() } else { q_max(sp) };
                push("quota_range", format!("q_{}", sp.id), n, st.q[k], limit);
            }
        }
        if s_reached && st.s < s_floor * (1.0 - BOUND_SLACK) {
            push("substrate_floor", "s".to_string(), n, st.s, s_floor);
        }
        s_reached = s_reached || st.s >= s_floor;
    }
    let last = traj.states.len() - 1;
    for (k, sp) in sc.q_species.iter().enumerate() {
        if !quota_entered[k] {
            push(
                "quota_range",
                format!("q_{}", sp.id),
                last,
                traj.states[last].q[k],
                sp.q0(),
            );
        }
    }

    BoundsReport {
        ok: violations.is_empty(),
        violations,
        m_max,
        z_max,
        s_floor,
    }
}

/// Post-hoc consistency between the substrate limit and the quota and
/// attached-biomass limits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitCrossCheck {
    pub s_limit: f64,
    pub max_quota_gap: f64,
    pub max_attached_gap: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceResult {
    pub converged: bool,
    pub t_converged: Option<f64>,
    /// Earliest sample time from which the trajectory stays within `tol`.
    pub t_enter: Option<f64>,
    pub terminal_distance: f64,
    /// Present when the terminal substrate is within `tol` of the target's.
    pub cross_check: Option<LimitCrossCheck>,
}

/// Whether the trajectory stays within `tol` (sup norm) of `target` for at
/// least `window` time units at its tail.
pub fn detect_convergence(
    sc: &Scenario,
    traj: &Trajectory,
    target: &State,
    tol: f64,
    window: f64,
) -> ConvergenceResult {
    let Some(last) = traj.states.last() else {
        return ConvergenceResult {
            converged: false,
            t_converged: None,
            t_enter: None,
            terminal_distance: f64::INFINITY,
            cross_check: None,
        };
    };
    let terminal_distance = last.distance(target);
    let mut enter = None;
    for (n, st) in traj.states.iter().enumerate().rev() {
        if st.distance(target) <= tol {
            enter = Some(n);
        } else {
            break;
        }
    }
    let t_end = *traj.times.last().expect("nonempty");
    let t_enter = enter.map(|n| traj.times[n]);
    let converged = t_enter.is_some_and(|t| t_end - t >= window);

    let cross_check = ((last.s - target.s).abs() <= tol).then(|| {
        let s0 = target.s;
        let max_quota_gap = sc
            .q_species
            .iter()
            .zip(&last.q)
            .map(|(k, &q)| (q - cap_q(k, s0)).abs())
            .fold(0.0, f64::max);
        let max_attached_gap = sc
            .c_species
            .iter()
            .zip(&last.y)
            .map(|(c, &y)| (y - cap_y_unchecked(c, sc.d, s0)).abs())
            .fold(0.0, f64::max);
        LimitCrossCheck {
            s_limit: s0,
            max_quota_gap,
            max_attached_gap,
            consistent: max_quota_gap <= tol && max_attached_gap <= tol,
        }
    });

    ConvergenceResult {
        converged,
        t_converged: if converged { t_enter.map(|t| t + window) } else { None },
        t_enter,
        terminal_distance,
        cross_check,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{enumerate_equilibria, EnumerateOptions};
    use crate::scenario::{CSpecies, MSpecies, QSpecies};

    fn canonical(s_in: f64) -> Scenario {
        Scenario::new(0.5, s_in)
            .with_m(MSpecies::new("M", 1.0, 2.0).unwrap())
            .with_c(CSpecies::new("C", 1.0, 1.0).unwrap())
            .with_q(QSpecies::droop("Q", 1.0, 1.0, 1.0, 0.5).unwrap())
    }

    fn state(s: f64, x: f64, y: f64, z: f64, q: f64) -> State {
        State {
            s,
            x: vec![x],
            y: vec![y],
            z: vec![z],
            q: vec![q],
        }
    }

    #[test]
    fn equilibria_are_fixed_points() {
        for s_in in [1.0, 3.0] {
            let sc = canonical(s_in);
            for e in enumerate_equilibria(&sc, EnumerateOptions { all_subsets: true }).unwrap() {
                let d = rhs(&sc, &e.state).unwrap();
                assert!(d.to_vec().iter().all(|v| v.abs() < 1e-9), "{:?}: {:?}", e.class, d);
            }
        }
    }

    #[test]
    fn growth_near_washout() {
        let sc = Scenario::new(0.5, 3.0).with_m(MSpecies::new("M", 1.0, 1.0).unwrap());
        let st = State {
            s: 3.0,
            x: vec![1e-3],
            y: vec![],
            z: vec![],
            q: vec![],
        };
        let d = rhs(&sc, &st).unwrap();
        assert!((d.x[0] - 0.25e-3).abs() < 1e-15);
    }

    #[test]
    fn total_substrate_relaxes_linearly() {
        let sc = canonical(3.0);
        let st = state(0.7, 0.4, 0.0, 1.3, 0.3);
        let d = rhs(&sc, &st).unwrap();
        let dm = d.s + d.x[0] + d.y[0] + d.z[0] * st.q[0] + st.z[0] * d.q[0];
        assert!((dm - sc.d * (sc.s_in - st.total_substrate())).abs() < 1e-12);
    }

    #[test]
    fn monitor_l_examples() {
        let sc = canonical(3.0);
        let st = state(0.8, 0.1, 0.9, 0.1, 1.1);
        assert!((monitor_l(&sc, &st, 1.0) - 0.8).abs() < 1e-12);
        let at_star = state(1.0, 0.0, 1.0, 1.0, 1.0);
        assert!((monitor_l(&sc, &at_star, 1.0) - 1.0).abs() < 1e-12);
        let no_attached = state(2.0, 0.1, 0.0, 0.1, 1.1);
        assert_eq!(monitor_l(&sc, &no_attached, 1.0), 0.0);
    }

    #[test]
    fn mass_relaxation_matches_closed_form() {
        // M(0) = 2, s_in = 1, D = 1
        let sc = Scenario::new(1.0, 1.0)
            .with_m(MSpecies::new("M", 2.0, 1.0).unwrap())
            .with_q(QSpecies::droop("Q", 1.5, 1.0, 2.0, 0.2).unwrap());
        let x0 = State {
            s: 1.0,
            x: vec![0.5],
            y: vec![],
            z: vec![1.0],
            q: vec![0.5],
        };
        let traj = integrate(&sc, &x0, &IntegratorOptions::with_t_max(1.0)).unwrap();
        let m1 = traj.monitors.last().unwrap().m;
        let exact = 1.0 + (-1.0f64).exp();
        assert!((exact - 1.367_879_441).abs() < 1e-9);
        assert!(((m1 - exact) / exact).abs() < 1e-6);
    }

    #[test]
    fn zone_three_run_converges_to_prediction() {
        let sc = canonical(3.0);
        let x0 = state(3.0, 0.1, 0.1, 0.1, 0.6);
        // the slowest eigenvalue at the limit is about -0.052, so the
        // distance is still ~3.2e-4 at t = 200 and drops below 1e-4 by t = 300
        let opts = IntegratorOptions::with_t_max(300.0);
        let traj = integrate(&sc, &x0, &opts).unwrap();
        let pred = predict_outcome(&sc).unwrap();
        let last = traj.last_state().unwrap();
        assert!(last.distance(&pred.e_star.state) < 1e-4, "{last:?}");
        let at_200 = &traj.states[traj.times.iter().position(|&t| t >= 200.0).unwrap()];
        let d200 = at_200.distance(&pred.e_star.state);
        assert!(d200 > 2e-4 && d200 < 5e-4, "{d200}");

        let report = check_bounds(&sc, &traj);
        assert!(report.ok, "{:?}", report.violations);
        assert!(report.s_floor > 0.0 && report.s_floor < sc.s_in);

        let conv = detect_convergence(&sc, &traj, &pred.e_star.state, 1e-3, 10.0);
        assert!(conv.converged);
        assert!(conv.t_converged.unwrap() < 200.0);
        assert!(conv.cross_check.unwrap().consistent);

        // free biomass never decays faster than dilution
        for (t, st) in traj.times.iter().zip(&traj.states) {
            assert!(st.x[0] >= 0.1 * (-sc.d * t).exp() * (1.0 - 1e-6));
        }
    }

    #[test]
    fn zone_two_run_converges_to_attached_only() {
        let sc = canonical(1.0);
        let x0 = state(1.0, 0.1, 0.1, 0.1, 0.6);
        let traj = integrate(&sc, &x0, &IntegratorOptions::with_t_max(400.0)).unwrap();
        let last = traj.last_state().unwrap();
        assert!((last.s - 0.5).abs() < 1e-4);
        assert!((last.y[0] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn quota_below_minimum_recovers() {
        let sc = canonical(3.0);
        let x0 = state(3.0, 0.1, 0.1, 0.1, 0.3);
        let traj = integrate(&sc, &x0, &IntegratorOptions::with_t_max(50.0)).unwrap();
        assert!(traj.monitors[0].l.is_none());
        assert!(traj.monitors.last().unwrap().l.is_some());
        assert!(check_bounds(&sc, &traj).ok);
    }

    #[test]
    fn starting_at_target_converges_after_one_window() {
        let sc = canonical(3.0);
        let target = predict_outcome(&sc).unwrap().e_star.state;
        let traj = integrate(&sc, &target, &IntegratorOptions::with_t_max(20.0)).unwrap();
        let conv = detect_convergence(&sc, &traj, &target, 1e-6, 5.0);
        assert!(conv.converged);
        assert_eq!(conv.t_enter, Some(0.0));
        assert_eq!(conv.t_converged, Some(5.0));
        assert!(check_bounds(&sc, &traj).ok);
    }

    #[test]
    fn csv_layout() {
        let sc = canonical(3.0);
        let traj = integrate(
            &sc,
            &state(3.0, 0.1, 0.1, 0.1, 0.3),
            &IntegratorOptions::with_t_max(2.0),
        )
        .unwrap();
        let csv = traj.to_csv(&sc);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,s,x_M,y_C,z_Q,q_Q,M,L,mass_residual");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 9);
        assert_eq!(row[7], "");
        assert_eq!(row[0].parse::<f64>().unwrap(), 0.0);
        assert_eq!(csv.lines().count(), traj.times.len() + 1);
    }

    #[test]
    fn rejects_unnormalized_and_negative_input() {
        let mut sc = canonical(3.0);
        sc.m_species[0].yield_a = 2.0;
        let x0 = state(3.0, 0.1, 0.1, 0.1, 0.6);
        assert!(integrate(&sc, &x0, &IntegratorOptions::with_t_max(1.0)).is_err());
        let sc = canonical(3.0);
        let bad = state(3.0, -0.1, 0.1, 0.1, 0.6);
        assert!(integrate(&sc, &bad, &IntegratorOptions::with_t_max(1.0)).is_err());
    }
}
