use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chemostat_core::presets::{preset, PRESET_NAMES};
use chemostat_core::sampling::random_initial_state;
use chemostat_core::scenario::{Normalization, Scenario, State};
use chemostat_core::simulate::{
    check_bounds, detect_convergence, integrate, IntegratorOptions, SimulationError, Trajectory,
};
use chemostat_core::stability::{classify, Classification, StabilityReport, TOL_EIG};
use chemostat_core::sweep::{outcome_map, GridSpec};
use chemostat_core::{
    enumerate_equilibria, predict_outcome, validate_scenario, EnumerateOptions, EquilibriumReport, ValidationReport,
    TOL_DISTINCT,
};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Competition analysis for a single-substrate chemostat with free,
/// attached and quota-limited species.
#[derive(Parser, Debug)]
#[command(name = "chemostat-compete", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check scenario hypotheses; writes validation.json.
    Validate(Common),
    /// Enumerate equilibria with stability; writes equilibria.json and prediction.json.
    Equilibria(Common),
    /// Integrate from a given or random initial state; writes trajectory.csv,
    /// monitors.csv, bounds.json and convergence.json.
    Simulate(Common),
    /// Outcome map over (D, s_in); writes sweep.csv and optionally sweep.json.
    Sweep(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario JSON file.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario instead of a file.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    preset: Option<String>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000.0)]
    t_max: f64,
    #[arg(long, default_value_t = 1e-8)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    abs_tol: f64,
    /// Seed for the random initial state.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial state JSON `{s, x, y, z, q}` in the scenario's own units.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Sup-norm tolerance for convergence to an equilibrium.
    #[arg(long, default_value_t = 1e-3)]
    conv_tol: f64,
    /// `min,max,n,lin|log`; defaults to the scenario's D.
    #[arg(long)]
    grid_d: Option<String>,
    /// `min,max,n,lin|log`; defaults to the scenario's s_in.
    #[arg(long)]
    grid_sin: Option<String>,
    /// Enumerate equilibria for every subset of species, not only the canonical ones.
    #[arg(long)]
    all_subsets: bool,
    /// Also write per-cell sweep.json.
    #[arg(long)]
    json: bool,
}

const EXIT_VIOLATION: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_MARGINAL: u8 = 3;
const EXIT_STIFF: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::new(EXIT_INPUT, format!("{e:#}"))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(c) => cmd_validate(c),
        Command::Equilibria(c) => cmd_equilibria(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Sweep(c) => cmd_sweep(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Scenario as given, plus its unit-yield form used for all computation.
struct Loaded {
    normalized: Scenario,
    norm: Normalization,
}

fn load(c: &Common) -> Result<Loaded, Failure> {
    let original = match (&c.scenario, &c.preset) {
        (_, Some(name)) => preset(name).ok_or_else(|| Failure::new(EXIT_INPUT, format!("unknown preset {name}")))?,
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot read {}: {e}", path.display())))?;
            Scenario::from_json(&text).map_err(|e| {
                Failure::new(
                    EXIT_INPUT,
                    format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()),
                )
            })?
        }
        (None, None) => return Err(Failure::new(EXIT_INPUT, "one of --scenario or --preset is required")),
    };
    let (normalized, norm) = original
        .normalize()
        .map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    Ok(Loaded { normalized, norm })
}

fn out_dir(c: &Common) -> Result<&Path, Failure> {
    fs::create_dir_all(&c.out).with_context(|| format!("cannot create {}", c.out.display()))?;
    Ok(&c.out)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
    text.push('\n');
    write(dir, name, &text)
}

fn validation(sc: &Scenario) -> Result<ValidationReport, Failure> {
    validate_scenario(sc, TOL_DISTINCT).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))
}

fn violation_failure(report: &ValidationReport) -> Failure {
    let detail: Vec<String> = report
        .violations
        .iter()
        .map(|v| format!("{} ({})", v.hypothesis, v.detail))
        .collect();
    Failure::new(EXIT_VIOLATION, format!("hypothesis violated: {}", detail.join("; ")))
}

/// Validates and writes `validation.json`; fails with exit 1 on violation.
fn require_valid(sc: &Scenario, dir: &Path) -> Outcome {
    let report = validation(sc)?;
    write_json(dir, "validation.json", &report)?;
    if report.ok {
        Ok(())
    } else {
        Err(violation_failure(&report))
    }
}

fn cmd_validate(c: &Common) -> Outcome {
    let loaded = load(c)?;
    let dir = out_dir(c)?;
    require_valid(&loaded.normalized, dir)
}

fn model_failure(e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_INPUT, e.to_string())
}

fn original_units(norm: &Normalization, mut report: EquilibriumReport) -> EquilibriumReport {
    report.state = norm.to_original(&report.state);
    report
}

#[derive(Serialize)]
struct EquilibriumEntry {
    #[serde(flatten)]
    equilibrium: EquilibriumReport,
    stability: Option<StabilityReport>,
}

fn cmd_equilibria(c: &Common) -> Outcome {
    let Loaded { normalized: sc, norm } = load(c)?;
    let dir = out_dir(c)?;
    require_valid(&sc, dir)?;

    let eqs = enumerate_equilibria(
        &sc,
        EnumerateOptions {
            all_subsets: c.all_subsets,
        },
    )
    .map_err(model_failure)?;
    let mut entries = Vec::with_capacity(eqs.len());
    let mut marginal = Vec::new();
    let mut stable = Vec::new();
    for eq in &eqs {
        let stability = if eq.outside_positive_orthant {
            None
        } else {
            Some(classify(&sc, eq, TOL_EIG).map_err(model_failure)?)
        };
        let report = original_units(&norm, eq.report(&sc));
        match stability.as_ref().map(|s| s.classification) {
            Some(Classification::Marginal) => marginal.push(report.class.clone()),
            Some(Classification::Stable) => stable.push(report.class.clone()),
            _ => {}
        }
        entries.push(EquilibriumEntry {
            equilibrium: report,
            stability,
        });
    }
    write_json(dir, "equilibria.json", &entries)?;

    let prediction = predict_outcome(&sc).map_err(model_failure)?;
    let mut pred = prediction.report(&sc);
    pred.e_star = original_units(&norm, pred.e_star);
    write_json(dir, "prediction.json", &pred)?;

    if !marginal.is_empty() {
        return Err(Failure::new(
            EXIT_MARGINAL,
            format!(
                "near-degenerate scenario: marginal eigenvalues at {}",
                marginal.join(", ")
            ),
        ));
    }
    if stable.len() != 1 {
        return Err(Failure::new(
            EXIT_MARGINAL,
            format!("expected exactly one stable equilibrium, found {}", stable.len()),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct ConvergenceFile {
    seed: Option<u64>,
    initial_state: State,
    converged: bool,
    t_converged: Option<f64>,
    t_enter: Option<f64>,
    terminal_distance: f64,
    tol: f64,
    predicted: String,
    reached: Option<String>,
    #[serde(rename = "match")]
    matches: bool,
    bounds_ok: bool,
}

fn monitors_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,M,L,mass_residual\n");
    for (t, m) in traj.times.iter().zip(&traj.monitors) {
        let l = m.l.map(|l| format!("{l:.16e}")).unwrap_or_default();
        out.push_str(&format!("{t:.16e},{:.16e},{l},{:.16e}\n", m.m, m.mass_residual));
    }
    out
}

fn trajectory_in_original_units(traj: &Trajectory, norm: &Normalization) -> Trajectory {
    let mut out = traj.clone();
    for st in &mut out.states {
        *st = norm.to_original(st);
    }
    out
}

fn write_trajectory(dir: &Path, sc: &Scenario, norm: &Normalization, traj: &Trajectory) -> Outcome {
    write(
        dir,
        "trajectory.csv",
        &trajectory_in_original_units(traj, norm).to_csv(sc),
    )?;
    write(dir, "monitors.csv", &monitors_csv(traj))?;
    write_json(dir, "bounds.json", &check_bounds(sc, traj))
}

fn cmd_simulate(c: &Common) -> Outcome {
    let Loaded { normalized: sc, norm } = load(c)?;
    let dir = out_dir(c)?;
    require_valid(&sc, dir)?;

    let (x0, seed) = match &c.init {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot read {}: {e}", path.display())))?;
            let st: State = serde_json::from_str(&text).map_err(|e| {
                Failure::new(
                    EXIT_INPUT,
                    format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()),
                )
            })?;
            (norm.to_normalized(&st), None)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            (random_initial_state(&mut rng, &sc), Some(c.seed))
        }
    };
    x0.check(sc.layout()).map_err(model_failure)?;

    let opts = IntegratorOptions {
        rel_tol: c.rel_tol,
        abs_tol: c.abs_tol,
        ..IntegratorOptions::with_t_max(c.t_max)
    };
    let traj = match integrate(&sc, &x0, &opts) {
        Ok(traj) => traj,
        Err(SimulationError::Integrator { source, partial }) => {
            write_trajectory(dir, &sc, &norm, &partial)?;
            let code = if matches!(source, chemostat_core::ode::OdeError::NonFinite { .. }) {
                EXIT_INPUT
            } else {
                EXIT_STIFF
            };
            return Err(Failure::new(
                code,
                format!("integration stopped: {source}; partial outputs written"),
            ));
        }
        Err(e) => return Err(model_failure(e)),
    };
    write_trajectory(dir, &sc, &norm, &traj)?;

    let prediction = predict_outcome(&sc).map_err(model_failure)?;
    let window = (c.t_max / 10.0).min(10.0);
    let conv = detect_convergence(&sc, &traj, &prediction.e_star.state, c.conv_tol, window);
    let last = traj.last_state().expect("nonempty trajectory");
    let candidates = enumerate_equilibria(&sc, EnumerateOptions { all_subsets: true })
        .or_else(|_| enumerate_equilibria(&sc, EnumerateOptions::default()))
        .map_err(model_failure)?;
    let reached = candidates
        .iter()
        .filter(|eq| !eq.outside_positive_orthant)
        .map(|eq| (eq.state.distance(last), eq))
        .filter(|(d, _)| *d <= c.conv_tol)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, eq)| eq.class.label(&sc));

    let file = ConvergenceFile {
        seed,
        initial_state: norm.to_original(&x0),
        converged: conv.converged,
        t_converged: conv.t_converged,
        t_enter: conv.t_enter,
        terminal_distance: conv.terminal_distance,
        tol: c.conv_tol,
        predicted: prediction.e_star.class.label(&sc),
        reached,
        matches: conv.converged,
        bounds_ok: check_bounds(&sc, &traj).ok,
    };
    write_json(dir, "convergence.json", &file)
}

fn grid(arg: &Option<String>, flag: &str, default: f64) -> Result<Vec<f64>, Failure> {
    match arg {
        None => Ok(vec![default]),
        Some(text) => text
            .parse::<GridSpec>()
            .map(|g| g.values())
            .map_err(|e| Failure::new(EXIT_INPUT, format!("invalid --{flag} {text:?}: {e}"))),
    }
}

fn thread_cap() -> Result<Option<usize>, Failure> {
    match std::env::var("CHEMOSTAT_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::new(
                EXIT_INPUT,
                format!("CHEMOSTAT_THREADS must be a positive integer, got {v:?}"),
            )),
        },
    }
}

fn cmd_sweep(c: &Common) -> Outcome {
    let Loaded { normalized: sc, .. } = load(c)?;
    let d_grid = grid(&c.grid_d, "grid-d", sc.d)?;
    let s_grid = grid(&c.grid_sin, "grid-sin", sc.s_in)?;
    let dir = out_dir(c)?;
    require_valid(&sc, dir)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building thread pool")?;
    let map = pool
        .install(|| outcome_map(&sc, &d_grid, &s_grid))
        .map_err(model_failure)?;
    write(dir, "sweep.csv", &map.to_csv())?;
    if c.json {
        write_json(dir, "sweep.json", &map)?;
    }
    Ok(())
}
