//! Configuration, experiment drivers and file output behind the `solver`
//! binary.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 mode not
//! supported (mean-field term enabled in a control run).

pub mod config;
pub mod output;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::control::{ControlError, ControlProblem, SearchResult};
use crate::fields::ControlFunction;
use crate::grid::{Stencil, WaveFunction};
use crate::linalg::{DensePropagator, DENSE_CAP};
use crate::splitting::{evolve_with, pairwise_rates, Diagnostics, Propagator, SplittingConfig, SplittingError};

pub use config::RunConfig;
pub use output::{GradcheckRow, SweepRow};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },
    #[error("solver error: {0}")]
    Solver(String),
    #[error("unsupported mode: {0}")]
    Unsupported(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Solver(_) | CliError::Io { .. } => 3,
            CliError::Unsupported(_) => 4,
        }
    }
}

impl From<SplittingError> for CliError {
    fn from(e: SplittingError) -> Self {
        match e {
            SplittingError::Config(m) => CliError::Config { line: None, message: m },
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<ControlError> for CliError {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::Nonlinear => CliError::Unsupported(
                "control runs need the linear equation; set [hartree] enabled = false".into(),
            ),
            ControlError::Splitting(s) => s.into(),
            ControlError::Boundary | ControlError::Kappa | ControlError::TargetMass(_) | ControlError::TooFewKnots(_) => {
                CliError::Config {
                    line: None,
                    message: e.to_string(),
                }
            }
            other => CliError::Solver(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub stencil: Option<Stencil>,
    /// Write the linear Hamiltonian `H + V_Q` as `row col re im` triplets.
    pub export_matrix: Option<PathBuf>,
}

fn prepare(config_path: &Path, opts: &RunOptions) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(s) = opts.stencil {
        cfg.grid.stencil = s;
    }
    let dir = cfg.output_dir(config_path);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok((cfg, dir))
}

fn export_matrix(prop: &Propagator, path: &Path) -> Result<(), CliError> {
    let full = prop
        .kinetic_operator()
        .add_diagonal(prop.potential().static_part.values())
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let file = fs::File::create(path).map_err(io_err(path))?;
    full.write_triplets(BufWriter::new(file)).map_err(io_err(path))
}

#[derive(Debug, Clone)]
pub struct EvolveReport {
    pub files: Vec<PathBuf>,
    pub last: Diagnostics,
    pub mass_drift: f64,
}

pub fn run_evolve(config_path: &Path, opts: &RunOptions) -> Result<EvolveReport, CliError> {
    let (cfg, dir) = prepare(config_path, opts)?;
    let scfg = cfg.to_splitting()?;
    let prop = Propagator::new(&scfg)?;
    if let Some(p) = &opts.export_matrix {
        export_matrix(&prop, p)?;
    }
    let res = evolve_with(&prop, &scfg)?;
    let mut files = Vec::new();
    let ts = dir.join("timeseries.csv");
    output::write_timeseries(&ts, &res.series, scfg.dim).map_err(io_err(&ts))?;
    files.push(ts);
    for snap in &res.snapshots {
        let p = dir.join(output::snapshot_file_name(snap.requested));
        output::write_snapshot(&p, &snap.state).map_err(io_err(&p))?;
        files.push(p);
    }
    Ok(EvolveReport {
        files,
        last: *res.series.last().expect("final step is always recorded"),
        mass_drift: res.max_relative_mass_drift(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Tau,
    H,
    Radius,
    Epsilon,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Tau => "tau",
            SweepParam::H => "h",
            SweepParam::Radius => "R",
            SweepParam::Epsilon => "epsilon",
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tau" => Ok(SweepParam::Tau),
            "h" => Ok(SweepParam::H),
            "R" | "r" => Ok(SweepParam::Radius),
            "epsilon" | "eps" => Ok(SweepParam::Epsilon),
            other => Err(format!("unknown sweep parameter {other:?} (tau, h, R, epsilon)")),
        }
    }
}

/// Reference-solution rule: the dense exact propagator for linear,
/// uncontrolled `tau` sweeps within the dense cap; otherwise a run at
/// `min/4` (`tau`, `h`, `epsilon`) or `4/3 · max` (`R`).
pub fn sweep_reference_value(param: SweepParam, values: &[f64]) -> f64 {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(0.0, f64::max);
    match param {
        SweepParam::Radius => max * 4.0 / 3.0,
        _ => min / 4.0,
    }
}

fn with_value(base: &RunConfig, param: SweepParam, v: f64) -> Result<RunConfig, CliError> {
    let mut c = base.clone();
    match param {
        SweepParam::Tau => {
            let n = c.time.final_time / v;
            if (n - n.round()).abs() > 1e-9 * n {
                return Err(CliError::Config {
                    line: None,
                    message: format!("tau = {v} does not divide T = {}", c.time.final_time),
                });
            }
            c.time.steps = n.round() as usize;
        }
        SweepParam::H => c.grid.h = v,
        SweepParam::Radius => c.grid.radius = v,
        SweepParam::Epsilon => {
            c.hartree.enabled = true;
            c.hartree.epsilon = Some(v);
        }
    }
    Ok(c)
}

struct Run {
    tau: f64,
    states: Vec<WaveFunction>,
}

fn trajectory_of(cfg: &RunConfig) -> Result<Run, CliError> {
    let scfg = cfg.to_splitting()?;
    let prop = Propagator::new(&scfg)?;
    Ok(Run {
        tau: prop.tau(),
        states: prop.trajectory(scfg.control.as_ref())?,
    })
}

/// `‖a − b‖₂` on the coarser lattice (for different spacings) or on the
/// larger box (same spacing, missing nodes read as zero).
pub fn field_distance(a: &WaveFunction, b: &WaveFunction) -> Result<f64, CliError> {
    let (ga, gb) = (a.grid(), b.grid());
    let err = |e: crate::grid::GridError| CliError::Solver(e.to_string());
    if ga == gb {
        return Ok(a.distance(b));
    }
    if (ga.spacing() - gb.spacing()).abs() <= 1e-12 * ga.spacing() {
        let target = if ga.half_width() >= gb.half_width() { ga } else { gb };
        return Ok(a.transfer(target).map_err(err)?.distance(&b.transfer(target).map_err(err)?));
    }
    let (coarse, fine) = if ga.spacing() > gb.spacing() { (a, b) } else { (b, a) };
    let target = coarse.grid();
    Ok(coarse.transfer(target).map_err(err)?.distance(&fine.transfer(target).map_err(err)?))
}

enum Reference {
    Run(Run),
    Dense { oracle: DensePropagator, initial: WaveFunction },
}

impl Reference {
    fn at(&self, t: f64) -> Result<Option<WaveFunction>, CliError> {
        match self {
            Reference::Run(r) => {
                let idx = t / r.tau;
                if (idx - idx.round()).abs() > 1e-6 {
                    return Ok(None);
                }
                Ok(r.states.get(idx.round() as usize).cloned())
            }
            Reference::Dense { oracle, initial } => {
                oracle.propagate(t, initial).map(Some).map_err(|e| CliError::Solver(e.to_string()))
            }
        }
    }
}

fn sup_error(run: &Run, reference: &Reference) -> Result<f64, CliError> {
    let mut worst: f64 = 0.0;
    for (k, psi) in run.states.iter().enumerate() {
        if let Some(r) = reference.at(k as f64 * run.tau)? {
            worst = worst.max(field_distance(psi, &r)?);
        }
    }
    Ok(worst)
}

/// Sweep one parameter; the error is the largest `L²` distance to the
/// reference over the run's step times that the reference also resolves.
pub fn run_sweep(config_path: &Path, param: SweepParam, values: &[f64], opts: &RunOptions) -> Result<Vec<SweepRow>, CliError> {
    let (base, dir) = prepare(config_path, opts)?;
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(CliError::Config {
            line: None,
            message: "sweep values must be positive".into(),
        });
    }
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(CliError::Config {
            line: None,
            message: "sweep values must be strictly monotone".into(),
        });
    }
    let base_split = base.to_splitting()?;
    if let Some(p) = &opts.export_matrix {
        export_matrix(&Propagator::new(&base_split)?, p)?;
    }
    let dense = param == SweepParam::Tau
        && base_split.is_linear()
        && base_split.control.is_none()
        && base_split.grid().map(|g| g.len() <= DENSE_CAP).unwrap_or(false);
    let configs: Vec<RunConfig> = values.iter().map(|v| with_value(&base, param, *v)).collect::<Result<_, _>>()?;
    let (reference, runs) = rayon::join(
        || -> Result<Reference, CliError> {
            if dense {
                let prop = Propagator::new(&base_split)?;
                let full = prop
                    .kinetic_operator()
                    .add_diagonal(prop.potential().static_part.values())
                    .map_err(|e| CliError::Solver(e.to_string()))?;
                let oracle = DensePropagator::new(&full).map_err(|e| CliError::Solver(e.to_string()))?;
                Ok(Reference::Dense {
                    oracle,
                    initial: prop.initial_state().clone(),
                })
            } else {
                let rv = sweep_reference_value(param, values);
                Ok(Reference::Run(trajectory_of(&with_value(&base, param, rv)?)?))
            }
        },
        || configs.par_iter().map(trajectory_of).collect::<Result<Vec<_>, _>>(),
    );
    let (reference, runs) = (reference?, runs?);
    let errors: Vec<f64> = runs.iter().map(|r| sup_error(r, &reference)).collect::<Result<_, _>>()?;
    let rates = pairwise_rates(values, &errors);
    let rows: Vec<SweepRow> = values
        .iter()
        .zip(&errors)
        .zip(rates)
        .map(|((v, e), r)| SweepRow {
            value: *v,
            error: *e,
            rate: r,
        })
        .collect();
    let path = dir.join("sweep.csv");
    output::write_sweep(&path, param.name(), &rows).map_err(io_err(&path))?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    Eval,
    Gradcheck,
    Search,
}

impl FromStr for ControlMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eval" => Ok(ControlMode::Eval),
            "gradcheck" => Ok(ControlMode::Gradcheck),
            "search" => Ok(ControlMode::Search),
            other => Err(format!("unknown control mode {other:?} (eval, gradcheck, search)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlReport {
    Eval { state: f64, penalty: f64 },
    Gradcheck(Vec<GradcheckRow>),
    Search(SearchResult),
}

/// Random piecewise-linear direction vanishing at both ends.
pub fn random_direction(rng: &mut ChaCha8Rng, final_time: f64, interior: usize) -> ControlFunction {
    let m = interior + 1;
    let knots = (0..=m)
        .map(|i| {
            let v = if i == 0 || i == m { 0.0 } else { rng.random_range(-1.0..1.0) };
            (final_time * i as f64 / m as f64, v)
        })
        .collect();
    ControlFunction::new(knots).expect("increasing knots")
}

pub fn run_control(config_path: &Path, mode: ControlMode, opts: &RunOptions) -> Result<ControlReport, CliError> {
    let (cfg, dir) = prepare(config_path, opts)?;
    if cfg.hartree.enabled {
        return Err(ControlError::Nonlinear.into());
    }
    let scfg: SplittingConfig = cfg.to_splitting()?;
    let problem = ControlProblem::new(&cfg.cost_spec()?, &scfg)?;
    if let Some(p) = &opts.export_matrix {
        export_matrix(problem.propagator(), p)?;
    }
    let t_end = scfg.final_time;
    let u = scfg.control.clone().unwrap_or_else(|| ControlFunction::zero(t_end));
    match mode {
        ControlMode::Eval => {
            let total = problem.cost(&u)?;
            let penalty = problem.kappa() * u.h10_sq();
            let state = total - penalty;
            let path = dir.join("control_eval.csv");
            output::write_control_eval(&path, state, penalty).map_err(io_err(&path))?;
            Ok(ControlReport::Eval { state, penalty })
        }
        ControlMode::Gradcheck => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.cost.seed);
            let data = problem.gradient_data(&u)?;
            let delta = cfg.cost.delta;
            let rows = (0..cfg.cost.directions)
                .map(|i| {
                    let dir = random_direction(&mut rng, t_end, 4);
                    let adjoint = problem.derivative_from(&data, &u, &dir);
                    let plus = problem.cost(&u.add_scaled(&dir, delta))?;
                    let minus = problem.cost(&u.add_scaled(&dir, -delta))?;
                    let fd = (plus - minus) / (2.0 * delta);
                    Ok(GradcheckRow {
                        direction: i,
                        adjoint,
                        finite_difference: fd,
                        rel_error: (adjoint - fd).abs() / fd.abs().max(f64::MIN_POSITIVE),
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let path = dir.join("gradcheck.csv");
            output::write_gradcheck(&path, &rows).map_err(io_err(&path))?;
            Ok(ControlReport::Gradcheck(rows))
        }
        ControlMode::Search => {
            let res = problem.fourier_search(cfg.cost.modes, cfg.cost.levels)?;
            let path = dir.join("search.csv");
            output::write_search(&path, &res).map_err(io_err(&path))?;
            Ok(ControlReport::Search(res))
        }
    }
}
