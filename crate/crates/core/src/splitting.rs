//! Strang splitting time loop and diagnostics.
//!
//! One step of size `τ` is
//!
//! ```text
//! φ⁻      = C(τ/2) φ_k
//! φ⁺      = exp(−iτ 𝒱(φ⁻)) φ⁻,   𝒱(φ) = V_Q + u(t_k + τ/2) (V_con)_Q + f_ε ∗ |φ|²
//! φ_{k+1} = C(τ/2) φ⁺
//! ```
//!
//! where `C(s)` is the Cayley propagator of the kinetic operator `(−i∇^h − A)²`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::fields::{
    pad3, sample_vector_potential, AssembledPotential, ControlFunction, FieldError, MagneticPotential, PotentialSpec,
    SampledVectorPotential, SmoothedKernel,
};
use crate::grid::{cubic_average, sym_diff, Grid, GridError, RealField, Stencil, WaveFunction};
use crate::hartree::{hartree_potential, ConvolutionMethod, ConvolutionPlan, HartreeError, KernelSampling};
use crate::linalg::{assemble_hamiltonian, CayleyStepper, LinalgError, SolveStrategy, SparseHermitianOperator};

#[derive(Debug, Error)]
pub enum SplittingError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Hartree(#[from] HartreeError),
    #[error("step {step} failed: {source}")]
    Step { step: usize, source: LinalgError },
}

type ComplexFn = Arc<dyn Fn(&[f64; 3]) -> Complex64 + Send + Sync>;

#[derive(Clone)]
pub enum InitialState {
    /// `amplitude · exp(−|x − center|² / (2 width²) + i p·x)`
    Gaussian {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
        momentum: Option<Vec<f64>>,
    },
    Custom(ComplexFn),
}

impl fmt::Debug for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian {
                center,
                width,
                amplitude,
                momentum,
            } => f
                .debug_struct("Gaussian")
                .field("center", center)
                .field("width", width)
                .field("amplitude", amplitude)
                .field("momentum", momentum)
                .finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl InitialState {
    pub fn custom(f: impl Fn(&[f64; 3]) -> Complex64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    /// The packet `(1/π) exp(−((x₁ + 5/2)² + (x₂ − 5/2)²)/2)`.
    pub fn saddle_packet() -> Self {
        Self::Gaussian {
            center: vec![-2.5, 2.5],
            width: 1.0,
            amplitude: 1.0 / std::f64::consts::PI,
            momentum: None,
        }
    }

    pub fn eval(&self, x: &[f64; 3]) -> Complex64 {
        match self {
            Self::Gaussian {
                center,
                width,
                amplitude,
                momentum,
            } => {
                let c = pad3(center);
                let p = momentum.as_deref().map(pad3).unwrap_or([0.0; 3]);
                let r2: f64 = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum();
                let phase: f64 = (0..3).map(|a| p[a] * x[a]).sum();
                Complex64::from_polar(amplitude * (-r2 / (2.0 * width * width)).exp(), phase)
            }
            Self::Custom(f) => f(x),
        }
    }

    /// `(φ₀)_Q`.
    pub fn sample(&self, grid: &Grid) -> Result<WaveFunction, GridError> {
        Ok(WaveFunction(cubic_average(|x| self.eval(x), grid)?))
    }
}

#[derive(Debug, Clone)]
pub struct SplittingConfig {
    pub radius: f64,
    pub h: f64,
    pub dim: usize,
    pub final_time: f64,
    pub steps: usize,
    pub potential: PotentialSpec,
    pub magnetic: MagneticPotential,
    /// Smoothing length of the mean-field kernel; `0` gives the linear equation.
    pub epsilon: f64,
    pub kernel_sampling: KernelSampling,
    pub convolution: ConvolutionMethod,
    pub control: Option<ControlFunction>,
    pub initial: InitialState,
    /// Record diagnostics every `cadence` steps (and always at the end).
    pub cadence: usize,
    pub snapshot_times: Vec<f64>,
    pub stencil: Stencil,
    pub solver: SolveStrategy,
    /// Weight of the confinement term in the energy diagnostic.
    pub lambda: f64,
}

impl SplittingConfig {
    /// Linear, field-free, potential-free defaults.
    pub fn new(radius: f64, h: f64, dim: usize, final_time: f64, steps: usize, initial: InitialState) -> Self {
        Self {
            radius,
            h,
            dim,
            final_time,
            steps,
            potential: PotentialSpec::default(),
            magnetic: MagneticPotential::Zero,
            epsilon: 0.0,
            kernel_sampling: KernelSampling::Pointwise,
            convolution: ConvolutionMethod::Fast,
            control: None,
            initial,
            cadence: 1,
            snapshot_times: Vec::new(),
            stencil: Stencil::Paper,
            solver: SolveStrategy::Auto,
            lambda: 1.0,
        }
    }

    pub fn tau(&self) -> f64 {
        self.final_time / self.steps as f64
    }

    pub fn is_linear(&self) -> bool {
        self.epsilon == 0.0
    }

    pub fn grid(&self) -> Result<Grid, GridError> {
        Grid::new(self.radius, self.h, self.dim)
    }

    pub fn validate(&self) -> Result<(), SplittingError> {
        if self.steps == 0 {
            return Err(SplittingError::Config("step count must be at least 1".into()));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(SplittingError::Config("final time must be positive".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(SplittingError::Config("epsilon must be non-negative".into()));
        }
        if self.cadence == 0 {
            return Err(SplittingError::Config("cadence must be at least 1".into()));
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(**t >= 0.0 && **t <= self.final_time * (1.0 + 1e-12))) {
            return Err(SplittingError::Config(format!("snapshot time {t} outside [0, T]")));
        }
        if let Some(u) = &self.control {
            if u.start() > 0.0 || u.end() < self.final_time * (1.0 - 1e-12) {
                return Err(SplittingError::Config("control does not cover [0, T]".into()));
            }
        }
        Ok(())
    }
}

/// Everything in a run that does not depend on the control.
#[derive(Debug)]
pub struct Propagator {
    grid: Grid,
    tau: f64,
    steps: usize,
    lambda: f64,
    vector_potential: SampledVectorPotential,
    stepper: CayleyStepper,
    potential: AssembledPotential,
    plan: Option<ConvolutionPlan>,
    initial: WaveFunction,
}

impl Propagator {
    pub fn new(cfg: &SplittingConfig) -> Result<Self, SplittingError> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let tau = cfg.tau();
        let vector_potential = sample_vector_potential(&grid, &cfg.magnetic)?;
        let kinetic = assemble_hamiltonian(&grid, &vector_potential, None, cfg.stencil)?;
        if !(tau * kinetic.scale()).is_finite() {
            return Err(SplittingError::Config("τ·‖H‖ is not finite".into()));
        }
        let stepper = CayleyStepper::new(kinetic, 0.5 * tau, cfg.solver)?;
        let potential = AssembledPotential::new(&grid, &cfg.potential)?;
        let plan = if cfg.is_linear() {
            None
        } else {
            let kernel = SmoothedKernel::new(cfg.epsilon)?;
            Some(ConvolutionPlan::with_sampling(&grid, kernel, cfg.convolution, cfg.kernel_sampling)?)
        };
        let initial = cfg.initial.sample(&grid)?;
        Ok(Self {
            grid,
            tau,
            steps: cfg.steps,
            lambda: cfg.lambda,
            vector_potential,
            stepper,
            potential,
            plan,
            initial,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn final_time(&self) -> f64 {
        self.tau * self.steps as f64
    }

    pub fn is_linear(&self) -> bool {
        self.plan.is_none()
    }

    pub fn initial_state(&self) -> &WaveFunction {
        &self.initial
    }

    pub fn kinetic_operator(&self) -> &SparseHermitianOperator {
        self.stepper.operator()
    }

    /// The `C(τ/2)` half-step propagator.
    pub fn stepper(&self) -> &CayleyStepper {
        &self.stepper
    }

    pub fn potential(&self) -> &AssembledPotential {
        &self.potential
    }

    pub fn vector_potential(&self) -> &SampledVectorPotential {
        &self.vector_potential
    }

    pub fn plan(&self) -> Option<&ConvolutionPlan> {
        self.plan.as_ref()
    }

    /// Allowed relative mass drift over a full run.
    pub fn unitarity_budget(&self) -> f64 {
        let per_solve = if self.stepper.is_direct() { 1e-12 } else { 1e-9 };
        2.0 * self.steps as f64 * per_solve + 1e-12
    }

    /// Control value frozen over step `k`.
    pub fn control_value(&self, control: Option<&ControlFunction>, k: usize) -> f64 {
        control.map_or(0.0, |u| u.eval_clamped((k as f64 + 0.5) * self.tau))
    }

    /// `𝒱(φ⁻)` for step `k`.
    pub fn total_potential(
        &self,
        phi_minus: &WaveFunction,
        control: Option<&ControlFunction>,
        k: usize,
    ) -> Result<RealField, SplittingError> {
        let mut v = self.potential.at(self.control_value(control, k));
        if let Some(plan) = &self.plan {
            let w = hartree_potential(phi_minus, plan)?;
            for (a, b) in v.values_mut().iter_mut().zip(w.values()) {
                *a += b;
            }
        }
        Ok(v)
    }

    pub fn step(&self, psi: &WaveFunction, control: Option<&ControlFunction>, k: usize) -> Result<WaveFunction, SplittingError> {
        let wrap = |source| SplittingError::Step { step: k, source };
        let minus = self.stepper.step(psi).map_err(wrap)?;
        let v = self.total_potential(&minus, control, k)?;
        let plus = potential_phase(&minus, &v, self.tau)?;
        self.stepper.step(&plus).map_err(wrap)
    }

    /// Runs all steps from `(φ₀)_Q`, calling `observer(k, t_k, ψ_k)` for
    /// `k = 0..=N`.
    pub fn run(
        &self,
        control: Option<&ControlFunction>,
        mut observer: impl FnMut(usize, f64, &WaveFunction) -> Result<(), SplittingError>,
    ) -> Result<WaveFunction, SplittingError> {
        let mut psi = self.initial.clone();
        observer(0, 0.0, &psi)?;
        for k in 0..self.steps {
            psi = self.step(&psi, control, k)?;
            observer(k + 1, (k + 1) as f64 * self.tau, &psi)?;
        }
        Ok(psi)
    }

    pub fn final_state(&self, control: Option<&ControlFunction>) -> Result<WaveFunction, SplittingError> {
        self.run(control, |_, _, _| Ok(()))
    }

    /// All states `ψ_0 ..= ψ_N`.
    pub fn trajectory(&self, control: Option<&ControlFunction>) -> Result<Vec<WaveFunction>, SplittingError> {
        let mut out = Vec::with_capacity(self.steps + 1);
        self.run(control, |_, _, psi| {
            out.push(psi.clone());
            Ok(())
        })?;
        Ok(out)
    }

    pub fn diagnostics(&self, t: f64, psi: &WaveFunction) -> Result<Diagnostics, SplittingError> {
        diagnostics(t, psi, self)
    }
}

/// `ψ_j ↦ ψ_j exp(−iτV_j)`.
pub fn potential_phase(psi: &WaveFunction, potential: &RealField, tau: f64) -> Result<WaveFunction, SplittingError> {
    if psi.grid() != potential.grid() {
        return Err(SplittingError::Grid(GridError::Mismatch));
    }
    let mut out = psi.clone();
    for (z, v) in out.values_mut().iter_mut().zip(potential.values()) {
        *z *= Complex64::from_polar(1.0, -tau * v);
    }
    Ok(out)
}

/// One step from `t_k`; `k` is recovered from `t_k / τ`.
pub fn strang_step(
    state: &WaveFunction,
    t_k: f64,
    propagator: &Propagator,
    control: Option<&ControlFunction>,
) -> Result<WaveFunction, SplittingError> {
    let k = (t_k / propagator.tau()).round() as usize;
    propagator.step(state, control, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    /// Discrete `H¹` norm with symmetric differences.
    pub h1: f64,
    /// `‖|x| ψ‖₂`
    pub w1: f64,
    /// `‖|x|² ψ‖₂`
    pub w2: f64,
    /// `H¹₁` weighted Sobolev norm.
    pub h1_1: f64,
    /// `H²₂` weighted Sobolev norm.
    pub h2_2: f64,
    pub energy: f64,
    /// `‖ψ‖₂ + ‖(−i∇^h − A)²ψ‖₂`
    pub magnetic_h2: f64,
    pub centroid: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub requested: f64,
    pub time: f64,
    pub state: WaveFunction,
}

#[derive(Debug, Clone)]
pub struct EvolveResult {
    pub final_state: WaveFunction,
    pub series: Vec<Diagnostics>,
    pub snapshots: Vec<Snapshot>,
    pub unitarity_budget: f64,
}

impl EvolveResult {
    pub fn max_relative_mass_drift(&self) -> f64 {
        let m0 = self.series.first().map_or(0.0, |d| d.mass);
        if m0 == 0.0 {
            return 0.0;
        }
        self.series.iter().map(|d| (d.mass - m0).abs() / m0).fold(0.0, f64::max)
    }
}

pub fn evolve(cfg: &SplittingConfig) -> Result<EvolveResult, SplittingError> {
    let prop = Propagator::new(cfg)?;
    evolve_with(&prop, cfg)
}

/// Runs a prepared propagator with the cadence, snapshot and control settings
/// of `cfg`.
pub fn evolve_with(prop: &Propagator, cfg: &SplittingConfig) -> Result<EvolveResult, SplittingError> {
    let tau = prop.tau();
    let n = prop.steps();
    let mut wanted: Vec<(f64, usize)> = cfg
        .snapshot_times
        .iter()
        .map(|t| (*t, ((t / tau).round() as usize).min(n)))
        .collect();
    wanted.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.total_cmp(&b.0)));
    let mut series = Vec::new();
    let mut snapshots = Vec::new();
    let final_state = prop.run(cfg.control.as_ref(), |k, t, psi| {
        if k % cfg.cadence == 0 || k == n {
            series.push(prop.diagnostics(t, psi)?);
        }
        for (req, _) in wanted.iter().filter(|(_, idx)| *idx == k) {
            snapshots.push(Snapshot {
                requested: *req,
                time: t,
                state: psi.clone(),
            });
        }
        Ok(())
    })?;
    Ok(EvolveResult {
        final_state,
        series,
        snapshots,
        unitarity_budget: prop.unitarity_budget(),
    })
}

fn radius_sq(x: &[f64; 3]) -> f64 {
    x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
}

/// `‖|x|ⁿ ψ‖₂`
pub fn weighted_norm(psi: &WaveFunction, n: u32) -> f64 {
    let g = psi.grid();
    let s: f64 = psi
        .values()
        .iter()
        .enumerate()
        .map(|(i, z)| radius_sq(&g.coords(i)).powi(n as i32) * z.norm_sqr())
        .sum();
    (s * g.cell_volume()).sqrt()
}

/// `Σ_{|α| ≤ k} ‖δ^α ψ‖²` for `k ≤ 2`, with mixed derivatives counted once per
/// ordered pair.
fn sobolev_sq(psi: &WaveFunction, k: u32) -> Result<f64, GridError> {
    let mut total = psi.mass();
    if k == 0 {
        return Ok(total);
    }
    let d = psi.grid().dim();
    let first: Vec<_> = (0..d).map(|a| sym_diff(psi.field(), a)).collect::<Result<_, _>>()?;
    total += first.iter().map(|f| f.norm_sq()).sum::<f64>();
    if k >= 2 {
        for f in &first {
            for b in 0..d {
                total += sym_diff(f, b)?.norm_sq();
            }
        }
    }
    Ok(total)
}

pub fn h1_norm(psi: &WaveFunction) -> f64 {
    sobolev_sq(psi, 1).expect("axes in range").sqrt()
}

/// `sqrt(‖ψ‖²_{H^k} + ‖|x|ⁿ ψ‖²)` for `k ≤ 2`.
pub fn weighted_sobolev_norm(psi: &WaveFunction, k: u32, n: u32) -> f64 {
    assert!(k <= 2, "derivative order above 2 is not supported");
    (sobolev_sq(psi, k).expect("axes in range") + weighted_norm(psi, n).powi(2)).sqrt()
}

pub fn centroid(psi: &WaveFunction) -> [f64; 3] {
    let m = psi.mass();
    let mut c = [0.0; 3];
    if m == 0.0 {
        return c;
    }
    let g = psi.grid();
    for (i, z) in psi.values().iter().enumerate() {
        let x = g.coords(i);
        let w = z.norm_sqr();
        for a in 0..3 {
            c[a] += x[a] * w;
        }
    }
    c.map(|v| v * g.cell_volume() / m)
}

/// `h^d Σ |∇^h ψ|² + λ(1 + |x|²)|ψ|² + ½ (f_ε ∗ |ψ|²)|ψ|²`
pub fn energy(psi: &WaveFunction, lambda: f64, plan: Option<&ConvolutionPlan>) -> Result<f64, SplittingError> {
    let g = psi.grid();
    let grad: f64 = (0..g.dim())
        .map(|a| sym_diff(psi.field(), a).map(|f| f.norm_sq()))
        .sum::<Result<f64, _>>()?;
    let conf: f64 = psi
        .values()
        .iter()
        .enumerate()
        .map(|(i, z)| (1.0 + radius_sq(&g.coords(i))) * z.norm_sqr())
        .sum::<f64>()
        * g.cell_volume();
    let mean_field = match plan {
        Some(p) => {
            let w = hartree_potential(psi, p)?;
            0.5 * g.cell_volume() * w.values().iter().zip(psi.values()).map(|(v, z)| v * z.norm_sqr()).sum::<f64>()
        }
        None => 0.0,
    };
    Ok(grad + lambda * conf + mean_field)
}

/// `‖ψ‖₂ + ‖Hψ‖₂` with `H` the kinetic operator.
pub fn magnetic_h2_norm(psi: &WaveFunction, kinetic: &SparseHermitianOperator) -> Result<f64, SplittingError> {
    let hpsi = kinetic.apply(psi.field())?;
    Ok(psi.norm() + hpsi.norm())
}

pub fn diagnostics(t: f64, psi: &WaveFunction, prop: &Propagator) -> Result<Diagnostics, SplittingError> {
    if psi.grid() != prop.grid() {
        return Err(SplittingError::Grid(GridError::Mismatch));
    }
    let w1 = weighted_norm(psi, 1);
    let w2 = weighted_norm(psi, 2);
    let s1 = sobolev_sq(psi, 1)?;
    let s2 = sobolev_sq(psi, 2)?;
    Ok(Diagnostics {
        t,
        mass: psi.mass(),
        h1: s1.sqrt(),
        w1,
        w2,
        h1_1: (s1 + w1 * w1).sqrt(),
        h2_2: (s2 + w2 * w2).sqrt(),
        energy: energy(psi, prop.lambda, prop.plan())?,
        magnetic_h2: magnetic_h2_norm(psi, prop.kinetic_operator())?,
        centroid: centroid(psi),
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("truncation radius needs positive η, M and tolerance")]
pub struct RadiusError;

/// Smallest `R` with `M R^{−η} ≤ tol`.
pub fn truncation_radius(eta: f64, bound: f64, tol: f64) -> Result<f64, RadiusError> {
    if !(eta > 0.0 && bound > 0.0 && tol > 0.0) {
        return Err(RadiusError);
    }
    Ok((bound / tol).powf(1.0 / eta))
}

/// `‖ψ 1_{|x| ≥ R}‖₂`
pub fn tail_norm(psi: &WaveFunction, radius: f64) -> f64 {
    let g = psi.grid();
    let s: f64 = psi
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| radius_sq(&g.coords(*i)) >= radius * radius)
        .map(|(_, z)| z.norm_sqr())
        .sum();
    (s * g.cell_volume()).sqrt()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Slopes between consecutive points; `None` for the first.
pub fn pairwise_rates(xs: &[f64], ys: &[f64]) -> Vec<Option<f64>> {
    (0..xs.len())
        .map(|i| (i > 0).then(|| (ys[i] / ys[i - 1]).ln() / (xs[i] / xs[i - 1]).ln()))
        .collect()
}
