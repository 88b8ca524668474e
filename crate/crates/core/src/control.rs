//! Cost functional `I(u) = ⟨ψ(T), Sψ(T)⟩ + κ‖u'‖²` for the linear equation,
//! its adjoint-based derivative, and a value search over sine controls.
//!
//! The derivative is the exact derivative of the discrete map `u ↦ I(u)`.
//! With `C₋ = C(−τ/2)` the adjoint runs backwards from `ζ_N = Sψ_N` through
//!
//! ```text
//! χ_k = C₋ ζ_{k+1},   ζ_k = C₋ exp(+iτV_k) χ_k
//! ```
//!
//! and the coupling density at the step midpoint `t_k + τ/2` is
//! `c_k = σ Im⟨χ_k, (V_con)_Q φ⁺_k⟩` with `σ = +2`, where `φ⁺_k` is the
//! forward state right after the phase. Then
//!
//! ```text
//! dI(u)[h] = 2κ ∫ u'h' + τ Σ_k c_k h(t_k + τ/2).
//! ```
//!
//! Only functional *values* are approximated here. Optimal controls are not
//! in general computable from finitely many evaluations, so the search
//! reports the best value found, not a minimizer.

use rayon::prelude::*;
use thiserror::Error;

use crate::fields::{
    sample_vector_potential, ControlFunction, FieldError, MagneticPotential, ScalarFunction,
};
use crate::grid::{Grid, WaveFunction};
use crate::linalg::{assemble_hamiltonian, CayleyStepper, LinalgError, SparseHermitianOperator, DENSE_CAP};
use crate::splitting::{potential_phase, Propagator, SplittingConfig, SplittingError};

/// Sign of the coupling density.
pub const COUPLING_SIGN: f64 = 2.0;

/// Lowest admissible eigenvalue of a Schrödinger-type penalty operator.
pub const POSITIVITY_TOLERANCE: f64 = -1e-8;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("control needs the linear equation; disable the mean-field term")]
    Nonlinear,
    #[error("control must vanish at t = 0 and t = T")]
    Boundary,
    #[error("the optimality residual needs at least 3 knots, got {0}")]
    TooFewKnots(usize),
    #[error("target state must have unit mass, got {0}")]
    TargetMass(f64),
    #[error("penalty operator is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("penalty weight must be positive")]
    Kappa,
    #[error("target lives on another grid")]
    GridMismatch,
    #[error(transparent)]
    Splitting(#[from] SplittingError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub enum PenaltyOperator {
    Identity,
    /// `S = id − ⟨·, ζ⟩ζ` with `ζ` of unit mass.
    TargetProjection(WaveFunction),
    /// `S = (−i∇^h − A)² + U_Q`.
    DiscreteSchrodinger { potential: ScalarFunction, magnetic: MagneticPotential },
}

#[derive(Debug, Clone)]
pub struct CostFunctionalSpec {
    pub operator: PenaltyOperator,
    pub kappa: f64,
}

impl CostFunctionalSpec {
    pub fn identity(kappa: f64) -> Self {
        Self {
            operator: PenaltyOperator::Identity,
            kappa,
        }
    }
}

#[derive(Debug)]
enum Penalty {
    Identity,
    Projection(WaveFunction),
    Operator(SparseHermitianOperator),
}

impl Penalty {
    fn apply(&self, psi: &WaveFunction) -> Result<WaveFunction, ControlError> {
        Ok(match self {
            Penalty::Identity => psi.clone(),
            Penalty::Projection(z) => {
                let c = z.inner(psi);
                let mut out = psi.clone();
                for (o, zv) in out.values_mut().iter_mut().zip(z.values()) {
                    *o -= c * zv;
                }
                out
            }
            Penalty::Operator(op) => WaveFunction(op.apply(psi.field())?),
        })
    }
}

/// Forward and adjoint data for one control.
#[derive(Debug, Clone)]
pub struct GradientData {
    /// `ψ_0 ..= ψ_N`
    pub forward: Vec<WaveFunction>,
    /// `ζ_0 ..= ζ_N`
    pub adjoint: Vec<WaveFunction>,
    /// Step midpoints `t_k + τ/2`.
    pub midpoints: Vec<f64>,
    /// `c_k` at the midpoints.
    pub coupling: Vec<f64>,
}

/// A linear problem prepared for repeated evaluation.
#[derive(Debug)]
pub struct ControlProblem {
    propagator: Propagator,
    backward: CayleyStepper,
    penalty: Penalty,
    kappa: f64,
}

impl ControlProblem {
    pub fn new(spec: &CostFunctionalSpec, cfg: &SplittingConfig) -> Result<Self, ControlError> {
        if !cfg.is_linear() {
            return Err(ControlError::Nonlinear);
        }
        if !(spec.kappa > 0.0 && spec.kappa.is_finite()) {
            return Err(ControlError::Kappa);
        }
        let propagator = Propagator::new(cfg)?;
        let grid = *propagator.grid();
        let penalty = build_penalty(&spec.operator, &grid, cfg)?;
        let backward = CayleyStepper::new(propagator.kinetic_operator().clone(), -0.5 * propagator.tau(), cfg.solver)?;
        Ok(Self {
            propagator,
            backward,
            penalty,
            kappa: spec.kappa,
        })
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn check_ends(&self, u: &ControlFunction) -> Result<(), ControlError> {
        if !u.vanishes_at_ends() {
            return Err(ControlError::Boundary);
        }
        Ok(())
    }

    /// `⟨ψ, Sψ⟩`
    pub fn state_term(&self, psi: &WaveFunction) -> Result<f64, ControlError> {
        let s = self.penalty.apply(psi)?;
        let q = psi.inner(&s);
        debug_assert!(q.im.abs() <= 1e-12 * q.re.abs().max(1.0));
        Ok(q.re)
    }

    pub fn cost(&self, u: &ControlFunction) -> Result<f64, ControlError> {
        self.check_ends(u)?;
        let psi = self.propagator.final_state(Some(u))?;
        Ok(self.state_term(&psi)? + self.kappa * u.h10_sq())
    }

    /// `ζ_0 ..= ζ_N` from terminal data `ζ_N = Sψ_T`.
    pub fn adjoint(&self, psi_t: &WaveFunction, u: &ControlFunction) -> Result<Vec<WaveFunction>, ControlError> {
        Ok(self.backward_pass(psi_t, u, None)?.0)
    }

    fn backward_pass(
        &self,
        psi_t: &WaveFunction,
        u: &ControlFunction,
        forward_plus: Option<&[WaveFunction]>,
    ) -> Result<(Vec<WaveFunction>, Vec<f64>), ControlError> {
        let p = &self.propagator;
        let n = p.steps();
        let con = &p.potential().control_part;
        let mut zeta = vec![WaveFunction::zeros(p.grid()); n + 1];
        let mut coupling = vec![0.0; n];
        zeta[n] = self.penalty.apply(psi_t)?;
        for k in (0..n).rev() {
            let wrap = |source| SplittingError::Step { step: k, source };
            let chi = self.backward.step(&zeta[k + 1]).map_err(wrap)?;
            if let Some(plus) = forward_plus {
                let hd = p.grid().cell_volume();
                let im: f64 = chi
                    .values()
                    .iter()
                    .zip(plus[k].values())
                    .zip(con.values())
                    .map(|((a, b), v)| (a.conj() * b).im * v)
                    .sum();
                coupling[k] = COUPLING_SIGN * hd * im;
            }
            let v = p.potential().at(p.control_value(Some(u), k));
            let rotated = potential_phase(&chi, &v, -p.tau())?;
            zeta[k] = self.backward.step(&rotated).map_err(wrap)?;
        }
        Ok((zeta, coupling))
    }

    pub fn gradient_data(&self, u: &ControlFunction) -> Result<GradientData, ControlError> {
        self.check_ends(u)?;
        let p = &self.propagator;
        let n = p.steps();
        let mut forward = Vec::with_capacity(n + 1);
        let mut plus = Vec::with_capacity(n);
        let mut psi = p.initial_state().clone();
        for k in 0..n {
            let wrap = |source| SplittingError::Step { step: k, source };
            let minus = p.stepper().step(&psi).map_err(wrap)?;
            let v = p.total_potential(&minus, Some(u), k)?;
            let phi = potential_phase(&minus, &v, p.tau())?;
            let next = p.stepper().step(&phi).map_err(wrap)?;
            forward.push(std::mem::replace(&mut psi, next));
            plus.push(phi);
        }
        forward.push(psi);
        let (adjoint, coupling) = self.backward_pass(&forward[n], u, Some(&plus))?;
        let midpoints = (0..n).map(|k| (k as f64 + 0.5) * p.tau()).collect();
        Ok(GradientData {
            forward,
            adjoint,
            midpoints,
            coupling,
        })
    }

    pub fn directional_derivative(&self, u: &ControlFunction, dir: &ControlFunction) -> Result<f64, ControlError> {
        self.check_ends(dir)?;
        let data = self.gradient_data(u)?;
        Ok(self.derivative_from(&data, u, dir))
    }

    /// Same derivative, reusing forward and adjoint data.
    pub fn derivative_from(&self, data: &GradientData, u: &ControlFunction, dir: &ControlFunction) -> f64 {
        let tau = self.propagator.tau();
        let coupling: f64 = data
            .midpoints
            .iter()
            .zip(&data.coupling)
            .map(|(t, c)| c * dir.eval_clamped(*t))
            .sum();
        2.0 * self.kappa * u.h10_inner(dir) + tau * coupling
    }
}

fn build_penalty(op: &PenaltyOperator, grid: &Grid, cfg: &SplittingConfig) -> Result<Penalty, ControlError> {
    Ok(match op {
        PenaltyOperator::Identity => Penalty::Identity,
        PenaltyOperator::TargetProjection(z) => {
            if z.grid() != grid {
                return Err(ControlError::GridMismatch);
            }
            let m = z.mass();
            if (m - 1.0).abs() > 1e-10 {
                return Err(ControlError::TargetMass(m));
            }
            Penalty::Projection(z.clone())
        }
        PenaltyOperator::DiscreteSchrodinger { potential, magnetic } => {
            let a = sample_vector_potential(grid, magnetic)?;
            let u_q = potential.cell_average(grid).map_err(FieldError::from)?;
            let op = assemble_hamiltonian(grid, &a, Some(&u_q), cfg.stencil)?;
            if op.dim() <= DENSE_CAP {
                let lo = op.smallest_eigenvalue()?;
                if lo < POSITIVITY_TOLERANCE {
                    return Err(ControlError::NotPositive(lo));
                }
            } else {
                log::warn!("penalty operator has {} rows; positivity check skipped", op.dim());
            }
            Penalty::Operator(op)
        }
    })
}

pub fn cost_functional(u: &ControlFunction, spec: &CostFunctionalSpec, cfg: &SplittingConfig) -> Result<f64, ControlError> {
    ControlProblem::new(spec, cfg)?.cost(u)
}

pub fn adjoint_solve(
    psi_t: &WaveFunction,
    spec: &CostFunctionalSpec,
    cfg: &SplittingConfig,
    u: &ControlFunction,
) -> Result<Vec<WaveFunction>, ControlError> {
    ControlProblem::new(spec, cfg)?.adjoint(psi_t, u)
}

pub fn directional_derivative(
    u: &ControlFunction,
    dir: &ControlFunction,
    spec: &CostFunctionalSpec,
    cfg: &SplittingConfig,
) -> Result<f64, ControlError> {
    ControlProblem::new(spec, cfg)?.directional_derivative(u, dir)
}

/// `r(t_i) = −2κ u''(t_i) + c(t_i)` on the interior knots of `u`, with `u''`
/// the knot second difference and `c` interpolated from the midpoints.
/// Stationary controls give `r ≡ 0`, and `∫ h r` reproduces the directional
/// derivative for `h` piecewise linear on the same knots.
pub fn optimality_residual(u: &ControlFunction, data: &GradientData, kappa: f64) -> Result<Vec<(f64, f64)>, ControlError> {
    let knots = u.knots();
    if knots.len() < 3 {
        return Err(ControlError::TooFewKnots(knots.len()));
    }
    let out = knots
        .windows(3)
        .map(|w| {
            let (t0, u0) = w[0];
            let (t1, u1) = w[1];
            let (t2, u2) = w[2];
            let jump = (u2 - u1) / (t2 - t1) - (u1 - u0) / (t1 - t0);
            let upp = jump / (0.5 * (t2 - t0));
            (t1, -2.0 * kappa * upp + interpolate(&data.midpoints, &data.coupling, t1))
        })
        .collect();
    Ok(out)
}

fn interpolate(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    match xs.iter().position(|x| *x >= t) {
        None => *ys.last().unwrap_or(&0.0),
        Some(0) => ys[0],
        Some(i) => {
            let w = (t - xs[i - 1]) / (xs[i] - xs[i - 1]);
            ys[i - 1] + w * (ys[i] - ys[i - 1])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// `I(0)`
    pub baseline: f64,
    pub best: f64,
    /// Sine coefficients `a_1 ..= a_K` of the best control.
    pub coefficients: Vec<f64>,
    /// Box half-widths for each coefficient.
    pub bounds: Vec<f64>,
    pub evaluations: usize,
}

/// `Σ_k a_k sin(kπt/T)` sampled at the step times.
pub fn sine_control(coefficients: &[f64], final_time: f64, steps: usize) -> ControlFunction {
    let mut u = ControlFunction::sampled(final_time, steps, |t| {
        coefficients
            .iter()
            .enumerate()
            .map(|(i, a)| a * ((i + 1) as f64 * std::f64::consts::PI * t / final_time).sin())
            .sum()
    });
    // sin(kπ) is only zero up to rounding
    let knots: Vec<(f64, f64)> = u.knots().to_vec();
    let last = knots.len() - 1;
    u = ControlFunction::new(
        knots
            .into_iter()
            .enumerate()
            .map(|(i, (t, v))| (t, if i == 0 || i == last { 0.0 } else { v }))
            .collect(),
    )
    .expect("sorted knots");
    u
}

/// `|a_k| ≤ sqrt(2T I(0)/κ)/(kπ)`, since any control beating `u = 0` has
/// `κ Σ a_k² (kπ)²/(2T) ≤ I(0)`.
pub fn coefficient_bound(k: usize, final_time: f64, baseline: f64, kappa: f64) -> f64 {
    (2.0 * final_time * baseline / kappa).sqrt() / (k as f64 * std::f64::consts::PI)
}

const MAX_SWEEPS: usize = 32;

impl ControlProblem {
    fn sine_cost(&self, a: &[f64]) -> Result<f64, ControlError> {
        let p = &self.propagator;
        self.cost(&sine_control(a, p.final_time(), p.steps()))
    }

    /// Coordinate search at every `(K, level)` cell, each cell starting from
    /// the better of its two predecessors, so the result is non-increasing in
    /// both `modes` and `levels`.
    pub fn fourier_search(&self, modes: usize, levels: usize) -> Result<SearchResult, ControlError> {
        let t_end = self.propagator.final_time();
        let baseline = self.sine_cost(&[])?;
        let bounds: Vec<f64> = (1..=modes).map(|k| coefficient_bound(k, t_end, baseline, self.kappa)).collect();
        let mut evaluations = 1;
        if modes == 0 {
            return Ok(SearchResult {
                baseline,
                best: baseline,
                coefficients: Vec::new(),
                bounds,
                evaluations,
            });
        }
        // prev[l]: best (value, coefficients) with K − 1 modes at level l
        let mut prev: Vec<(f64, Vec<f64>)> = vec![(baseline, Vec::new()); levels + 1];
        for kk in 1..=modes {
            let mut row: Vec<(f64, Vec<f64>)> = Vec::with_capacity(levels + 1);
            for l in 0..=levels {
                let mut start = prev[l].clone();
                start.1.resize(kk, 0.0);
                if let Some(left) = row.last() {
                    if left.0 < start.0 {
                        start = left.clone();
                    }
                }
                let (val, coef, evals) = self.coordinate_search(start, &bounds[..kk], l)?;
                evaluations += evals;
                row.push((val, coef));
            }
            prev = row;
        }
        let (best, coefficients) = prev.pop().expect("levels + 1 cells");
        Ok(SearchResult {
            baseline,
            best,
            coefficients,
            bounds,
            evaluations,
        })
    }

    fn coordinate_search(&self, start: (f64, Vec<f64>), bounds: &[f64], level: usize) -> Result<(f64, Vec<f64>, usize), ControlError> {
        let (mut best, mut a) = start;
        let steps = 1i64 << level;
        let mut evals = 0;
        for _ in 0..MAX_SWEEPS {
            let mut improved = false;
            for (k, b) in bounds.iter().enumerate() {
                let trials: Vec<f64> = (-steps..=steps)
                    .map(|j| b * j as f64 / steps as f64)
                    .filter(|v| *v != a[k])
                    .collect();
                let values: Vec<f64> = trials
                    .par_iter()
                    .map(|v| {
                        let mut c = a.clone();
                        c[k] = *v;
                        self.sine_cost(&c)
                    })
                    .collect::<Result<_, _>>()?;
                evals += values.len();
                if let Some((i, v)) = values.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)) {
                    if *v < best {
                        best = *v;
                        a[k] = trials[i];
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        Ok((best, a, evals))
    }
}

pub fn fourier_control_search(
    spec: &CostFunctionalSpec,
    cfg: &SplittingConfig,
    modes: usize,
    levels: usize,
) -> Result<SearchResult, ControlError> {
    ControlProblem::new(spec, cfg)?.fourier_search(modes, levels)
}
