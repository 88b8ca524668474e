//! Potentials, vector potentials, smoothed Coulomb kernels and control functions,
//! realized as lattice samples.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{cell_contains, cubic_average_flagged, sym_diff, Grid, GridError, RealField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("a constant magnetic field needs at least two dimensions")]
    ConstantFieldDimension,
    #[error("bounded vector potential has {got} components, grid dimension is {dim}")]
    ComponentCount { got: usize, dim: usize },
    #[error("vector potential component {component} is not finite at {node:?}")]
    NonFinite { component: usize, node: [f64; 3] },
    #[error("{0} violates the quadratic growth bound")]
    Growth(&'static str),
    #[error("control knots must be strictly increasing and at least two (offending index {0})")]
    Knots(usize),
    #[error("time {t} outside the control interval [{start}, {end}]")]
    TimeRange { t: f64, start: f64, end: f64 },
    #[error("smoothing length must be non-negative and finite, got {0}")]
    Epsilon(f64),
}

type Eval = Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>;

/// A real function of position, optionally with isolated point singularities
/// whose cells need adaptive quadrature.
#[derive(Clone)]
pub struct ScalarFunction {
    eval: Eval,
    singular_points: Vec<[f64; 3]>,
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFunction")
            .field("singular_points", &self.singular_points)
            .finish_non_exhaustive()
    }
}

impl ScalarFunction {
    pub fn new(f: impl Fn(&[f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(f),
            singular_points: Vec::new(),
        }
    }

    pub fn with_singularity(mut self, point: [f64; 3]) -> Self {
        self.singular_points.push(point);
        self
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0)
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        (self.eval)(x)
    }

    pub fn singular_points(&self) -> &[[f64; 3]] {
        &self.singular_points
    }

    /// Cell averages, subdividing the cells that contain a singular point.
    pub fn cell_average(&self, grid: &Grid) -> Result<RealField, GridError> {
        let dim = grid.dim();
        cubic_average_flagged(
            |x| self.eval(x),
            grid,
            |c, side| self.singular_points.iter().any(|p| cell_contains(c, side, p, dim)),
        )
    }
}

/// Named analytic forms available from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalyticForm {
    Zero,
    Constant {
        value: f64,
    },
    /// `scale · |x|²`
    Harmonic {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale · (x₁² − x₂²)`
    Saddle {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `strength / |x − center|`
    Coulomb {
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default = "one")]
        strength: f64,
    },
    /// `amplitude · exp(−|x − center|² / (2 width²))`
    Gaussian {
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

pub(crate) fn pad3(v: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, x) in out.iter_mut().zip(v) {
        *o = *x;
    }
    out
}

fn dist_sq(x: &[f64; 3], c: &[f64; 3]) -> f64 {
    (0..3).map(|a| (x[a] - c[a]).powi(2)).sum()
}

impl AnalyticForm {
    pub fn to_function(&self) -> ScalarFunction {
        match *self {
            AnalyticForm::Zero => ScalarFunction::zero(),
            AnalyticForm::Constant { value } => ScalarFunction::new(move |_| value),
            AnalyticForm::Harmonic { scale } => {
                ScalarFunction::new(move |x| scale * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]))
            }
            AnalyticForm::Saddle { scale } => {
                ScalarFunction::new(move |x| scale * (x[0] * x[0] - x[1] * x[1]))
            }
            AnalyticForm::Coulomb {
                ref center,
                strength,
            } => {
                let c = pad3(center);
                ScalarFunction::new(move |x| strength / dist_sq(x, &c).sqrt()).with_singularity(c)
            }
            AnalyticForm::Gaussian {
                ref center,
                width,
                amplitude,
            } => {
                let c = pad3(center);
                ScalarFunction::new(move |x| amplitude * (-dist_sq(x, &c) / (2.0 * width * width)).exp())
            }
        }
    }
}

/// `V = W_reg + W_sing + u · V_con`.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub w_reg: ScalarFunction,
    pub w_sing: ScalarFunction,
    pub v_con: ScalarFunction,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            w_reg: ScalarFunction::zero(),
            w_sing: ScalarFunction::zero(),
            v_con: ScalarFunction::zero(),
        }
    }
}

impl PotentialSpec {
    pub fn regular(w_reg: ScalarFunction) -> Self {
        Self {
            w_reg,
            ..Self::default()
        }
    }
}

/// Cell-averaged potential parts on one grid.
#[derive(Debug, Clone)]
pub struct AssembledPotential {
    /// `(W_reg)_Q + (W_sing)_Q`
    pub static_part: RealField,
    /// `(V_con)_Q`
    pub control_part: RealField,
    /// `sup_j |W_reg(x_j)| / (1 + |x_j|²)` on the nodes.
    pub rho_reg: f64,
    /// Same bound for `V_con`.
    pub rho_con: f64,
}

impl AssembledPotential {
    pub fn new(grid: &Grid, spec: &PotentialSpec) -> Result<Self, FieldError> {
        let rho_reg = growth_bound(grid, &spec.w_reg).ok_or(FieldError::Growth("W_reg"))?;
        let rho_con = growth_bound(grid, &spec.v_con).ok_or(FieldError::Growth("V_con"))?;
        let reg = spec.w_reg.cell_average(grid)?;
        let sing = spec.w_sing.cell_average(grid)?;
        let control_part = spec.v_con.cell_average(grid)?;
        let static_values = reg.values().iter().zip(sing.values()).map(|(a, b)| a + b).collect();
        Ok(Self {
            static_part: RealField::from_values(grid, static_values)?,
            control_part,
            rho_reg,
            rho_con,
        })
    }

    /// Total potential with the control frozen at `u`.
    pub fn at(&self, u: f64) -> RealField {
        let values = self
            .static_part
            .values()
            .iter()
            .zip(self.control_part.values())
            .map(|(s, c)| s + u * c)
            .collect();
        RealField::from_values(self.static_part.grid(), values).expect("same grid")
    }

    pub fn has_control(&self) -> bool {
        self.control_part.values().iter().any(|v| *v != 0.0)
    }
}

fn growth_bound(grid: &Grid, f: &ScalarFunction) -> Option<f64> {
    let mut rho: f64 = 0.0;
    for i in 0..grid.len() {
        let x = grid.coords(i);
        let v = f.eval(&x);
        if !v.is_finite() {
            return None;
        }
        rho = rho.max(v.abs() / (1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]));
    }
    Some(rho)
}

/// `(W_reg)_Q + (W_sing)_Q + u · (V_con)_Q`.
pub fn assemble_potential(grid: &Grid, spec: &PotentialSpec, u: f64) -> Result<RealField, FieldError> {
    Ok(AssembledPotential::new(grid, spec)?.at(u))
}

#[derive(Debug, Clone)]
pub enum MagneticPotential {
    Zero,
    /// Uniform field of strength `b0` along `x₃`, in symmetric gauge
    /// `A = (b0/2)(−x₂, x₁, 0)`.
    ConstantField { b0: f64 },
    /// Arbitrary bounded components, one per spatial axis.
    BoundedSampled { components: Vec<ScalarFunction> },
}

/// Node samples of `A`, one real field per axis.
#[derive(Debug, Clone)]
pub struct SampledVectorPotential {
    pub components: Vec<RealField>,
    /// Lattice estimate of the `W^{1,∞}` bound: the largest node value of any
    /// component or of its symmetric differences away from the boundary.
    pub bound: f64,
}

impl SampledVectorPotential {
    pub fn zero(grid: &Grid) -> Self {
        Self {
            components: (0..grid.dim()).map(|_| RealField::zeros(grid)).collect(),
            bound: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.values().iter().all(|v| *v == 0.0))
    }
}

pub fn sample_vector_potential(
    grid: &Grid,
    spec: &MagneticPotential,
) -> Result<SampledVectorPotential, FieldError> {
    let dim = grid.dim();
    let components: Vec<RealField> = match spec {
        MagneticPotential::Zero => return Ok(SampledVectorPotential::zero(grid)),
        MagneticPotential::ConstantField { b0 } => {
            if dim < 2 {
                return Err(FieldError::ConstantFieldDimension);
            }
            let b = *b0;
            (0..dim)
                .map(|axis| {
                    RealField::from_fn(grid, move |x| match axis {
                        0 => -0.5 * b * x[1],
                        1 => 0.5 * b * x[0],
                        _ => 0.0,
                    })
                })
                .collect()
        }
        MagneticPotential::BoundedSampled { components } => {
            if components.len() != dim {
                return Err(FieldError::ComponentCount {
                    got: components.len(),
                    dim,
                });
            }
            components
                .iter()
                .map(|f| RealField::from_fn(grid, |x| f.eval(x)))
                .collect()
        }
    };
    let mut bound: f64 = 0.0;
    for (k, c) in components.iter().enumerate() {
        for (i, v) in c.values().iter().enumerate() {
            if !v.is_finite() {
                return Err(FieldError::NonFinite {
                    component: k,
                    node: grid.coords(i),
                });
            }
            bound = bound.max(v.abs());
        }
        for axis in 0..dim {
            let d = sym_diff(c, axis)?;
            for (i, v) in d.values().iter().enumerate() {
                if grid.is_deep(i, 1) {
                    bound = bound.max(v.abs());
                }
            }
        }
    }
    Ok(SampledVectorPotential { components, bound })
}

type KernelFn = Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>;

/// `f_ε(x) = (|x|² + ε²)^{-1/2}`, or a user kernel when overridden.
#[derive(Clone)]
pub struct SmoothedKernel {
    epsilon: f64,
    custom: Option<KernelFn>,
}

impl fmt::Debug for SmoothedKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothedKernel")
            .field("epsilon", &self.epsilon)
            .field("custom", &self.custom.is_some())
            .finish()
    }
}

impl SmoothedKernel {
    /// `epsilon = 0` is the bare Coulomb kernel, which is only meaningful for
    /// error budgets; lattice tabulation needs `epsilon > 0`.
    pub fn new(epsilon: f64) -> Result<Self, FieldError> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(FieldError::Epsilon(epsilon));
        }
        Ok(Self {
            epsilon,
            custom: None,
        })
    }

    pub fn custom(f: impl Fn(&[f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            epsilon: 0.0,
            custom: Some(Arc::new(f)),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_custom(&self) -> bool {
        self.custom.is_some()
    }
}

pub fn kernel_eval(kernel: &SmoothedKernel, x: &[f64; 3]) -> f64 {
    match &kernel.custom {
        Some(f) => f(x),
        None => 1.0 / (x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + kernel.epsilon * kernel.epsilon).sqrt(),
    }
}

/// Continuous piecewise-linear control `u(t)` through `(t_i, u_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlFunction {
    knots: Vec<(f64, f64)>,
}

impl ControlFunction {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, FieldError> {
        if knots.len() < 2 {
            return Err(FieldError::Knots(knots.len()));
        }
        for (i, w) in knots.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) || !w[1].1.is_finite() || !w[0].1.is_finite() {
                return Err(FieldError::Knots(i + 1));
            }
        }
        Ok(Self { knots })
    }

    pub fn zero(end: f64) -> Self {
        Self {
            knots: vec![(0.0, 0.0), (end, 0.0)],
        }
    }

    /// Interpolant of `f` at `m + 1` equispaced knots on `[0, end]`.
    pub fn sampled(end: f64, m: usize, f: impl Fn(f64) -> f64) -> Self {
        let m = m.max(1);
        Self {
            knots: (0..=m)
                .map(|k| {
                    let t = end * k as f64 / m as f64;
                    (t, f(t))
                })
                .collect(),
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn start(&self) -> f64 {
        self.knots[0].0
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    /// `u(start) = u(end) = 0`.
    pub fn vanishes_at_ends(&self) -> bool {
        self.knots[0].1 == 0.0 && self.knots[self.knots.len() - 1].1 == 0.0
    }

    pub fn eval(&self, t: f64) -> Result<f64, FieldError> {
        let (start, end) = (self.start(), self.end());
        let slack = 1e-12 * (end - start).abs().max(1.0);
        if !(t >= start - slack && t <= end + slack) {
            return Err(FieldError::TimeRange { t, start, end });
        }
        Ok(self.eval_clamped(t))
    }

    pub(crate) fn eval_clamped(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        let seg = k.partition_point(|&(tk, _)| tk <= t);
        if seg >= k.len() {
            return k[k.len() - 1].1;
        }
        let (t0, u0) = k[seg - 1];
        let (t1, u1) = k[seg];
        u0 + (u1 - u0) * (t - t0) / (t1 - t0)
    }

    /// Piecewise-constant derivative on the segment containing `t`.
    pub fn slope_at(&self, t: f64) -> f64 {
        let k = &self.knots;
        let seg = k.partition_point(|&(tk, _)| tk <= t).clamp(1, k.len() - 1);
        let (t0, u0) = k[seg - 1];
        let (t1, u1) = k[seg];
        (u1 - u0) / (t1 - t0)
    }

    /// `∫ u'(t)² dt`, exact from the slopes.
    pub fn h10_sq(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| {
                let dt = w[1].0 - w[0].0;
                let s = (w[1].1 - w[0].1) / dt;
                s * s * dt
            })
            .sum()
    }

    /// `∫ u'(t) v'(t) dt` over the common interval, exact on the merged knot set.
    pub fn h10_inner(&self, other: &ControlFunction) -> f64 {
        let mut ts: Vec<f64> = self.knots.iter().chain(&other.knots).map(|k| k.0).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let (lo, hi) = (self.start().max(other.start()), self.end().min(other.end()));
        ts.windows(2)
            .filter(|w| w[0] >= lo && w[1] <= hi)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                self.slope_at(mid) * other.slope_at(mid) * (w[1] - w[0])
            })
            .sum()
    }

    /// `self + c · other` sampled on the merged knot set.
    pub fn add_scaled(&self, other: &ControlFunction, c: f64) -> ControlFunction {
        let mut ts: Vec<f64> = self.knots.iter().chain(&other.knots).map(|k| k.0).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ControlFunction {
            knots: ts
                .into_iter()
                .map(|t| (t, self.eval_clamped(t) + c * other.eval_clamped(t)))
                .collect(),
        }
    }
}

pub fn control_eval(u: &ControlFunction, t: f64) -> Result<f64, FieldError> {
    u.eval(t)
}

pub fn control_h10_sq(u: &ControlFunction) -> f64 {
    u.h10_sq()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Mean of `1/|x|` over the cube `[-1/2, 1/2]³`, computed offline by the
    /// pyramid reduction `6 · (1/4) ∫_face dA / |y|` at 30 digits.
    const UNIT_CUBE_INV_R: f64 = 2.380_077_363_979_553_5;

    /// Independent oracle: the same pyramid reduction with a tensor Gauss rule.
    fn cube_inv_r_oracle(a: f64) -> f64 {
        // 2D composite Gauss-Legendre on the face [-a/2, a/2]² at distance a/2.
        let (xs, ws) = gauss_legendre(24);
        let panels = 8;
        let mut s = 0.0;
        let d = a / 2.0;
        for pu in 0..panels {
            for pv in 0..panels {
                let (u0, v0) = (-d + a * pu as f64 / panels as f64, -d + a * pv as f64 / panels as f64);
                let w = a / panels as f64;
                for (xu, wu) in xs.iter().zip(&ws) {
                    for (xv, wv) in xs.iter().zip(&ws) {
                        let u = u0 + 0.5 * w * (xu + 1.0);
                        let v = v0 + 0.5 * w * (xv + 1.0);
                        s += wu * wv * 0.25 * w * w / (u * u + v * v + d * d).sqrt();
                    }
                }
            }
        }
        6.0 * (d / 2.0) * s / a.powi(3)
    }

    fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
        // Newton iteration on Legendre polynomials.
        let mut xs = vec![0.0; n];
        let mut ws = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
                    break;
                }
            }
            xs[i] = x;
        }
        (xs, ws)
    }

    #[test]
    fn oracle_agrees_with_frozen_constant() {
        assert!((cube_inv_r_oracle(1.0) - UNIT_CUBE_INV_R).abs() < 1e-9);
    }

    #[test]
    fn coulomb_cell_average_at_origin() {
        let g = Grid::new(1.0, 0.2, 3).unwrap();
        let spec = PotentialSpec {
            w_sing: AnalyticForm::Coulomb {
                center: vec![],
                strength: 1.0,
            }
            .to_function(),
            ..PotentialSpec::default()
        };
        let v = assemble_potential(&g, &spec, 0.0).unwrap();
        let origin = g.locate(&[0.0; 3]).unwrap();
        let expected = UNIT_CUBE_INV_R / 0.2;
        assert!((cube_inv_r_oracle(0.2) - expected).abs() < 1e-8);
        let rel = (v.values()[origin] - expected).abs() / expected;
        assert!(rel < 1e-6, "rel {rel}");
        assert!(v.values().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn harmonic_average_is_shifted_by_cell_variance() {
        let g = Grid::new(2.0, 0.25, 1).unwrap();
        let v = assemble_potential(&g, &PotentialSpec::regular(AnalyticForm::Harmonic { scale: 1.0 }.to_function()), 0.0).unwrap();
        for i in 0..g.len() {
            let c = g.coords(i)[0];
            assert!((v.values()[i] - (c * c + 0.0625 / 12.0)).abs() < 1e-13);
        }
        let z = assemble_potential(&g, &PotentialSpec::default(), 3.0).unwrap();
        assert!(z.values().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn potential_is_affine_in_control() {
        let g = Grid::new(2.0, 0.25, 2).unwrap();
        let spec = PotentialSpec {
            w_reg: AnalyticForm::Saddle { scale: 1.0 }.to_function(),
            w_sing: ScalarFunction::zero(),
            v_con: AnalyticForm::Gaussian {
                center: vec![0.5, 0.0],
                width: 0.7,
                amplitude: 2.0,
            }
            .to_function(),
        };
        let p = AssembledPotential::new(&g, &spec).unwrap();
        let (a, b) = (p.at(0.3), p.at(-1.2));
        for i in 0..g.len() {
            let lhs = a.values()[i] - b.values()[i];
            let rhs = 1.5 * p.control_part.values()[i];
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + a.values()[i].abs()));
        }
    }

    #[test]
    fn growth_bound_holds_for_averaged_field() {
        let g = Grid::new(4.0, 0.25, 2).unwrap();
        let spec = PotentialSpec::regular(AnalyticForm::Saddle { scale: 1.0 }.to_function());
        let p = AssembledPotential::new(&g, &spec).unwrap();
        assert!(p.rho_reg <= 1.0 + 1e-12);
        for i in 0..g.len() {
            let x = g.coords(i);
            let ratio = p.static_part.values()[i].abs() / (1.0 + x[0] * x[0] + x[1] * x[1]);
            assert!(ratio <= 1.1 * p.rho_reg);
        }
    }

    #[test]
    fn constant_field_gauge() {
        let g = Grid::new(2.0, 1.0, 2).unwrap();
        let a = sample_vector_potential(&g, &MagneticPotential::ConstantField { b0: 1.0 }).unwrap();
        let i = g.locate(&[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(a.components[0].values()[i], -0.5);
        assert_eq!(a.components[1].values()[i], 0.5);

        let z = sample_vector_potential(&g, &MagneticPotential::ConstantField { b0: 0.0 }).unwrap();
        assert!(z.is_zero());

        let g1 = Grid::new(2.0, 0.5, 1).unwrap();
        assert_eq!(
            sample_vector_potential(&g1, &MagneticPotential::ConstantField { b0: 1.0 }).unwrap_err(),
            FieldError::ConstantFieldDimension
        );
    }

    #[test]
    fn bounded_vector_potential_bound() {
        let g = Grid::new(10.0, 0.25, 2).unwrap();
        let c = 0.7;
        let spec = MagneticPotential::BoundedSampled {
            components: vec![
                ScalarFunction::new(move |x| c * x[1].tanh()),
                ScalarFunction::new(move |x| c * x[0].tanh()),
            ],
        };
        let a = sample_vector_potential(&g, &spec).unwrap();
        assert!((a.bound - c).abs() < 1e-7 * c);
        for i in 0..g.len() {
            let x = g.coords(i);
            assert_eq!(a.components[0].values()[i], c * x[1].tanh());
            assert_eq!(a.components[1].values()[i], c * x[0].tanh());
        }
        let bad = MagneticPotential::BoundedSampled {
            components: vec![ScalarFunction::zero()],
        };
        assert!(matches!(
            sample_vector_potential(&g, &bad),
            Err(FieldError::ComponentCount { got: 1, dim: 2 })
        ));
    }

    #[test]
    fn kernel_values() {
        let k = SmoothedKernel::new(0.1).unwrap();
        assert!((kernel_eval(&k, &[0.0; 3]) - 10.0).abs() < 1e-12);
        assert!((kernel_eval(&k, &[1.0, 0.0, 0.0]) - 1.01f64.powf(-0.5)).abs() < 1e-15);
        assert!(SmoothedKernel::new(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn kernel_bounded_by_coulomb_and_cap(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64, eps in 0.01..1.0f64) {
            let k = SmoothedKernel::new(eps).unwrap();
            let r = (x * x + y * y + z * z).sqrt();
            prop_assume!(r > 0.0);
            let v = kernel_eval(&k, &[x, y, z]);
            prop_assert!(v > 0.0);
            prop_assert!(v <= (1.0 / eps).min(1.0 / r) * (1.0 + 1e-15));
        }

        #[test]
        fn knot_insertion_preserves_energy(
            vals in proptest::collection::vec(-2.0..2.0f64, 3..8),
            frac in 0.01..0.99f64,
        ) {
            let n = vals.len();
            let u = ControlFunction::new(vals.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect()).unwrap();
            let seg = (frac * (n - 1) as f64).floor() as usize;
            let t = seg as f64 + 0.5;
            let mut knots = u.knots().to_vec();
            knots.insert(seg + 1, (t, u.eval(t).unwrap()));
            let refined = ControlFunction::new(knots).unwrap();
            prop_assert!((refined.h10_sq() - u.h10_sq()).abs() <= 1e-12 * (1.0 + u.h10_sq()));
            prop_assert!((refined.eval(frac * (n - 1) as f64).unwrap() - u.eval(frac * (n - 1) as f64).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn control_interpolation_and_energy() {
        assert_eq!(ControlFunction::zero(2.0).h10_sq(), 0.0);
        let hat = ControlFunction::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert_eq!(hat.h10_sq(), 2.0);
        assert_eq!(hat.eval(1.0).unwrap(), 1.0);
        assert_eq!(hat.eval(0.5).unwrap(), 0.5);
        assert_eq!(hat.eval(1.5).unwrap(), 0.5);
        assert!(matches!(hat.eval(2.5), Err(FieldError::TimeRange { .. })));
        assert!(matches!(hat.eval(-0.1), Err(FieldError::TimeRange { .. })));
        assert!(hat.vanishes_at_ends());
        assert!(ControlFunction::new(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
        assert!(ControlFunction::new(vec![(0.0, 0.0)]).is_err());
    }

    #[test]
    fn energy_matches_composite_midpoint_quadrature() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut t = 0.0;
        let mut knots = vec![(0.0, 0.0)];
        for _ in 0..9 {
            t += rng.random_range(0.05..0.5);
            knots.push((t, rng.random_range(-1.0..1.0)));
        }
        let u = ControlFunction::new(knots).unwrap();
        let sub = 7;
        let quad: f64 = u
            .knots()
            .windows(2)
            .flat_map(|w| {
                let dt = (w[1].0 - w[0].0) / sub as f64;
                (0..sub).map(move |k| (w[0].0 + (k as f64 + 0.5) * dt, dt))
            })
            .map(|(tm, dt)| {
                // central difference of the interpolant at the midpoint
                let e = 1e-3 * dt;
                let d = (u.eval_clamped(tm + e) - u.eval_clamped(tm - e)) / (2.0 * e);
                d * d * dt
            })
            .sum();
        assert!((quad - u.h10_sq()).abs() < 1e-12 * u.h10_sq().max(1.0) * 1e3);
    }

    #[test]
    fn exact_energy_matches_piecewise_midpoint_rule() {
        let u = ControlFunction::new(vec![(0.0, 0.0), (0.3, 0.7), (1.1, -0.4), (1.5, 0.2), (2.0, 0.0)]).unwrap();
        // midpoint rule applied per segment is exact for piecewise-constant u'²
        let quad: f64 = u
            .knots()
            .windows(2)
            .map(|w| u.slope_at(0.5 * (w[0].0 + w[1].0)).powi(2) * (w[1].0 - w[0].0))
            .sum();
        assert!((quad - u.h10_sq()).abs() < 1e-12);
        assert!((u.h10_inner(&u) - u.h10_sq()).abs() < 1e-12);
    }
}
