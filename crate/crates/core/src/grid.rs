//! Cubic lattice over the truncated box `(-R, R)^d`, cell averaging and the
//! symmetric finite differences used by every operator in the crate.
//!
//! Nodes sit at `x_j = j h` for every integer multi-index with `|j_i h| < R`.
//! Fields store one value per interior node in row-major order (axis 0 is the
//! slowest). Outside the interior every field is read as zero, which realizes
//! the homogeneous Dirichlet condition on the box boundary.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("spatial dimension must be 1, 2 or 3, got {0}")]
    Dimension(usize),
    #[error("grid spacing and radius must be positive and finite (h = {h}, R = {radius})")]
    NonPositive { h: f64, radius: f64 },
    #[error("domain too coarse: spacing h = {h} is not smaller than the radius R = {radius}")]
    TooCoarse { h: f64, radius: f64 },
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    Axis { axis: usize, dim: usize },
    #[error("fields live on different grids")]
    Mismatch,
    #[error("cell average diverged on the cell at node {node:?}")]
    SingularCell { node: [f64; 3] },
    #[error("lattices are incompatible: node {node:?} of the target is not a source node")]
    Incompatible { node: [f64; 3] },
}

/// Which second-difference stencil realizes the discrete Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stencil {
    /// `Σ_i (δ^i_h)²`: the 2h-wide second difference built from the symmetric
    /// first difference. Even and odd sublattices decouple when `A = 0`.
    #[default]
    Paper,
    /// The compact 3-point second difference `[f(x+h) - 2f(x) + f(x-h)] / h²`.
    Compact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    h: f64,
    radius: f64,
    half: usize,
}

impl Grid {
    pub fn new(radius: f64, h: f64, dim: usize) -> Result<Self, GridError> {
        if !(1..=3).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        if !(h > 0.0 && radius > 0.0 && h.is_finite() && radius.is_finite()) {
            return Err(GridError::NonPositive { h, radius });
        }
        if h >= radius {
            return Err(GridError::TooCoarse { h, radius });
        }
        // Largest j with j h < R; ratios within rounding of an integer count as
        // landing on the boundary, which is excluded.
        let ratio = radius / h;
        let nearest = ratio.round();
        let half = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize - 1
        } else {
            ratio.floor() as usize
        };
        Ok(Self {
            dim,
            h,
            radius,
            half,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Largest lattice index `j` on an axis; the axis holds `-half..=half`.
    pub fn half_width(&self) -> usize {
        self.half
    }

    pub fn points_per_axis(&self) -> usize {
        2 * self.half + 1
    }

    pub fn len(&self) -> usize {
        self.points_per_axis().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^d`, the volume of one cell and the weight of the discrete inner product.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis().pow((self.dim - 1 - axis) as u32)
    }

    /// Per-axis positions `0..points_per_axis` of a flat index. Unused axes are 0.
    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let n = self.points_per_axis();
        let mut out = [0; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % n;
            idx /= n;
        }
        out
    }

    pub fn flat_index(&self, multi: [usize; 3]) -> usize {
        let n = self.points_per_axis();
        (0..self.dim).fold(0, |acc, axis| acc * n + multi[axis])
    }

    /// Node coordinates; components beyond `dim` are zero.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = (m[axis] as f64 - self.half as f64) * self.h;
        }
        x
    }

    /// Flat index of the node at coordinates `x`, if `x` is (to rounding) a node.
    pub fn locate(&self, x: &[f64; 3]) -> Option<usize> {
        let mut multi = [0usize; 3];
        for axis in 0..self.dim {
            let j = x[axis] / self.h;
            let jr = j.round();
            if (j - jr).abs() > 1e-7 || jr.abs() > self.half as f64 {
                return None;
            }
            multi[axis] = (jr as i64 + self.half as i64) as usize;
        }
        Some(self.flat_index(multi))
    }

    /// Index of the neighbour `offset` steps along `axis`, or `None` outside the interior.
    pub fn neighbor(&self, idx: usize, axis: usize, offset: i64) -> Option<usize> {
        let pos = self.multi_index(idx)[axis] as i64 + offset;
        if pos < 0 || pos >= self.points_per_axis() as i64 {
            None
        } else {
            Some((idx as i64 + offset * self.stride(axis) as i64) as usize)
        }
    }

    /// Whether the node is at least `k` lattice steps away from every face.
    pub fn is_deep(&self, idx: usize, k: usize) -> bool {
        let n = self.points_per_axis();
        let m = self.multi_index(idx);
        (0..self.dim).all(|a| m[a] >= k && m[a] + k < n)
    }

    pub fn check_axis(&self, axis: usize) -> Result<(), GridError> {
        if axis < self.dim {
            Ok(())
        } else {
            Err(GridError::Axis {
                axis,
                dim: self.dim,
            })
        }
    }
}

/// One value per interior node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    grid: Grid,
    values: Vec<T>,
}

pub type RealField = GridField<f64>;
pub type ComplexField = GridField<Complex64>;

impl<T: Copy + Zero> GridField<T> {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: *grid,
            values: vec![T::zero(); grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64; 3]) -> T) -> Self {
        Self {
            grid: *grid,
            values: (0..grid.len()).map(|i| f(&grid.coords(i))).collect(),
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Mismatch);
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Value at `idx`, or zero when `idx` lies outside the interior.
    pub fn get_or_zero(&self, idx: Option<usize>) -> T {
        idx.map_or_else(T::zero, |i| self.values[i])
    }

    pub fn map<U: Copy + Zero>(&self, f: impl Fn(T) -> U) -> GridField<U> {
        GridField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl RealField {
    pub fn to_complex(&self) -> ComplexField {
        self.map(|v| Complex64::new(v, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl ComplexField {
    /// `⟨u, v⟩ = h^d Σ conj(u_j) v_j`.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        debug_assert_eq!(self.grid, other.grid);
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// A complex field interpreted as a wave function.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction(pub ComplexField);

impl WaveFunction {
    pub fn zeros(grid: &Grid) -> Self {
        Self(ComplexField::zeros(grid))
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64; 3]) -> Complex64) -> Self {
        Self(ComplexField::from_fn(grid, f))
    }

    pub fn grid(&self) -> &Grid {
        self.0.grid()
    }

    pub fn values(&self) -> &[Complex64] {
        self.0.values()
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        self.0.values_mut()
    }

    pub fn field(&self) -> &ComplexField {
        &self.0
    }

    /// `h^d Σ |ψ_j|²`.
    pub fn mass(&self) -> f64 {
        self.0.norm_sq()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn inner(&self, other: &WaveFunction) -> Complex64 {
        self.0.inner(&other.0)
    }

    pub fn scale(&self, c: Complex64) -> WaveFunction {
        WaveFunction(self.0.map(|v| v * c))
    }

    /// `‖self - other‖₂` on a shared grid.
    pub fn distance(&self, other: &WaveFunction) -> f64 {
        debug_assert_eq!(self.grid(), other.grid());
        let s: f64 = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (s * self.grid().cell_volume()).sqrt()
    }

    /// Resample onto another lattice of the same spacing family: every target
    /// node must be a source node or lie outside the source box (read as zero).
    pub fn transfer(&self, target: &Grid) -> Result<WaveFunction, GridError> {
        let src = self.grid();
        if src.dim() != target.dim() {
            return Err(GridError::Mismatch);
        }
        let mut out = WaveFunction::zeros(target);
        for i in 0..target.len() {
            let x = target.coords(i);
            let outside = (0..src.dim())
                .any(|a| x[a].abs() > src.half_width() as f64 * src.spacing() * (1.0 + 1e-12));
            if outside {
                continue;
            }
            match src.locate(&x) {
                Some(j) => out.values_mut()[i] = self.values()[j],
                None => return Err(GridError::Incompatible { node: x }),
            }
        }
        Ok(out)
    }
}

/// `(f(x + h e_axis) - f(x - h e_axis)) / (2h)` with zero extension.
pub fn sym_diff<T>(field: &GridField<T>, axis: usize) -> Result<GridField<T>, GridError>
where
    T: Copy + Zero + Sub<Output = T> + Mul<f64, Output = T>,
{
    let grid = *field.grid();
    grid.check_axis(axis)?;
    let inv = 1.0 / (2.0 * grid.spacing());
    let values = (0..grid.len())
        .map(|i| {
            let fwd = field.get_or_zero(grid.neighbor(i, axis, 1));
            let bwd = field.get_or_zero(grid.neighbor(i, axis, -1));
            (fwd - bwd) * inv
        })
        .collect();
    Ok(GridField { grid, values })
}

/// Wide-stencil discrete Laplacian `Σ_i (δ^i_h)²`.
pub fn discrete_laplacian<T>(field: &GridField<T>) -> GridField<T>
where
    T: Copy + Zero + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    discrete_laplacian_with(field, Stencil::Paper)
}

/// Discrete Laplacian with the chosen stencil. The field itself is extended by
/// zero, so the outermost node of each axis sees a homogeneous Dirichlet ghost.
pub fn discrete_laplacian_with<T>(field: &GridField<T>, stencil: Stencil) -> GridField<T>
where
    T: Copy + Zero + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let grid = *field.grid();
    let h = grid.spacing();
    let (reach, weight) = match stencil {
        Stencil::Paper => (2, 1.0 / (4.0 * h * h)),
        Stencil::Compact => (1, 1.0 / (h * h)),
    };
    let values = (0..grid.len())
        .map(|i| {
            let centre = field.values[i];
            (0..grid.dim()).fold(T::zero(), |acc, axis| {
                let fwd = field.get_or_zero(grid.neighbor(i, axis, reach));
                let bwd = field.get_or_zero(grid.neighbor(i, axis, -reach));
                acc + (fwd + bwd - centre - centre) * weight
            })
        })
        .collect();
    GridField { grid, values }
}

// Gauss-Legendre 4-point rule on [-1/2, 1/2].
const GL4_NODES: [f64; 4] = [
    -0.430_568_155_797_026_3,
    -0.169_990_521_792_428_1,
    0.169_990_521_792_428_1,
    0.430_568_155_797_026_3,
];
const GL4_WEIGHTS: [f64; 4] = [
    0.173_927_422_568_726_9,
    0.326_072_577_431_273_1,
    0.326_072_577_431_273_1,
    0.173_927_422_568_726_9,
];

/// Subdivision depth cap and tolerance for cells flagged singular.
pub const ADAPTIVE_MAX_DEPTH: u32 = 12;
pub const ADAPTIVE_REL_TOL: f64 = 1e-10;
// At the depth cap a still-changing estimate signals a non-integrable cell.
const DIVERGENCE_REL_TOL: f64 = 1e-4;

/// Scalar types that can be cell-averaged.
pub trait Averageable: Copy + Zero + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(self) -> f64;
}

impl Averageable for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Averageable for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Gauss-Legendre mean of `f` over the cube centred at `c` with side `side`.
fn gauss_mean<T: Averageable>(f: &dyn Fn(&[f64; 3]) -> T, c: &[f64; 3], side: f64, dim: usize) -> T {
    let mut acc = T::zero();
    let count = 4usize.pow(dim as u32);
    for k in 0..count {
        let mut x = *c;
        let mut w = 1.0;
        let mut rem = k;
        for axis in 0..dim {
            let q = rem % 4;
            rem /= 4;
            x[axis] += GL4_NODES[q] * side;
            w *= GL4_WEIGHTS[q];
        }
        acc = acc + f(&x) * w;
    }
    acc
}

fn subcell_centres(c: &[f64; 3], side: f64, dim: usize) -> Vec<[f64; 3]> {
    (0..1usize << dim)
        .map(|k| {
            let mut x = *c;
            for axis in 0..dim {
                let sign = if (k >> axis) & 1 == 1 { 1.0 } else { -1.0 };
                x[axis] += sign * side / 4.0;
            }
            x
        })
        .collect()
}

/// Adaptive mean over a cell; `None` when the estimate keeps moving at the depth cap.
fn adaptive_mean<T: Averageable>(
    f: &dyn Fn(&[f64; 3]) -> T,
    c: &[f64; 3],
    side: f64,
    dim: usize,
    coarse: T,
    depth: u32,
    scale: f64,
) -> Option<T> {
    let subs = subcell_centres(c, side, dim);
    let parts: Vec<T> = subs.iter().map(|s| gauss_mean(f, s, side / 2.0, dim)).collect();
    let fine = parts.iter().fold(T::zero(), |a, &p| a + p) * (1.0 / subs.len() as f64);
    let change = (fine - coarse).magnitude();
    if !change.is_finite() {
        return None;
    }
    if change <= ADAPTIVE_REL_TOL * scale.max(fine.magnitude()) {
        return Some(fine);
    }
    if depth >= ADAPTIVE_MAX_DEPTH {
        // Local volume fraction relative to the root cell.
        let weight = 0.5f64.powi((depth * dim as u32) as i32);
        return if change * weight <= DIVERGENCE_REL_TOL * scale {
            Some(fine)
        } else {
            None
        };
    }
    let mut acc = T::zero();
    for (s, &p) in subs.iter().zip(&parts) {
        acc = acc + adaptive_mean(f, s, side / 2.0, dim, p, depth + 1, scale)?;
    }
    Some(acc * (1.0 / subs.len() as f64))
}

/// Cell averages of `f` over every lattice cube.
pub fn cubic_average<T: Averageable>(
    f: impl Fn(&[f64; 3]) -> T,
    grid: &Grid,
) -> Result<GridField<T>, GridError> {
    cubic_average_flagged(f, grid, |_, _| false)
}

/// Cell averages with adaptive subdivision on cells for which
/// `singular(centre, side)` is true.
pub fn cubic_average_flagged<T: Averageable>(
    f: impl Fn(&[f64; 3]) -> T,
    grid: &Grid,
    singular: impl Fn(&[f64; 3], f64) -> bool,
) -> Result<GridField<T>, GridError> {
    let h = grid.spacing();
    let dim = grid.dim();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let c = grid.coords(i);
        let coarse = gauss_mean(&f, &c, h, dim);
        let v = if singular(&c, h) {
            adaptive_mean(&f, &c, h, dim, coarse, 1, coarse.magnitude())
                .ok_or(GridError::SingularCell { node: c })?
        } else {
            coarse
        };
        if !v.magnitude().is_finite() {
            return Err(GridError::SingularCell { node: c });
        }
        values.push(v);
    }
    Ok(GridField {
        grid: *grid,
        values,
    })
}

/// Whether the closed cell centred at `c` with side `side` contains `p`.
pub fn cell_contains(c: &[f64; 3], side: f64, p: &[f64; 3], dim: usize) -> bool {
    (0..dim).all(|a| (p[a] - c[a]).abs() <= side / 2.0 * (1.0 + 1e-12))
}
