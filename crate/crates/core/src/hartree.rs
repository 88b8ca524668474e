//! Mean-field potential `f_ε ∗ |ψ|²` on the lattice.
//!
//! The lattice convolution is `V_j = h^d Σ_k K(x_j − x_k) ρ_k` with the kernel
//! tabulated on every displacement inside the doubled box. The fast path
//! realizes the same *linear* convolution by zero-padding to `2n` points per
//! axis before a cyclic FFT convolution.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{kernel_eval, SmoothedKernel};
use crate::grid::{cell_contains, cubic_average_flagged, Grid, GridError, RealField, WaveFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HartreeError {
    #[error("field and plan live on different grids")]
    GridMismatch,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("fast convolution disagrees with direct summation (relative error {0:e})")]
    Certification(f64),
    #[error("the Coulomb comparison needs d = 2 or 3, got d = {0}")]
    Dimension(usize),
    #[error("lattice tabulation needs a positive smoothing length")]
    Unsmoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvolutionMethod {
    Direct,
    #[default]
    Fast,
}

/// How the kernel is turned into lattice values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSampling {
    /// `K(x_j − x_k) = f(x_j − x_k)`.
    #[default]
    Pointwise,
    /// `K = f_Q`, the cell average of the kernel, which turns the lattice sum
    /// into the exact convolution of the two piecewise-constant functions.
    CellAveraged,
}

/// Relative agreement required between the fast and direct paths.
pub const CERTIFY_TOLERANCE: f64 = 1e-12;

pub struct ConvolutionPlan {
    grid: Grid,
    kernel: SmoothedKernel,
    method: ConvolutionMethod,
    sampling: KernelSampling,
    /// Kernel at displacement offsets `-(n-1) ..= n-1` per axis, row-major.
    table: Vec<f64>,
    spectrum: Vec<Complex64>,
    forward: Option<Arc<dyn Fft<f64>>>,
    inverse: Option<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for ConvolutionPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvolutionPlan")
            .field("grid", &self.grid)
            .field("kernel", &self.kernel)
            .field("method", &self.method)
            .field("sampling", &self.sampling)
            .finish_non_exhaustive()
    }
}

impl ConvolutionPlan {
    pub fn new(grid: &Grid, kernel: SmoothedKernel, method: ConvolutionMethod) -> Result<Self, HartreeError> {
        Self::with_sampling(grid, kernel, method, KernelSampling::Pointwise)
    }

    pub fn with_sampling(
        grid: &Grid,
        kernel: SmoothedKernel,
        method: ConvolutionMethod,
        sampling: KernelSampling,
    ) -> Result<Self, HartreeError> {
        if !kernel.is_custom() && kernel.epsilon() <= 0.0 {
            return Err(HartreeError::Unsmoothed);
        }
        let table = tabulate(grid, &kernel, sampling)?;
        let mut plan = Self {
            grid: *grid,
            kernel,
            method,
            sampling,
            table,
            spectrum: Vec::new(),
            forward: None,
            inverse: None,
        };
        if method == ConvolutionMethod::Fast {
            let len = 2 * grid.points_per_axis();
            let mut planner = FftPlanner::new();
            plan.forward = Some(planner.plan_fft_forward(len));
            plan.inverse = Some(planner.plan_fft_inverse(len));
            plan.spectrum = plan.kernel_spectrum();
            plan.certify()?;
        }
        Ok(plan)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &SmoothedKernel {
        &self.kernel
    }

    pub fn method(&self) -> ConvolutionMethod {
        self.method
    }

    pub fn sampling(&self) -> KernelSampling {
        self.sampling
    }

    fn table_width(&self) -> usize {
        2 * self.grid.points_per_axis() - 1
    }

    /// Kernel value for the displacement between nodes `j` and `k`.
    pub fn kernel_between(&self, j: usize, k: usize) -> f64 {
        let n = self.grid.points_per_axis() as i64;
        let w = self.table_width();
        let (mj, mk) = (self.grid.multi_index(j), self.grid.multi_index(k));
        let mut idx = 0;
        for a in 0..self.grid.dim() {
            idx = idx * w + (mj[a] as i64 - mk[a] as i64 + n - 1) as usize;
        }
        self.table[idx]
    }

    /// Kernel table is even under `x → −x`.
    pub fn is_symmetric(&self) -> bool {
        let len = self.table.len();
        (0..len).all(|i| self.table[i] == self.table[len - 1 - i])
    }

    fn padded_len(&self) -> usize {
        (2 * self.grid.points_per_axis()).pow(self.grid.dim() as u32)
    }

    fn kernel_spectrum(&self) -> Vec<Complex64> {
        let n = self.grid.points_per_axis();
        let l = 2 * n;
        let d = self.grid.dim();
        let w = self.table_width();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.padded_len()];
        for (t, &val) in self.table.iter().enumerate() {
            let mut rem = t;
            let mut idx = 0;
            let mut offs = [0usize; 3];
            for a in (0..d).rev() {
                let m = (rem % w) as i64 - (n as i64 - 1);
                rem /= w;
                offs[a] = m.rem_euclid(l as i64) as usize;
            }
            for off in offs.iter().take(d) {
                idx = idx * l + off;
            }
            buf[idx] = Complex64::new(val, 0.0);
        }
        self.fft_nd(&mut buf, true);
        buf
    }

    fn fft_nd(&self, data: &mut [Complex64], forward: bool) {
        let fft = if forward { self.forward.as_ref() } else { self.inverse.as_ref() }.expect("fast plan");
        let l = 2 * self.grid.points_per_axis();
        let d = self.grid.dim();
        let mut line = vec![Complex64::new(0.0, 0.0); l];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for axis in 0..d {
            let stride = l.pow((d - 1 - axis) as u32);
            let block = stride * l;
            for start in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    let base = start + inner;
                    for (q, v) in line.iter_mut().enumerate() {
                        *v = data[base + q * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (q, v) in line.iter().enumerate() {
                        data[base + q * stride] = *v;
                    }
                }
            }
        }
    }

    fn convolve_direct(&self, density: &[f64]) -> Vec<f64> {
        let hd = self.grid.cell_volume();
        (0..self.grid.len())
            .into_par_iter()
            .map(|j| {
                let s: f64 = density
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| **r != 0.0)
                    .map(|(k, r)| self.kernel_between(j, k) * r)
                    .sum();
                s * hd
            })
            .collect()
    }

    fn convolve_fast(&self, density: &[f64]) -> Vec<f64> {
        let n = self.grid.points_per_axis();
        let l = 2 * n;
        let d = self.grid.dim();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.padded_len()];
        let to_padded = |idx: usize| {
            let m = self.grid.multi_index(idx);
            (0..d).fold(0, |acc, a| acc * l + m[a])
        };
        for (k, r) in density.iter().enumerate() {
            buf[to_padded(k)] = Complex64::new(*r, 0.0);
        }
        self.fft_nd(&mut buf, true);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.fft_nd(&mut buf, false);
        let scale = self.grid.cell_volume() / self.padded_len() as f64;
        (0..self.grid.len()).map(|j| buf[to_padded(j)].re * scale).collect()
    }

    /// `h^d Σ_k K(x_j − x_k) ρ_k` for an arbitrary density.
    pub fn potential_from_density(&self, density: &RealField) -> Result<RealField, HartreeError> {
        if density.grid() != &self.grid {
            return Err(HartreeError::GridMismatch);
        }
        let values = match self.method {
            ConvolutionMethod::Direct => self.convolve_direct(density.values()),
            ConvolutionMethod::Fast => self.convolve_fast(density.values()),
        };
        Ok(RealField::from_values(&self.grid, values)?)
    }

    /// Same sum, always by direct summation.
    pub fn potential_direct(&self, density: &RealField) -> Result<RealField, HartreeError> {
        if density.grid() != &self.grid {
            return Err(HartreeError::GridMismatch);
        }
        Ok(RealField::from_values(&self.grid, self.convolve_direct(density.values()))?)
    }

    /// Checks the fast path against direct sums at a subsample of nodes.
    fn certify(&self) -> Result<(), HartreeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0ffee);
        let density: Vec<f64> = (0..self.grid.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let fast = self.convolve_fast(&density);
        let count = self.grid.len().min(64);
        let stride = (self.grid.len() / count).max(1);
        let hd = self.grid.cell_volume();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for j in (0..self.grid.len()).step_by(stride).take(count) {
            let direct: f64 = density.iter().enumerate().map(|(k, r)| self.kernel_between(j, k) * r).sum::<f64>() * hd;
            worst = worst.max((direct - fast[j]).abs());
            scale = scale.max(direct.abs());
        }
        let rel = worst / scale.max(f64::MIN_POSITIVE);
        if rel > CERTIFY_TOLERANCE {
            return Err(HartreeError::Certification(rel));
        }
        Ok(())
    }
}

fn tabulate(grid: &Grid, kernel: &SmoothedKernel, sampling: KernelSampling) -> Result<Vec<f64>, HartreeError> {
    let n = grid.points_per_axis();
    let d = grid.dim();
    let h = grid.spacing();
    // Displacements span a lattice with half-width n - 1; reuse Grid for it.
    let disp = Grid::new((n as f64 - 0.5) * h, h, d)?;
    debug_assert_eq!(disp.points_per_axis(), 2 * n - 1);
    let field = match sampling {
        KernelSampling::Pointwise => RealField::from_fn(&disp, |x| kernel_eval(kernel, x)),
        KernelSampling::CellAveraged => {
            // the kernel peaks sharply at the origin when ε ≪ h
            cubic_average_flagged(|x| kernel_eval(kernel, x), &disp, |c, side| cell_contains(c, 2.0 * side, &[0.0; 3], d))?
        }
    };
    let mut t = field.into_values();
    let len = t.len();
    for i in 0..len / 2 {
        let m = 0.5 * (t[i] + t[len - 1 - i]);
        t[i] = m;
        t[len - 1 - i] = m;
    }
    Ok(t)
}

/// `h^d Σ_k K(x_j − x_k) |ψ_k|²`.
pub fn hartree_potential(psi: &WaveFunction, plan: &ConvolutionPlan) -> Result<RealField, HartreeError> {
    if psi.grid() != plan.grid() {
        return Err(HartreeError::GridMismatch);
    }
    let density = psi.field().map(|z| z.norm_sqr());
    plan.potential_from_density(&density)
}

/// `∫_{B_L} |1/|x| − f(x)| dx` over the ball (d = 3) or disk (d = 2) of radius
/// `radius`, by graded radial Gauss–Legendre quadrature. Custom kernels are
/// evaluated along the first axis, i.e. treated as radial.
pub fn kernel_l1_error(plan: &ConvolutionPlan, radius: f64) -> Result<f64, HartreeError> {
    coulomb_l1_distance(plan.kernel(), plan.grid().dim(), radius)
}

pub fn coulomb_l1_distance(kernel: &SmoothedKernel, dim: usize, radius: f64) -> Result<f64, HartreeError> {
    let sphere = match dim {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        d => return Err(HartreeError::Dimension(d)),
    };
    if !kernel.is_custom() && kernel.epsilon() == 0.0 {
        return Ok(0.0);
    }
    let integrand = |r: f64| {
        let f = kernel_eval(kernel, &[r, 0.0, 0.0]);
        // r^{d-1} |1/r − f| without forming 1/r at r → 0
        sphere * (r.powi(dim as i32 - 2) - r.powi(dim as i32 - 1) * f).abs()
    };
    let scale = if kernel.is_custom() { radius * 1e-3 } else { kernel.epsilon() };
    let mut breaks = vec![0.0];
    let mut b = (scale / 64.0).min(radius);
    while b < radius {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(radius);
    let (xs, ws) = gauss_legendre_16();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        total += half * xs.iter().zip(ws.iter()).map(|(x, wt)| wt * integrand(mid + half * x)).sum::<f64>();
    }
    Ok(total)
}

fn gauss_legendre_16() -> ([f64; 16], [f64; 16]) {
    const X: [f64; 8] = [
        0.095_012_509_837_637_44,
        0.281_603_550_779_258_9,
        0.458_016_777_657_227_4,
        0.617_876_244_402_643_8,
        0.755_404_408_355_003,
        0.865_631_202_387_831_7,
        0.944_575_023_073_232_6,
        0.989_400_934_991_649_9,
    ];
    const W: [f64; 8] = [
        0.189_450_610_455_068_5,
        0.182_603_415_044_923_6,
        0.169_156_519_395_002_5,
        0.149_595_988_816_576_7,
        0.124_628_971_255_533_9,
        0.095_158_511_682_492_78,
        0.062_253_523_938_647_89,
        0.027_152_459_411_754_09,
    ];
    let mut xs = [0.0; 16];
    let mut ws = [0.0; 16];
    for i in 0..8 {
        xs[i] = -X[i];
        ws[i] = W[i];
        xs[8 + i] = X[i];
        ws[8 + i] = W[i];
    }
    (xs, ws)
}

/// Error budget `C_T · sqrt(‖f − 1/|·|‖₁)` for the solution.
pub fn solution_error_budget(c_t: f64, l1_error: f64) -> f64 {
    c_t * l1_error.sqrt()
}
