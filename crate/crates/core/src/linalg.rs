//! Sparse magnetic Hamiltonian, the Crank–Nicolson (Cayley) propagator and a
//! dense eigendecomposition oracle for `exp(-iHt)`.
//!
//! The kinetic part is `Σ_i (−iδ^i_h − A_i)²`, expanded per axis as
//! `−(δ^i_h)² + iδ^i_h(A_i ·) + iA_iδ^i_h + A_i²`. Because `δ^i_h` is
//! antisymmetric under the lattice inner product, each term is Hermitian on its
//! own and no symmetrization is needed.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fields::SampledVectorPotential;
use crate::grid::{ComplexField, Grid, RealField, Stencil, WaveFunction};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest dimension the dense oracle and dense positivity checks accept.
pub const DENSE_CAP: usize = 4096;
/// Above this node count the Cayley solve switches to Krylov iteration.
pub const DIRECT_SOLVE_CAP: usize = 200_000;
/// Band storage budget (complex entries) for the direct path.
pub const BAND_STORAGE_CAP: usize = 60_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("operator failed the Hermiticity check (defect {defect:e}, allowed {allowed:e})")]
    NotHermitian { defect: f64, allowed: f64 },
    #[error("Krylov solve did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dense oracle limited to {cap} unknowns, operator has {n}")]
    DenseCap { n: usize, cap: usize },
    #[error("zero pivot at row {0} during banded factorization")]
    ZeroPivot(usize),
    #[error("non-finite value produced by the linear solve")]
    NonFinite,
}

/// Compressed sparse row matrix with Hermitian structure.
#[derive(Debug, Clone)]
pub struct SparseHermitianOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
    certified: bool,
    scale: f64,
}

impl SparseHermitianOperator {
    /// Builds from per-row `(col, value)` lists, merging duplicates.
    pub fn from_rows(rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        let scale = (0..n)
            .map(|r| vals[row_ptr[r]..row_ptr[r + 1]].iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        Self {
            n,
            row_ptr,
            cols,
            vals,
            certified: false,
            scale,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    /// Max absolute row sum, used to normalize tolerances.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.row(r).find(|e| e.0 == c).map_or(Complex64::new(0.0, 0.0), |e| e.1)
    }

    /// Largest `|row − col|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|r| self.row(r).map(move |(c, _)| r.abs_diff(c)))
            .max()
            .unwrap_or(0)
    }

    pub fn apply_slice(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr = acc;
        }
    }

    pub fn apply(&self, x: &ComplexField) -> Result<ComplexField, LinalgError> {
        if x.values().len() != self.n {
            return Err(LinalgError::Dimension {
                expected: self.n,
                got: x.values().len(),
            });
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.n];
        self.apply_slice(x.values(), &mut y);
        Ok(ComplexField::from_values(x.grid(), y).expect("length checked"))
    }

    /// `self + diag(d)`.
    pub fn add_diagonal(&self, d: &[f64]) -> Result<Self, LinalgError> {
        if d.len() != self.n {
            return Err(LinalgError::Dimension {
                expected: self.n,
                got: d.len(),
            });
        }
        let rows = (0..self.n)
            .map(|r| {
                let mut row: Vec<_> = self.row(r).collect();
                row.push((r, Complex64::new(d[r], 0.0)));
                row
            })
            .collect();
        let mut out = Self::from_rows(rows);
        out.certified = self.certified;
        Ok(out)
    }

    /// Structural check `H_rc = conj(H_cr)` plus the randomized pairing test
    /// `|⟨Hu,v⟩ − ⟨u,Hv⟩| ≤ 1e-12 ‖u‖‖v‖ scale`. Sets the certificate on success.
    pub fn verify_hermitian(&mut self) -> Result<(), LinalgError> {
        let allowed = 1e-12 * self.scale.max(1.0);
        let mut defect: f64 = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                defect = defect.max((v - self.get(c, r).conj()).norm());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..3 {
            let u: Vec<Complex64> = (0..self.n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let v: Vec<Complex64> = (0..self.n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let mut hu = vec![Complex64::new(0.0, 0.0); self.n];
            let mut hv = vec![Complex64::new(0.0, 0.0); self.n];
            self.apply_slice(&u, &mut hu);
            self.apply_slice(&v, &mut hv);
            let lhs: Complex64 = hu.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            let rhs: Complex64 = u.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
            let nu = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            defect = defect.max((lhs - rhs).norm() / (nu * nv));
        }
        if defect > allowed {
            return Err(LinalgError::NotHermitian { defect, allowed });
        }
        self.certified = true;
        Ok(())
    }

    pub fn to_dense(&self) -> Result<DMatrix<Complex64>, LinalgError> {
        if self.n > DENSE_CAP {
            return Err(LinalgError::DenseCap {
                n: self.n,
                cap: DENSE_CAP,
            });
        }
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        Ok(m)
    }

    /// Triplet export: one `row col re im` line per stored entry.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                writeln!(out, "{} {} {} {}", r, c, v.re, v.im)?;
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue by dense Hermitian eigendecomposition.
    pub fn smallest_eigenvalue(&self) -> Result<f64, LinalgError> {
        let eig = SymmetricEigen::new(self.to_dense()?);
        Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
    }
}

/// Discrete `(−i∇^h − A)² + V`. Pass `None` for the kinetic-only operator.
pub fn assemble_hamiltonian(
    grid: &Grid,
    a: &SampledVectorPotential,
    v: Option<&RealField>,
    stencil: Stencil,
) -> Result<SparseHermitianOperator, LinalgError> {
    let n = grid.len();
    if a.components.len() != grid.dim() {
        return Err(LinalgError::Dimension {
            expected: grid.dim(),
            got: a.components.len(),
        });
    }
    for c in &a.components {
        if c.values().len() != n {
            return Err(LinalgError::Dimension {
                expected: n,
                got: c.values().len(),
            });
        }
    }
    if let Some(v) = v {
        if v.values().len() != n {
            return Err(LinalgError::Dimension {
                expected: n,
                got: v.values().len(),
            });
        }
    }
    let h = grid.spacing();
    let first = 1.0 / (2.0 * h);
    let mut rows = Vec::with_capacity(n);
    for r in 0..n {
        let mut row: Vec<(usize, Complex64)> = Vec::with_capacity(4 * grid.dim() + 1);
        let mut diag = v.map_or(0.0, |v| v.values()[r]);
        for axis in 0..grid.dim() {
            let ac = a.components[axis].values();
            let ar = ac[r];
            diag += ar * ar;
            match stencil {
                Stencil::Paper => {
                    diag += 2.0 / (4.0 * h * h);
                    for off in [-2i64, 2] {
                        if let Some(c) = grid.neighbor(r, axis, off) {
                            row.push((c, Complex64::new(-1.0 / (4.0 * h * h), 0.0)));
                        }
                    }
                }
                Stencil::Compact => {
                    diag += 2.0 / (h * h);
                    for off in [-1i64, 1] {
                        if let Some(c) = grid.neighbor(r, axis, off) {
                            row.push((c, Complex64::new(-1.0 / (h * h), 0.0)));
                        }
                    }
                }
            }
            // i δ(Aψ) + i A δψ
            for off in [-1i64, 1] {
                if let Some(c) = grid.neighbor(r, axis, off) {
                    let sign = off as f64;
                    row.push((c, I * (sign * first * (ac[c] + ar))));
                }
            }
        }
        row.push((r, Complex64::new(diag, 0.0)));
        rows.push(row);
    }
    let mut op = SparseHermitianOperator::from_rows(rows);
    op.verify_hermitian()?;
    Ok(op)
}

/// LU factors of a banded matrix, stored row-wise over columns `r-p ..= r+p`.
/// No pivoting: the Cayley system `I + iαH` has Hermitian part `I`, so every
/// leading principal block is nonsingular.
#[derive(Debug, Clone)]
struct BandedLu {
    n: usize,
    p: usize,
    band: Vec<Complex64>,
}

impl BandedLu {
    fn width(&self) -> usize {
        2 * self.p + 1
    }

    fn factor(op: &SparseHermitianOperator, alpha: Complex64) -> Result<Self, LinalgError> {
        let n = op.dim();
        let p = op.bandwidth();
        let w = 2 * p + 1;
        let mut band = vec![Complex64::new(0.0, 0.0); n * w];
        for r in 0..n {
            band[r * w + p] = Complex64::new(1.0, 0.0);
            for (c, v) in op.row(r) {
                band[r * w + (c + p - r)] += alpha * v;
            }
        }
        for k in 0..n {
            let pivot = band[k * w + p];
            if pivot.norm() == 0.0 || !pivot.re.is_finite() {
                return Err(LinalgError::ZeroPivot(k));
            }
            let last = (k + p).min(n - 1);
            for r in k + 1..=last {
                // entry (r, k) lives at offset k + p - r
                let idx = r * w + (k + p - r);
                let l = band[idx] / pivot;
                if l.norm_sqr() == 0.0 {
                    continue;
                }
                band[idx] = l;
                let (head, tail) = band.split_at_mut(r * w);
                let urow = &head[k * w..k * w + w];
                let rrow = &mut tail[..w];
                for c in k + 1..=(k + p).min(n - 1) {
                    rrow[c + p - r] -= l * urow[c + p - k];
                }
            }
        }
        Ok(Self { n, p, band })
    }

    fn solve(&self, b: &mut [Complex64]) {
        let (n, p, w) = (self.n, self.p, self.width());
        for r in 0..n {
            let row = &self.band[r * w..r * w + w];
            let mut acc = b[r];
            for c in r.saturating_sub(p)..r {
                acc -= row[c + p - r] * b[c];
            }
            b[r] = acc;
        }
        for r in (0..n).rev() {
            let row = &self.band[r * w..r * w + w];
            let mut acc = b[r];
            for c in r + 1..=(r + p).min(n - 1) {
                acc -= row[c + p - r] * b[c];
            }
            b[r] = acc / row[p];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restart: usize,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 500,
            restart: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolveStrategy {
    /// Direct below [`DIRECT_SOLVE_CAP`] nodes (and within the band budget),
    /// Krylov otherwise.
    #[default]
    Auto,
    Direct,
    Krylov(KrylovSettings),
}

#[derive(Debug, Clone)]
enum Solver {
    Direct(BandedLu),
    Krylov { settings: KrylovSettings, inv_diag: Vec<Complex64> },
}

/// `ψ ↦ (1 − iτH/2)(1 + iτH/2)^{-1} ψ`. The factorization is computed once at
/// construction, so a stepper can be shared read-only across threads.
#[derive(Debug, Clone)]
pub struct CayleyStepper {
    op: SparseHermitianOperator,
    tau: f64,
    solver: Solver,
}

impl CayleyStepper {
    pub fn new(op: SparseHermitianOperator, tau: f64, strategy: SolveStrategy) -> Result<Self, LinalgError> {
        let alpha = I * (0.5 * tau);
        let band_cost = op.dim().saturating_mul(2 * op.bandwidth() + 1);
        let direct = match strategy {
            SolveStrategy::Direct => true,
            SolveStrategy::Krylov(_) => false,
            SolveStrategy::Auto => op.dim() <= DIRECT_SOLVE_CAP && band_cost <= BAND_STORAGE_CAP,
        };
        let solver = if direct {
            Solver::Direct(BandedLu::factor(&op, alpha)?)
        } else {
            let settings = match strategy {
                SolveStrategy::Krylov(s) => s,
                _ => KrylovSettings::default(),
            };
            let inv_diag = (0..op.dim())
                .map(|r| 1.0 / (Complex64::new(1.0, 0.0) + alpha * op.get(r, r)))
                .collect();
            Solver::Krylov { settings, inv_diag }
        };
        Ok(Self { op, tau, solver })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn operator(&self) -> &SparseHermitianOperator {
        &self.op
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.solver, Solver::Direct(_))
    }

    pub fn step(&self, psi: &WaveFunction) -> Result<WaveFunction, LinalgError> {
        let n = self.op.dim();
        if psi.values().len() != n {
            return Err(LinalgError::Dimension {
                expected: n,
                got: psi.values().len(),
            });
        }
        let alpha = I * (0.5 * self.tau);
        let mut hx = vec![Complex64::new(0.0, 0.0); n];
        self.op.apply_slice(psi.values(), &mut hx);
        let mut rhs: Vec<Complex64> = psi.values().iter().zip(&hx).map(|(x, y)| x - alpha * y).collect();
        match &self.solver {
            Solver::Direct(lu) => lu.solve(&mut rhs),
            Solver::Krylov { settings, inv_diag } => {
                rhs = gmres(&self.op, alpha, &rhs, psi.values(), inv_diag, settings)?;
            }
        }
        if rhs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(WaveFunction(ComplexField::from_values(psi.grid(), rhs).expect("length checked")))
    }
}

pub fn cayley_step(stepper: &CayleyStepper, psi: &WaveFunction) -> Result<WaveFunction, LinalgError> {
    stepper.step(psi)
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted GMRES for `(I + αH) x = b`, right-preconditioned by the diagonal.
fn gmres(
    op: &SparseHermitianOperator,
    alpha: Complex64,
    b: &[Complex64],
    x0: &[Complex64],
    inv_diag: &[Complex64],
    settings: &KrylovSettings,
) -> Result<Vec<Complex64>, LinalgError> {
    let n = b.len();
    let apply = |x: &[Complex64], out: &mut [Complex64]| {
        op.apply_slice(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + alpha * *o;
        }
    };
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = x0.to_vec();
    let mut tmp = vec![Complex64::new(0.0, 0.0); n];
    let mut iterations = 0;
    let mut residual;
    loop {
        apply(&x, &mut tmp);
        let r: Vec<Complex64> = b.iter().zip(&tmp).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        residual = beta / bnorm;
        if residual <= settings.tolerance {
            return Ok(x);
        }
        if iterations >= settings.max_iterations {
            return Err(LinalgError::NoConvergence { iterations, residual });
        }
        let m = settings.restart;
        let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut hess = vec![vec![Complex64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![Complex64::new(0.0, 0.0); m];
        let mut sn = vec![Complex64::new(0.0, 0.0); m];
        let mut g = vec![Complex64::new(0.0, 0.0); m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            let z: Vec<Complex64> = basis[k].iter().zip(inv_diag).map(|(v, d)| v * d).collect();
            let mut w = vec![Complex64::new(0.0, 0.0); n];
            apply(&z, &mut w);
            for (j, vj) in basis.iter().enumerate() {
                let hij: Complex64 = vj.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                hess[j][k] = hij;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hij * vi;
                }
            }
            let wn = norm(&w);
            hess[k + 1][k] = Complex64::new(wn, 0.0);
            for j in 0..k {
                let t = cs[j].conj() * hess[j][k] + sn[j].conj() * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let (a, bb) = (hess[k][k], hess[k + 1][k]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            cs[k] = if den == 0.0 { Complex64::new(1.0, 0.0) } else { a / den };
            sn[k] = if den == 0.0 { Complex64::new(0.0, 0.0) } else { bb / den };
            hess[k][k] = cs[k].conj() * a + sn[k].conj() * bb;
            hess[k + 1][k] = Complex64::new(0.0, 0.0);
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            iterations += 1;
            k_used = k + 1;
            if g[k + 1].norm() / bnorm <= settings.tolerance || wn == 0.0 || iterations >= settings.max_iterations {
                break;
            }
            basis.push(w.iter().map(|z| z / wn).collect());
        }
        let mut y = vec![Complex64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= hess[i][j] * y[j];
            }
            y[i] = acc / hess[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for ((xi, vi), d) in x.iter_mut().zip(&basis[j]).zip(inv_diag) {
                *xi += yj * vi * d;
            }
        }
    }
}

/// Exact propagation `exp(−iHt)` from a dense Hermitian eigendecomposition.
#[derive(Debug, Clone)]
pub struct DensePropagator {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<Complex64>,
}

impl DensePropagator {
    pub fn new(op: &SparseHermitianOperator) -> Result<Self, LinalgError> {
        let eig = SymmetricEigen::new(op.to_dense()?);
        Ok(Self {
            eigenvalues: eig.eigenvalues.iter().cloned().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn propagate(&self, t: f64, psi: &WaveFunction) -> Result<WaveFunction, LinalgError> {
        let n = self.eigenvalues.len();
        if psi.values().len() != n {
            return Err(LinalgError::Dimension {
                expected: n,
                got: psi.values().len(),
            });
        }
        let x = DVector::from_column_slice(psi.values());
        let mut c = self.eigenvectors.ad_mul(&x);
        for (ci, l) in c.iter_mut().zip(&self.eigenvalues) {
            *ci *= Complex64::from_polar(1.0, -l * t);
        }
        let y = &self.eigenvectors * c;
        Ok(WaveFunction(
            ComplexField::from_values(psi.grid(), y.iter().cloned().collect()).expect("length checked"),
        ))
    }
}

pub fn dense_propagator_oracle(
    op: &SparseHermitianOperator,
    t: f64,
    psi: &WaveFunction,
) -> Result<WaveFunction, LinalgError> {
    DensePropagator::new(op)?.propagate(t, psi)
}
