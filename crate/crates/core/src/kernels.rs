//! Closed-form propagator kernels, the periodic spatial grid, dense complex
//! matrices and operator-norm estimation.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

#[allow(unused_imports)] // unused whenever std is linked into the build
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::quad::pairwise_sum;

/// Potentials with an explicit propagator kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactKind {
    Free,
    Stark { field: f64 },
    Harmonic,
}

/// `(2πit)^{−1/2}` on the branch `(2πt)^{−1/2} e^{−iπ/4}` for `t > 0`.
pub fn free_prefactor(t: f64) -> Complex64 {
    Complex64::from_polar((2.0 * PI * t).powf(-0.5), -PI / 4.0)
}

/// Action of the straight-line orbit in a uniform field `E` from `y` to `x`.
pub fn stark_action(t: f64, x: f64, y: f64, field: f64) -> f64 {
    (x - y).powi(2) / (2.0 * t) - t * field * (x + y) / 2.0 - field * field * t.powi(3) / 24.0
}

/// Action of the harmonic orbit from `y` to `x`, `0 < t < π`.
pub fn harmonic_action(t: f64, x: f64, y: f64) -> f64 {
    ((x * x + y * y) * t.cos() - 2.0 * x * y) / (2.0 * t.sin())
}

/// `E(t, x, y)` for the solvable potentials. The square-root branch is the one
/// that tends to `(2πt)^{−1/2} e^{−iπ/4}` as `t ↓ 0`.
pub fn exact_kernel(kind: ExactKind, t: f64, x: f64, y: f64) -> Result<Complex64> {
    if !(t > 0.0) {
        return Err(invalid("kernel time must be positive"));
    }
    let (prefactor, phase) = match kind {
        ExactKind::Free => (free_prefactor(t), (x - y).powi(2) / (2.0 * t)),
        ExactKind::Stark { field } => (free_prefactor(t), stark_action(t, x, y, field)),
        ExactKind::Harmonic => {
            if t >= PI {
                return Err(Error::ConjugatePoint { t });
            }
            (free_prefactor(t.sin()), harmonic_action(t, x, y))
        }
    };
    Ok(prefactor * Complex64::from_polar(1.0, phase))
}

/// Periodic grid `x_i = −L + i·dx`, `dx = 2L/N`, `N` a power of two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub half_len: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn new(half_len: f64, n_points: usize) -> Result<Self> {
        if !(half_len > 0.0) || !half_len.is_finite() {
            return Err(invalid("grid half-length must be positive"));
        }
        if n_points < 2 || !n_points.is_power_of_two() {
            return Err(invalid("grid size must be a power of two"));
        }
        Ok(Self { half_len, n_points })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_len / self.n_points as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.half_len + i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points as i64;
        let dk = PI / self.half_len;
        (0..n).map(|i| if i < n / 2 { i } else { i - n } as f64 * dk).collect()
    }

    /// Indices with `|x_i| ≤ radius`.
    pub fn central(&self, radius: f64) -> Vec<usize> {
        (0..self.n_points).filter(|&i| self.point(i).abs() <= radius + 1e-12).collect()
    }
}

/// Row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: alloc::vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn from_fn<F: FnMut(usize, usize) -> Complex64>(rows: usize, cols: usize, mut f: F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(invalid("matrix shapes differ"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(DenseMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(rows.len(), cols.len(), |i, j| self.get(rows[i], cols[j]))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut terms = alloc::vec![Complex64::new(0.0, 0.0); self.cols];
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                for j in 0..self.cols {
                    terms[j] = row[j] * v[j];
                }
                pairwise_sum(&terms)
            })
            .collect()
    }

    /// `Aᴴ v`.
    pub fn adjoint_matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut terms = alloc::vec![Complex64::new(0.0, 0.0); self.rows];
        (0..self.cols)
            .map(|j| {
                for i in 0..self.rows {
                    terms[i] = self.data[i * self.cols + j].conj() * v[i];
                }
                pairwise_sum(&terms)
            })
            .collect()
    }
}

/// Sampled kernel `entries(i, j) ≈ E(t, x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub grid: GridSpec,
    pub t: f64,
    pub entries: DenseMatrix,
}

impl KernelMatrix {
    pub fn from_fn<F: FnMut(f64, f64) -> Complex64>(grid: GridSpec, t: f64, mut f: F) -> Self {
        let n = grid.n_points;
        let entries = DenseMatrix::from_fn(n, n, |i, j| f(grid.point(i), grid.point(j)));
        Self { grid, t, entries }
    }

    /// `(K f)(x_i) = Σ_j K(i, j) f_j dx`.
    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        let dx = self.grid.dx();
        self.entries.matvec(f).into_iter().map(|v| v * dx).collect()
    }

    /// L²(dx) → L²(dx) operator norm.
    pub fn op_norm(&self) -> f64 {
        op_norm(&self.entries, self.grid.dx())
    }
}

/// Stopping rule for [`op_norm_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    /// Krylov steps, each one product with `m` and one with `m*`.
    pub max_iter: usize,
    /// Stop once the estimate of `σ²` changes by less than this, relatively,
    /// on three consecutive steps.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { max_iter: 200, rel_tol: 1e-10, seed: 0x5eed_0f_c0ffee }
    }
}

/// `weight · σ_max(m)`. With `weight = dx` this is the norm of the
/// integral operator with kernel `m` on `L²(dx)`.
pub fn op_norm(m: &DenseMatrix, weight: f64) -> f64 {
    op_norm_with(m, weight, PowerIteration::default())
}

/// Lanczos iteration on `m* m` from a seeded random start, with full
/// reorthogonalization. The Krylov space contains every power-iteration
/// iterate, so the estimate is never worse than plain power iteration after
/// the same number of steps, and it is exact once the space is invariant.
pub fn op_norm_with(m: &DenseMatrix, weight: f64, opts: PowerIteration) -> f64 {
    if m.rows == 0 || m.cols == 0 {
        return 0.0;
    }
    let mut rng = Pcg64::seed_from_u64(opts.seed);
    let mut q: Vec<Complex64> = (0..m.cols)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    if !normalize(&mut q) {
        return 0.0;
    }
    let steps = opts.max_iter.min(m.cols).max(1);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(steps);
    let mut alpha: Vec<f64> = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    let mut theta = 0.0f64;
    let mut quiet = 0;
    for _ in 0..steps {
        let mut w = m.adjoint_matvec(&m.matvec(&q));
        let a = dot(&q, &w).re;
        axpy(&mut w, -a, &q);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(&mut w, -b, prev);
        }
        basis.push(q);
        alpha.push(a);
        // Twice is enough to keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let next = largest_eigenvalue(&alpha, &beta);
        quiet = if (next - theta).abs() <= opts.rel_tol * next { quiet + 1 } else { 0 };
        theta = next;
        let b = norm2(&w).sqrt();
        if quiet >= 3 || !(b > 1e-14 * theta.max(f64::MIN_POSITIVE)) {
            break;
        }
        for z in w.iter_mut() {
            *z /= b;
        }
        beta.push(b);
        q = w;
    }
    weight.abs() * theta.max(0.0).sqrt()
}

/// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`, by Sturm-sequence bisection.
fn largest_eigenvalue(alpha: &[f64], beta: &[f64]) -> f64 {
    let n = alpha.len();
    let radius = |i: usize| {
        let left = if i > 0 { beta[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { beta[i].abs() } else { 0.0 };
        left + right
    };
    let mut lo = (0..n).map(|i| alpha[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..n).map(|i| alpha[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    // Number of eigenvalues below x.
    let below = |x: f64| {
        let mut count = 0;
        let mut d = 1.0f64;
        for i in 0..n {
            let off = if i > 0 { beta[i - 1] * beta[i - 1] / d } else { 0.0 };
            d = alpha[i] - x - off;
            if d == 0.0 {
                d = -f64::EPSILON * (x.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) == n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `Σ conj(a_i) b_i`.
fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let re: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).collect();
    let im: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.re * y.im - x.im * y.re).collect();
    Complex64::new(pairwise_sum(&re), pairwise_sum(&im))
}

fn axpy(w: &mut [Complex64], s: f64, v: &[Complex64]) {
    for (wi, vi) in w.iter_mut().zip(v) {
        *wi += s * vi;
    }
}

fn norm2(v: &[Complex64]) -> f64 {
    let sq: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
    pairwise_sum(&sq)
}

fn normalize(v: &mut [Complex64]) -> bool {
    let n = norm2(v).sqrt();
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    for z in v.iter_mut() {
        *z /= n;
    }
    true
}
