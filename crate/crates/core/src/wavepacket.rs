//! Gaussian windows, the wave packet transform and its adjoint.
//!
//! Conventions: `f̂(k) = ∫ f(x) e^{−ikx} dx`,
//! `W_φ f(x, ξ) = ∫ conj(φ(y − x)) f(y) e^{−iyξ} dy` and
//! `W_φ* F(y) = ∬ φ(y − x) F(x, ξ) e^{iyξ} dx dξ / 2π`, so that
//! `‖φ‖⁻² W_φ* W_φ f = f`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[allow(unused_imports)] // unused whenever std is linked into the build
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::quad::pairwise_sum;

/// Windows narrower than this many grid steps are rejected by the transforms.
pub const MIN_STEPS_PER_WIDTH: f64 = 4.0;

/// `amp · exp(−(x − center)² / (2·cwidth2)) · e^{i·momentum·x}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexGaussian {
    pub amp: Complex64,
    pub center: f64,
    pub momentum: f64,
    pub cwidth2: Complex64,
}

impl ComplexGaussian {
    pub fn new(amp: Complex64, center: f64, momentum: f64, cwidth2: Complex64) -> Result<Self> {
        if !(cwidth2.re > 0.0) || !cwidth2.im.is_finite() {
            return Err(invalid("complex squared width must have positive real part"));
        }
        Ok(Self { amp, center, momentum, cwidth2 })
    }

    /// `π^{−1/4} e^{−x²/2}`, unit L² norm.
    pub fn standard() -> Self {
        Self {
            amp: Complex64::new(PI.powf(-0.25), 0.0),
            center: 0.0,
            momentum: 0.0,
            cwidth2: Complex64::new(1.0, 0.0),
        }
    }

    /// `e^{½itΔ} D_ε` applied to the standard window.
    pub fn evolved_window(eps: f64, t: f64) -> Result<Self> {
        if !(eps > 0.0) || !(t >= 0.0) {
            return Err(invalid("evolved window needs eps > 0 and t >= 0"));
        }
        let cwidth2 = Complex64::new(eps * eps, t);
        let amp = PI.powf(-0.25) * eps.sqrt() / cwidth2.sqrt();
        Ok(Self { amp, center: 0.0, momentum: 0.0, cwidth2 })
    }

    /// `(D_ε g)(x) = ε^{−1/2} g(x/ε)`.
    pub fn dilate(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(invalid("dilation scale must be positive"));
        }
        Ok(Self {
            amp: self.amp / eps.sqrt(),
            center: self.center * eps,
            momentum: self.momentum / eps,
            cwidth2: self.cwidth2 * (eps * eps),
        })
    }

    pub fn with_amp(&self, amp: Complex64) -> Self {
        Self { amp, ..*self }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let u = x - self.center;
        let arg = -(u * u) / (2.0 * self.cwidth2) + Complex64::new(0.0, self.momentum * x);
        self.amp * arg.exp()
    }

    /// `ĝ(k) = amp · e^{−i(k−p)c} · √(2πa) · e^{−a(k−p)²/2}`.
    pub fn fourier(&self, k: f64) -> Complex64 {
        let q = k - self.momentum;
        let arg = -self.cwidth2 * (0.5 * q * q) + Complex64::new(0.0, -q * self.center);
        self.amp * (self.cwidth2 * (2.0 * PI)).sqrt() * arg.exp()
    }

    /// Width `w` of the modulus, `|g(x)| = |amp| e^{−(x−c)²/(2w²)}`.
    pub fn abs_width(&self) -> f64 {
        (self.cwidth2.norm_sqr() / self.cwidth2.re).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_moment(0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_moment(0)
    }

    /// `‖(x − c)^α g‖_{L¹}` for `α ≤ 2`.
    pub fn l1_moment(&self, alpha: u32) -> f64 {
        let w = self.abs_width();
        let a = self.amp.norm();
        let s2pi = (2.0 * PI).sqrt();
        a * match alpha {
            0 => s2pi * w,
            1 => 2.0 * w * w,
            2 => s2pi * w * w * w,
            _ => f64::NAN,
        }
    }

    /// `‖(x − c)^α g‖_{L²}` for `α ≤ 2`.
    pub fn l2_moment(&self, alpha: u32) -> f64 {
        let w = self.abs_width();
        let a2 = self.amp.norm_sqr();
        let spi = PI.sqrt();
        let sq = a2
            * match alpha {
                0 => spi * w,
                1 => spi * w.powi(3) / 2.0,
                2 => 3.0 * spi * w.powi(5) / 4.0,
                _ => f64::NAN,
            };
        sq.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || len == 0 || !start.is_finite() {
            return Err(invalid("uniform grid needs a positive step and at least one node"));
        }
        Ok(Self { start, step, len })
    }

    /// `len` nodes from `a` to `b` inclusive.
    pub fn spanning(a: f64, b: f64, len: usize) -> Result<Self> {
        if len < 2 || !(b > a) {
            return Err(invalid("spanning grid needs b > a and at least two nodes"));
        }
        Self::new(a, (b - a) / (len - 1) as f64, len)
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.point(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: UniformGrid,
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn sample<F: Fn(f64) -> Complex64>(grid: UniformGrid, f: F) -> Self {
        let values = (0..grid.len).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: UniformGrid) -> Self {
        Self { grid, values: alloc::vec![Complex64::new(0.0, 0.0); grid.len] }
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        (pairwise_sum(&sq) * self.grid.step).sqrt()
    }

    /// `‖self − other‖₂`, grids assumed equal.
    pub fn l2_distance(&self, other: &GridFunction) -> f64 {
        let sq: Vec<f64> =
            self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).collect();
        (pairwise_sum(&sq) * self.grid.step).sqrt()
    }
}

/// Samples of a function on the phase-space grid, row-major in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborField {
    pub x_grid: UniformGrid,
    pub xi_grid: UniformGrid,
    pub values: Vec<Complex64>,
}

impl GaborField {
    pub fn zeros(x_grid: UniformGrid, xi_grid: UniformGrid) -> Self {
        Self { x_grid, xi_grid, values: alloc::vec![Complex64::new(0.0, 0.0); x_grid.len * xi_grid.len] }
    }

    pub fn at(&self, i: usize, k: usize) -> Complex64 {
        self.values[i * self.xi_grid.len + k]
    }

    /// `(∬ |F|² dx dξ / 2π)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        (pairwise_sum(&sq) * self.x_grid.step * self.xi_grid.step / (2.0 * PI)).sqrt()
    }
}

fn check_resolution(window: &ComplexGaussian, step: f64) -> Result<()> {
    let width = window.abs_width();
    if width < MIN_STEPS_PER_WIDTH * step {
        return Err(Error::GridTooCoarse { width, step });
    }
    Ok(())
}

/// `e^{−i·y_j·ξ_k}`, indexed `[k * ny + j]`.
fn plane_waves(y: &UniformGrid, xi: &UniformGrid, sign: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(y.len * xi.len);
    for k in 0..xi.len {
        let q = xi.point(k);
        for j in 0..y.len {
            out.push(Complex64::from_polar(1.0, sign * y.point(j) * q));
        }
    }
    out
}

/// Trapezoid quadrature of `W_φ f` on the tensor grid `x_grid × xi_grid`.
/// The samples of `f` are assumed to vanish at the ends of their grid, so
/// trapezoid and rectangle rules coincide.
pub fn wp_transform(
    window: &ComplexGaussian,
    f: &GridFunction,
    x_grid: UniformGrid,
    xi_grid: UniformGrid,
) -> Result<GaborField> {
    check_resolution(window, f.grid.step)?;
    let waves = plane_waves(&f.grid, &xi_grid, -1.0);
    let ny = f.grid.len;
    let mut field = GaborField::zeros(x_grid, xi_grid);
    let mut windowed = alloc::vec![Complex64::new(0.0, 0.0); ny];
    let mut terms = alloc::vec![Complex64::new(0.0, 0.0); ny];
    for i in 0..x_grid.len {
        let x = x_grid.point(i);
        for (j, w) in windowed.iter_mut().enumerate() {
            *w = window.eval(f.grid.point(j) - x).conj() * f.values[j];
        }
        for k in 0..xi_grid.len {
            let row = &waves[k * ny..(k + 1) * ny];
            for j in 0..ny {
                terms[j] = windowed[j] * row[j];
            }
            field.values[i * xi_grid.len + k] = pairwise_sum(&terms) * f.grid.step;
        }
    }
    Ok(field)
}

/// Trapezoid quadrature of `W_φ* F` at the nodes of `y_grid`.
pub fn wp_adjoint(window: &ComplexGaussian, field: &GaborField, y_grid: UniformGrid) -> Result<GridFunction> {
    check_resolution(window, field.x_grid.step)?;
    let waves = plane_waves(&y_grid, &field.xi_grid, 1.0);
    let (nx, nxi, ny) = (field.x_grid.len, field.xi_grid.len, y_grid.len);
    let measure = field.x_grid.step * field.xi_grid.step / (2.0 * PI);
    let mut out = GridFunction::zeros(y_grid);
    let mut inner = alloc::vec![Complex64::new(0.0, 0.0); nxi];
    let mut outer = alloc::vec![Complex64::new(0.0, 0.0); nx];
    for m in 0..ny {
        let y = y_grid.point(m);
        for i in 0..nx {
            let row = &field.values[i * nxi..(i + 1) * nxi];
            for k in 0..nxi {
                inner[k] = row[k] * waves[k * ny + m];
            }
            outer[i] = window.eval(y - field.x_grid.point(i)) * pairwise_sum(&inner);
        }
        out.values[m] = pairwise_sum(&outer) * measure;
    }
    Ok(out)
}

/// `‖φ‖⁻² W_φ* W_φ f` on the grid of `f`.
pub fn reconstruct(
    window: &ComplexGaussian,
    f: &GridFunction,
    x_grid: UniformGrid,
    xi_grid: UniformGrid,
) -> Result<GridFunction> {
    let field = wp_transform(window, f, x_grid, xi_grid)?;
    let mut g = wp_adjoint(window, &field, f.grid)?;
    let scale = 1.0 / window.l2_norm().powi(2);
    for v in &mut g.values {
        *v *= scale;
    }
    Ok(g)
}

/// Norms of `x^α e^{½itΔ} D_ε φ` against the corresponding bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyEstimate {
    pub alpha: u32,
    pub t: f64,
    pub eps: f64,
    pub lhs_l1: f64,
    pub rhs_l1: f64,
    pub ratio_l1: f64,
    pub lhs_l2: f64,
    pub rhs_l2: f64,
    pub ratio_l2: f64,
}

pub fn key_estimate_check(alpha: u32, t: f64, eps: f64) -> Result<KeyEstimate> {
    if alpha > 2 {
        return Err(invalid("moment order must be 0, 1 or 2"));
    }
    if !(t > 0.0) || !(eps > 0.0) {
        return Err(invalid("key estimate needs t > 0 and eps > 0"));
    }
    let g = ComplexGaussian::evolved_window(eps, t)?;
    let scale = (eps + t / eps).powi(alpha as i32);
    let r = eps / t.sqrt();
    let rhs_l1 = scale * (t / eps).sqrt() * (1.0 + r + r * r);
    let rhs_l2 = scale;
    let lhs_l1 = g.l1_moment(alpha);
    let lhs_l2 = g.l2_moment(alpha);
    Ok(KeyEstimate {
        alpha,
        t,
        eps,
        lhs_l1,
        rhs_l1,
        ratio_l1: lhs_l1 / rhs_l1,
        lhs_l2,
        rhs_l2,
        ratio_l2: lhs_l2 / rhs_l2,
    })
}
