//! The phase-space integral `E₀`, its amplitude `ã₀`, the phase
//! decomposition residual, and a band-limited block of the parametrix used to
//! measure the remainder operator.
//!
//! `E₀(t, x, y; ε) = ∬ φ_ε^{(t)}(x − x′) conj(φ_ε^{(0)}(y − X)) e^{−i(H + yΞ − xξ)} dx′ dξ/2π`
//! where `(X, Ξ) = (x⁽²⁾(0), ξ⁽²⁾(0))` is the terminal-data orbit through
//! `(t, x′, ξ)` traced back to `s = 0` and `H = ∫₀ᵗ h ds` with
//! `h = ½ξ² + V − x ∂ₓV` along it. The base window has unit norm.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use num_complex::Complex64;

#[allow(unused_imports)] // unused whenever std is linked into the build
use num_traits::Float;

use crate::classical::{default_steps, solve_bvp, sweep_from_terminal};
use crate::error::{invalid, Error, Result};
use crate::kernels::{free_prefactor, DenseMatrix, GridSpec};
use crate::potentials::{safe_horizon, PotentialModel};
use crate::quad::{pairwise_sum, simpson_weights};
use crate::wavepacket::ComplexGaussian;

/// Boundary-to-peak modulus ratio above which the truncation box is rejected.
pub const TRUNCATION_TOLERANCE: f64 = 1e-10;
/// Tolerance used for the boundary value problem behind `S(t, x, y)`.
pub const BVP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Truncation radius in window widths.
    pub trunc_sigma: f64,
    /// Minimum node count across the `x′` box.
    pub nodes_x: usize,
    /// Minimum node count across the `ξ` box.
    pub nodes_xi: usize,
    /// Largest phase change allowed between neighbouring nodes.
    pub phase_step_cap: f64,
    /// Nodes per Gaussian width.
    pub nodes_per_width: f64,
    /// RK4 steps for the orbits; `None` uses [`default_steps`].
    pub orbit_steps: Option<usize>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            trunc_sigma: 10.0,
            nodes_x: 64,
            nodes_xi: 64,
            phase_step_cap: PI / 4.0,
            nodes_per_width: 8.0,
            orbit_steps: None,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_x < 32 || self.nodes_xi < 32 {
            return Err(invalid("quadrature needs at least 32 nodes per axis"));
        }
        if !(self.trunc_sigma >= 6.0) {
            return Err(invalid("truncation radius must be at least 6 widths"));
        }
        if !(self.phase_step_cap > 0.0) || !(self.nodes_per_width > 0.0) {
            return Err(invalid("phase cap and nodes per width must be positive"));
        }
        if matches!(self.orbit_steps, Some(s) if s < crate::classical::MIN_STEPS) {
            return Err(invalid("orbit steps below the integrator minimum"));
        }
        Ok(())
    }

    /// The same spec with every node spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            nodes_x: 2 * self.nodes_x,
            nodes_xi: 2 * self.nodes_xi,
            phase_step_cap: 0.5 * self.phase_step_cap,
            nodes_per_width: 2.0 * self.nodes_per_width,
            ..*self
        }
    }

    pub fn steps_for(&self, t: f64) -> usize {
        self.orbit_steps.unwrap_or_else(|| default_steps(t))
    }

    /// `(dx′, dξ)` for pointwise evaluation of `E₀`.
    pub fn pointwise_spacing(&self, t: f64, eps: f64) -> (f64, f64) {
        let tt = self.trunc_sigma;
        let w = evolved_width(t, eps);
        let chirp = t / (eps.powi(4) + t * t);
        let dxp = (2.0 * tt * w / self.nodes_x as f64)
            .min(w / self.nodes_per_width)
            .min(self.phase_step_cap / (tt * w * chirp));
        let dxi = (2.0 * tt * eps / t / self.nodes_xi as f64)
            .min(eps / t / self.nodes_per_width)
            .min(self.phase_step_cap / (tt * (w + eps)));
        (dxp, dxi)
    }
}

/// Modulus width of `φ_ε^{(t)}`, `((ε⁴ + t²)/ε²)^{1/2}`.
pub fn evolved_width(t: f64, eps: f64) -> f64 {
    ((eps.powi(4) + t * t) / (eps * eps)).sqrt()
}

/// Endpoint and `∫h` of the terminal-data orbit through `(t, x′, ξ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HIntegral {
    pub x2_0: f64,
    pub xi2_0: f64,
    pub h_int: f64,
}

/// Integrates `h` along the terminal-data orbit with Simpson's rule on the
/// RK4 nodes.
pub fn h_integral(potential: &dyn PotentialModel, t: f64, x_prime: f64, xi: f64, steps: usize) -> Result<HIntegral> {
    if !(t > 0.0) {
        return Err(invalid("orbit duration must be positive"));
    }
    if steps < crate::classical::MIN_STEPS {
        return Err(invalid("orbit integration needs at least 16 steps"));
    }
    let weights = simpson_weights(steps, t / steps as f64);
    let mut terms = alloc::vec![0.0; steps + 1];
    let end = sweep_from_terminal(potential, t, x_prime, xi, steps, |k, s, x, p| {
        let v = potential.eval(s, x);
        terms[k] = weights[k] * (0.5 * p * p + v.v - v.grad * x);
    })?;
    Ok(HIntegral { x2_0: end.x, xi2_0: end.xi, h_int: pairwise_sum(&terms) })
}

fn check_time(potential: &dyn PotentialModel, t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(invalid("time must be positive"));
    }
    let horizon = safe_horizon(potential);
    if t >= horizon {
        return Err(Error::HorizonExceeded { t, horizon });
    }
    Ok(())
}

/// Layout of an [`OrbitTable`]: a lattice `x′ = i·dx′`, `ξ = k·dξ` whose rows
/// cover every `(x, y)` in the requested ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct TablePlan {
    pub t: f64,
    pub eps: f64,
    pub spec: QuadratureSpec,
    pub steps: usize,
    pub dxp: f64,
    pub dxi: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Lattice indices of the first and last `x′` rows.
    pub rows: (i64, i64),
}

impl TablePlan {
    pub fn new(
        potential: &dyn PotentialModel,
        t: f64,
        eps: f64,
        spec: QuadratureSpec,
        x_range: (f64, f64),
        y_range: (f64, f64),
    ) -> Result<Self> {
        spec.validate()?;
        check_time(potential, t)?;
        if !(eps > 0.0) {
            return Err(invalid("window scale must be positive"));
        }
        if !(x_range.1 >= x_range.0) || !(y_range.1 >= y_range.0) {
            return Err(invalid("empty sample range"));
        }
        let (dxp, dxi) = spec.pointwise_spacing(t, eps);
        let reach = spec.trunc_sigma * evolved_width(t, eps);
        let lo = ((x_range.0 - reach) / dxp).floor() as i64 - 1;
        let hi = ((x_range.1 + reach) / dxp).ceil() as i64 + 1;
        Ok(Self { t, eps, spec, steps: spec.steps_for(t), dxp, dxi, x_range, y_range, rows: (lo, hi) })
    }

    pub fn row_count(&self) -> usize {
        (self.rows.1 - self.rows.0 + 1) as usize
    }

    pub fn row_x(&self, r: usize) -> f64 {
        (self.rows.0 + r as i64) as f64 * self.dxp
    }

    /// Computes row `r`, extending its `ξ` range until `X = x⁽²⁾(0)` sweeps the
    /// whole `y` range plus the truncation margin.
    pub fn build_row(&self, potential: &dyn PotentialModel, r: usize) -> Result<OrbitRow> {
        let (t, dxi) = (self.t, self.dxi);
        let x_prime = self.row_x(r);
        let margin = self.spec.trunc_sigma * self.eps;
        let (big_lo, big_hi) = (self.y_range.0 - margin, self.y_range.1 + margin);
        let mut k_lo = ((x_prime - big_hi) / t / dxi).floor() as i64 - 1;
        let mut k_hi = ((x_prime - big_lo) / t / dxi).ceil() as i64 + 1;
        let endpoint = |k: i64| -> Result<f64> {
            Ok(h_integral(potential, t, x_prime, k as f64 * dxi, self.steps)?.x2_0)
        };
        let mut guard = 0;
        loop {
            let ext = ((k_hi - k_lo) / 8).max(4);
            let mut grew = false;
            if endpoint(k_lo)? < big_hi {
                k_lo -= ext;
                grew = true;
            }
            if endpoint(k_hi)? > big_lo {
                k_hi += ext;
                grew = true;
            }
            if !grew {
                break;
            }
            guard += 1;
            if guard > 64 {
                return Err(invalid("momentum range search did not bracket the target positions"));
            }
        }
        let n = (k_hi - k_lo + 1) as usize;
        let mut row = OrbitRow {
            x_prime,
            k_lo,
            x0: Vec::with_capacity(n),
            xi0: Vec::with_capacity(n),
            h: Vec::with_capacity(n),
        };
        for k in k_lo..=k_hi {
            let hi = h_integral(potential, t, x_prime, k as f64 * dxi, self.steps)?;
            row.x0.push(hi.x2_0);
            row.xi0.push(hi.xi2_0);
            row.h.push(hi.h_int);
        }
        Ok(row)
    }
}

/// One `x′` row of the table; node `m` has `ξ = (k_lo + m)·dξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitRow {
    pub x_prime: f64,
    pub k_lo: i64,
    pub x0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub h: Vec<f64>,
}

/// `x⁽²⁾(0)`, `ξ⁽²⁾(0)` and `∫h` on every lattice node; depends on
/// `(potential, t, ε, spec)` and the covered ranges but not on the sample
/// point, so one table serves a whole `(x, y)` window.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitTable {
    pub plan: TablePlan,
    pub rows: Vec<OrbitRow>,
}

impl OrbitTable {
    pub fn build(potential: &dyn PotentialModel, plan: TablePlan) -> Result<Self> {
        let rows = (0..plan.row_count()).map(|r| plan.build_row(potential, r)).collect::<Result<Vec<_>>>()?;
        Self::from_rows(plan, rows)
    }

    /// Assembles a table from rows computed elsewhere (e.g. in parallel).
    pub fn from_rows(plan: TablePlan, rows: Vec<OrbitRow>) -> Result<Self> {
        if rows.len() != plan.row_count() {
            return Err(invalid("row count does not match the table plan"));
        }
        for row in &rows {
            let finite = row.x0.iter().chain(&row.xi0).chain(&row.h).all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite { s: 0.0 });
            }
        }
        Ok(Self { plan, rows })
    }

    pub fn node_count(&self) -> usize {
        self.rows.iter().map(|r| r.x0.len()).sum()
    }

    fn covers(&self, x: f64, y: f64) -> bool {
        let p = &self.plan;
        let tol = 1e-12;
        x >= p.x_range.0 - tol && x <= p.x_range.1 + tol && y >= p.y_range.0 - tol && y <= p.y_range.1 + tol
    }
}

/// `E₀(t, x, y; ε)` from a prebuilt table.
pub fn e0(table: &OrbitTable, x: f64, y: f64) -> Result<Complex64> {
    let p = &table.plan;
    let win_t = ComplexGaussian::evolved_window(p.eps, p.t)?;
    let win_0 = ComplexGaussian::evolved_window(p.eps, 0.0)?;
    e0_with_windows(table, x, y, &win_t, &win_0)
}

/// [`e0`] with caller-supplied windows, which must be the two time slices of
/// one window family (same scale as the table).
pub fn e0_with_windows(
    table: &OrbitTable,
    x: f64,
    y: f64,
    win_t: &ComplexGaussian,
    win_0: &ComplexGaussian,
) -> Result<Complex64> {
    if !table.covers(x, y) {
        return Err(invalid("sample point lies outside the orbit table"));
    }
    let p = &table.plan;
    let reach_x = p.spec.trunc_sigma * win_t.abs_width();
    let reach_y = p.spec.trunc_sigma * win_0.abs_width();
    let mut row_sums = Vec::new();
    let mut row_peaks = Vec::new();
    let mut terms = Vec::new();
    // Largest modulus on the cut of each row; a row cut by the table edge
    // rather than by the window shows up here with a large value.
    let mut edge = 0.0f64;
    for row in &table.rows {
        let u = x - row.x_prime;
        if u.abs() > reach_x {
            continue;
        }
        let a = win_t.eval(u);
        terms.clear();
        let mut row_peak = 0.0f64;
        let mut included = None;
        for m in 0..row.x0.len() {
            let v = y - row.x0[m];
            if v.abs() > reach_y {
                continue;
            }
            let xi = (row.k_lo + m as i64) as f64 * p.dxi;
            let b = win_0.eval(v).conj();
            let phase = -(row.h[m] + y * row.xi0[m] - x * xi);
            let term = a * b * Complex64::from_polar(1.0, phase);
            row_peak = row_peak.max(term.norm());
            let (lo, _) = included.unwrap_or((m, m));
            included = Some((lo, m));
            terms.push(term);
        }
        if let Some((lo, hi)) = included {
            let first = terms[0].norm();
            let last = terms[terms.len() - 1].norm();
            let at_table_edge = lo == 0 || hi + 1 == row.x0.len();
            edge = edge.max(first).max(last);
            if at_table_edge {
                edge = edge.max(row_peak);
            }
        }
        row_peaks.push(row_peak);
        row_sums.push(pairwise_sum(&terms));
    }
    let peak = row_peaks.iter().copied().fold(0.0, f64::max);
    if let (Some(f), Some(l)) = (row_peaks.first(), row_peaks.last()) {
        edge = edge.max(*f).max(*l);
    }
    if row_sums.is_empty() || peak == 0.0 {
        return Err(invalid("no quadrature nodes fall inside the truncation box"));
    }
    let ratio = edge / peak;
    if ratio > TRUNCATION_TOLERANCE {
        return Err(Error::TruncationTooTight { ratio });
    }
    let norm2 = win_0.l2_norm().powi(2);
    Ok(pairwise_sum(&row_sums) * (p.dxp * p.dxi / (2.0 * PI * norm2)))
}

/// `(2πit)^{−1/2} e^{iS(t, x, y)}`.
pub fn leading_term(potential: &dyn PotentialModel, t: f64, x: f64, y: f64) -> Result<(Complex64, f64)> {
    let bvp = solve_bvp(potential, t, x, y, BVP_TOL)?;
    Ok((free_prefactor(t) * Complex64::from_polar(1.0, bvp.action), bvp.action))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub eps: f64,
    pub e0: Complex64,
    pub s_action: f64,
    /// `E₀ / ((2πit)^{−1/2} e^{iS})`.
    pub a0: Complex64,
}

pub fn amplitude_from_table(potential: &dyn PotentialModel, table: &OrbitTable, x: f64, y: f64) -> Result<AmplitudeSample> {
    let p = &table.plan;
    let e = e0(table, x, y)?;
    let (lead, s) = leading_term(potential, p.t, x, y)?;
    Ok(AmplitudeSample { t: p.t, x, y, eps: p.eps, e0: e, s_action: s, a0: e / lead })
}

/// Single-point amplitude; builds a table for just this `(x, y)`.
pub fn amplitude_a0(
    potential: &dyn PotentialModel,
    t: f64,
    x: f64,
    y: f64,
    eps: f64,
    spec: QuadratureSpec,
) -> Result<AmplitudeSample> {
    let plan = TablePlan::new(potential, t, eps, spec, (x, x), (y, y))?;
    let table = OrbitTable::build(potential, plan)?;
    amplitude_from_table(potential, &table, x, y)
}

/// Output of [`phase_decomposition_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDecomposition {
    /// `−∫h − yξ⁽²⁾(0) + xξ`.
    pub phase: f64,
    pub s_action: f64,
    /// `(x − x′) − (y − x⁽²⁾(0))`.
    pub big_x: f64,
    /// `(phase − S + X²/2t) / t`.
    pub r1: f64,
    /// `(x − x′)² + (y − x⁽²⁾(0))²`.
    pub quadratic_bound: f64,
}

pub fn phase_decomposition_check(
    potential: &dyn PotentialModel,
    t: f64,
    x: f64,
    y: f64,
    x_prime: f64,
    xi: f64,
) -> Result<PhaseDecomposition> {
    let bvp = solve_bvp(potential, t, x, y, BVP_TOL)?;
    let h = h_integral(potential, t, x_prime, xi, default_steps(t))?;
    let phase = -h.h_int - y * h.xi2_0 + x * xi;
    let big_x = (x - x_prime) - (y - h.x2_0);
    let r1 = (phase - bvp.action + big_x * big_x / (2.0 * t)) / t;
    Ok(PhaseDecomposition {
        phase,
        s_action: bvp.action,
        big_x,
        r1,
        quadratic_bound: (x - x_prime).powi(2) + (y - h.x2_0).powi(2),
    })
}

/// Smooth cutoff `F(k) = ½ erfc((|k| − center)/width)` on grid wavenumbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFilter {
    pub center: f64,
    pub width: f64,
    /// Modes with `F(k) ≤ floor` are dropped.
    pub floor: f64,
}

impl Default for SpectralFilter {
    fn default() -> Self {
        Self { center: 10.0, width: 1.5, floor: 1e-16 }
    }
}

impl SpectralFilter {
    pub fn weight(&self, k: f64) -> f64 {
        0.5 * libm::erfc((k.abs() - self.center) / self.width)
    }

    /// Weights in the FFT order of `grid.wavenumbers()`.
    pub fn weights(&self, grid: &GridSpec) -> Vec<f64> {
        grid.wavenumbers().into_iter().map(|k| self.weight(k)).collect()
    }

    /// Retained `(k, F(k))`, sorted by `k`.
    pub fn modes(&self, grid: &GridSpec) -> Vec<(f64, f64)> {
        let mut m: Vec<(f64, f64)> = grid
            .wavenumbers()
            .into_iter()
            .map(|k| (k, self.weight(k)))
            .filter(|&(_, f)| f > self.floor)
            .collect();
        m.sort_by(|a, b| a.0.total_cmp(&b.0));
        m
    }
}

/// Rows of `x′` lattice handled per chunk of [`FilteredBlockPlan`].
pub const CHUNK_ROWS: usize = 16;
/// Spatial margin, in units of the inverse filter width, kept around the block.
const MARGIN_WIDTHS: f64 = 9.0;
/// `|φ̂| < e^{−37}` of its peak is dropped from the rank-one updates.
const SPECTRAL_CUTOFF: f64 = 37.0;

/// The parametrix `E₀(·, ·; ε)` compressed to the band of a spectral filter
/// and sampled on a central block of a periodic grid:
/// `M = R F E₀ F R†`, in the same units as a discrete propagator matrix
/// (entries ≈ `dx · E₀`).
///
/// In the Fourier basis each quadrature node contributes a rank-one term
/// `c · a ⊗ conj(b)` with `a(k) = e^{−i(k−ξ)x′} φ̂_ε^{(t)}(k − ξ)` and
/// `b(k′) = e^{−i(k′−Ξ)X} φ̂_ε^{(0)}(k′ − Ξ)`, so the work scales with the
/// number of retained modes rather than with the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredBlockPlan {
    pub t: f64,
    pub eps: f64,
    pub grid: GridSpec,
    pub block: Vec<usize>,
    pub modes: Vec<(f64, f64)>,
    pub steps: usize,
    pub dxp: f64,
    pub dxi: f64,
    /// Lattice index range of `x′` rows.
    pub rows: (i64, i64),
    /// Lattice index range of `ξ`.
    pub cols: (i64, i64),
    /// Nodes with `|X|` above this are dropped.
    pub x_limit: f64,
    /// Nodes with `|Ξ|` above this are dropped.
    pub k_limit: f64,
}

impl FilteredBlockPlan {
    pub fn new(
        potential: &dyn PotentialModel,
        t: f64,
        eps: f64,
        grid: GridSpec,
        block: Vec<usize>,
        filter: SpectralFilter,
        spec: QuadratureSpec,
    ) -> Result<Self> {
        spec.validate()?;
        check_time(potential, t)?;
        if !(eps > 0.0) {
            return Err(invalid("window scale must be positive"));
        }
        if block.is_empty() || block.iter().any(|&i| i >= grid.n_points) {
            return Err(invalid("block indices must be nonempty and inside the grid"));
        }
        let modes = filter.modes(&grid);
        if modes.is_empty() {
            return Err(invalid("spectral filter retains no modes"));
        }
        let radius = block.iter().map(|&i| grid.point(i).abs()).fold(0.0, f64::max);
        let tt = spec.trunc_sigma;
        let w = evolved_width(t, eps);
        let delta = MARGIN_WIDTHS / filter.width;
        let k_max = modes.iter().map(|m| m.0.abs()).fold(0.0, f64::max);
        let k_limit = k_max + tt / eps;
        let npw = 0.5 * spec.nodes_per_width;
        let cap = 2.0 * spec.phase_step_cap;
        let dxp = (w / npw).min(cap / (2.0 * k_max));
        let dxi = (1.0 / (eps * npw)).min(cap / (t * (k_limit + k_max)));
        let xr = radius + tt * w + delta;
        // Nodes may lie past ±L; their periodic images must stay a full
        // truncation radius away from the block.
        if 2.0 * grid.half_len - xr - radius < tt * w {
            return Err(invalid("block plus margins does not fit inside the periodic grid"));
        }
        Ok(Self {
            t,
            eps,
            grid,
            block,
            modes,
            steps: spec.steps_for(t),
            dxp,
            dxi,
            rows: ((-xr / dxp).floor() as i64, (xr / dxp).ceil() as i64),
            cols: ((-k_limit / dxi).floor() as i64, (k_limit / dxi).ceil() as i64),
            x_limit: radius + tt * eps + delta,
            k_limit,
        })
    }

    pub fn band(&self) -> usize {
        self.modes.len()
    }

    pub fn chunk_count(&self) -> usize {
        let n = (self.rows.1 - self.rows.0 + 1) as usize;
        n.div_ceil(CHUNK_ROWS)
    }

    fn mode_range(&self, centre: f64) -> Range<usize> {
        let reach = (2.0 * SPECTRAL_CUTOFF).sqrt() / self.eps;
        let lo = self.modes.partition_point(|m| m.0 < centre - reach);
        let hi = self.modes.partition_point(|m| m.0 <= centre + reach);
        lo..hi
    }

    /// `Σ c · a ⊗ conj(b)` over the nodes of chunk `c`, as a row-major
    /// `band × band` array.
    pub fn accumulate_chunk(&self, potential: &dyn PotentialModel, c: usize) -> Result<Vec<Complex64>> {
        let nb = self.band();
        let mut g = alloc::vec![Complex64::new(0.0, 0.0); nb * nb];
        let first = self.rows.0 + (c * CHUNK_ROWS) as i64;
        let last = (first + CHUNK_ROWS as i64 - 1).min(self.rows.1);
        let (t, eps) = (self.t, self.eps);
        let hat0 = PI.powf(-0.25) * eps.sqrt() * (2.0 * PI).sqrt();
        let weight = self.dxp * self.dxi / (2.0 * PI);
        let mut a = alloc::vec![Complex64::new(0.0, 0.0); nb];
        let mut b = alloc::vec![Complex64::new(0.0, 0.0); nb];
        for i in first..=last {
            let x_prime = i as f64 * self.dxp;
            for k in self.cols.0..=self.cols.1 {
                let xi = k as f64 * self.dxi;
                let h = h_integral(potential, t, x_prime, xi, self.steps)?;
                if h.x2_0.abs() > self.x_limit || h.xi2_0.abs() > self.k_limit {
                    continue;
                }
                let ra = self.mode_range(xi);
                let rb = self.mode_range(h.xi2_0);
                if ra.is_empty() || rb.is_empty() {
                    continue;
                }
                let coef = Complex64::from_polar(weight, -h.h_int);
                for m in ra.clone() {
                    let q = self.modes[m].0 - xi;
                    let env = hat0 * (-0.5 * eps * eps * q * q).exp();
                    a[m] = coef * Complex64::from_polar(env, -q * x_prime - 0.5 * t * q * q);
                }
                for m in rb.clone() {
                    let q = self.modes[m].0 - h.xi2_0;
                    let env = hat0 * (-0.5 * eps * eps * q * q).exp();
                    // conj(e^{−iqX} φ̂_ε^{(0)}(q)), the latter being real.
                    b[m] = Complex64::from_polar(env, q * h.x2_0);
                }
                for m in ra {
                    let am = a[m];
                    let row = &mut g[m * nb..(m + 1) * nb];
                    for n in rb.clone() {
                        row[n] += am * b[n];
                    }
                }
            }
        }
        Ok(g)
    }

    /// Sums the chunk partials in order and maps back to the spatial block.
    pub fn assemble(&self, partials: &[Vec<Complex64>]) -> Result<DenseMatrix> {
        let nb = self.band();
        if partials.len() != self.chunk_count() || partials.iter().any(|p| p.len() != nb * nb) {
            return Err(invalid("chunk partials do not match the plan"));
        }
        let mut g = alloc::vec![Complex64::new(0.0, 0.0); nb * nb];
        for p in partials {
            for (acc, v) in g.iter_mut().zip(p) {
                *acc += v;
            }
        }
        let n = self.grid.n_points as f64;
        let two_l = 2.0 * self.grid.half_len;
        let nblk = self.block.len();
        // Left factor e^{ikx}F(k)/2L, right factor F(k′)e^{−ik′y}/N.
        let left = DenseMatrix::from_fn(nblk, nb, |i, m| {
            let (k, f) = self.modes[m];
            Complex64::from_polar(f / two_l, k * self.grid.point(self.block[i]))
        });
        let right = DenseMatrix::from_fn(nb, nblk, |m, j| {
            let (k, f) = self.modes[m];
            Complex64::from_polar(f / n, -k * self.grid.point(self.block[j]))
        });
        let mut tmp = DenseMatrix::zeros(nblk, nb);
        let mut terms = alloc::vec![Complex64::new(0.0, 0.0); nb];
        for i in 0..nblk {
            for m2 in 0..nb {
                for m1 in 0..nb {
                    terms[m1] = left.get(i, m1) * g[m1 * nb + m2];
                }
                tmp.set(i, m2, pairwise_sum(&terms));
            }
        }
        let mut out = DenseMatrix::zeros(nblk, nblk);
        for i in 0..nblk {
            for j in 0..nblk {
                for m in 0..nb {
                    terms[m] = tmp.get(i, m) * right.get(m, j);
                }
                out.set(i, j, pairwise_sum(&terms));
            }
        }
        Ok(out)
    }
}

/// Serial evaluation of a [`FilteredBlockPlan`].
pub fn filtered_parametrix_block(potential: &dyn PotentialModel, plan: &FilteredBlockPlan) -> Result<DenseMatrix> {
    let partials =
        (0..plan.chunk_count()).map(|c| plan.accumulate_chunk(potential, c)).collect::<Result<Vec<_>>>()?;
    plan.assemble(&partials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{exact_kernel, ExactKind};
    use crate::potentials::Builtin;
    use approx::assert_abs_diff_eq;

    #[test]
    fn free_h_integral() {
        let h = h_integral(&Builtin::Free, 0.5, 1.0, 2.0, 64).unwrap();
        assert_abs_diff_eq!(h.h_int, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h.x2_0, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h.xi2_0, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn stark_h_integral_closed_form() {
        // ξ(s) = ξ + E(t − s), h = ½ξ(s)².
        let (t, xi, e) = (0.5, 2.0, 1.0);
        let h = h_integral(&Builtin::Stark { field: e }, t, 1.0, xi, 64).unwrap();
        let exact = 0.5 * (xi * xi * t + xi * e * t * t + e * e * t.powi(3) / 3.0);
        assert_abs_diff_eq!(h.h_int, exact, epsilon = 1e-12);
    }

    #[test]
    fn spec_validation_and_refinement() {
        let s = QuadratureSpec::default();
        assert!(s.validate().is_ok());
        assert!(QuadratureSpec { nodes_x: 16, ..s }.validate().is_err());
        assert!(QuadratureSpec { trunc_sigma: 5.0, ..s }.validate().is_err());
        let r = s.refined();
        let (a, b) = s.pointwise_spacing(0.1, 0.3);
        let (c, d) = r.pointwise_spacing(0.1, 0.3);
        assert_abs_diff_eq!(c, 0.5 * a, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 0.5 * b, epsilon = 1e-15);
    }

    #[test]
    fn free_e0_equals_the_free_kernel() {
        let t: f64 = 0.2;
        let s = amplitude_a0(&Builtin::Free, t, 1.0, 0.0, t.sqrt(), QuadratureSpec::default()).unwrap();
        let k = exact_kernel(ExactKind::Free, t, 1.0, 0.0).unwrap();
        assert!((s.e0 - k).norm() / k.norm() < 1e-6, "{:?} vs {k:?}", s.e0);
        assert!((s.a0 - 1.0).norm() < 1e-6);
    }

    #[test]
    fn table_rejects_points_outside_its_range() {
        let plan = TablePlan::new(&Builtin::Free, 0.1, 0.3, QuadratureSpec::default(), (0.0, 0.0), (0.0, 0.0)).unwrap();
        let table = OrbitTable::build(&Builtin::Free, plan).unwrap();
        assert!(e0(&table, 0.5, 0.0).is_err());
    }

    #[test]
    fn tight_truncation_is_reported() {
        let spec = QuadratureSpec { trunc_sigma: 6.0, ..QuadratureSpec::default() };
        let e = amplitude_a0(&Builtin::Free, 0.1, 0.0, 0.0, 0.3, spec).unwrap_err();
        assert!(matches!(e, Error::TruncationTooTight { .. }), "{e:?}");
    }

    #[test]
    fn phase_residual_vanishes_for_free_motion() {
        let d = phase_decomposition_check(&Builtin::Free, 0.3, 0.4, -0.2, 0.9, 1.7).unwrap();
        assert_abs_diff_eq!(d.r1, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn filter_band() {
        let g = GridSpec::new(16.0, 256).unwrap();
        let f = SpectralFilter::default();
        let m = f.modes(&g);
        assert!(m.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(m.len() > 150 && m.len() < 200);
        assert_abs_diff_eq!(f.weight(10.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.weight(0.0), 1.0, epsilon = 1e-12);
    }
}
