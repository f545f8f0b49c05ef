//! Classical orbits of `ẋ = ξ, ξ̇ = −∂ₓV(s, x)`.
//!
//! Two orbit families appear in the parametrix:
//!
//! * terminal data `x(t) = x, ξ(t) = ξ`, integrated backward to `s = 0`;
//! * boundary data `x(0) = y, x(t) = x`, solved by shooting on `ξ(0)`.
//!
//! Both are integrated with fixed-step classical RK4. The variational
//! equation `J″ = −∂ₓ²V(s, x(s)) J` is co-integrated so that `J(s)` is the
//! derivative of `x(s)` with respect to the free momentum of the problem.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused whenever std is linked into the build
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::potentials::{safe_horizon, PotentialModel};
use crate::quad::{pairwise_sum, simpson};

/// Smallest step count accepted by the integrators.
pub const MIN_STEPS: usize = 16;
/// Newton iteration cap for [`solve_bvp`].
pub const MAX_NEWTON_STEPS: usize = 50;
/// `|det J(0)|` below this is treated as a conjugate point.
pub const SINGULAR_JACOBIAN: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitKind {
    /// Fixed `(x(t), ξ(t))`; `jac` is `∂x(s)/∂ξ(t)`.
    TerminalData,
    /// Fixed `x(0)` and shooting momentum `ξ(0)`; `jac` is `∂x(s)/∂ξ(0)`.
    BoundaryData,
}

/// A sampled orbit on `s ∈ [0, t]`, nodes in increasing `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    pub t_grid: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub jac: Vec<f64>,
    /// `dJ/ds` at each node.
    pub jac_rate: Vec<f64>,
    pub kind: OrbitKind,
}

impl Orbit {
    pub fn duration(&self) -> f64 {
        self.t_grid.last().copied().unwrap_or(0.0)
    }

    pub fn first(&self) -> PhasePoint {
        self.states[0]
    }

    pub fn last(&self) -> PhasePoint {
        self.states[self.states.len() - 1]
    }

    pub fn steps(&self) -> usize {
        self.t_grid.len() - 1
    }
}

/// Step count used when the caller does not pick one:
/// `max(64, ⌈t/0.005⌉)`, rounded up to an even number for Simpson's rule.
pub fn default_steps(t: f64) -> usize {
    let n = ((t / 0.005).ceil() as usize).max(64);
    n + n % 2
}

/// `H = ½ξ² + V(s, x)`.
pub fn hamiltonian(potential: &dyn PotentialModel, s: f64, p: PhasePoint) -> f64 {
    0.5 * p.xi * p.xi + potential.value(s, p.x)
}

#[derive(Clone, Copy)]
struct Variational {
    x: f64,
    xi: f64,
    j: f64,
    jd: f64,
}

impl Variational {
    fn axpy(self, h: f64, d: Variational) -> Variational {
        Variational {
            x: self.x + h * d.x,
            xi: self.xi + h * d.xi,
            j: self.j + h * d.j,
            jd: self.jd + h * d.jd,
        }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.xi.is_finite() && self.j.is_finite() && self.jd.is_finite()
    }
}

fn variational_rhs(p: &dyn PotentialModel, s: f64, y: Variational) -> Variational {
    let v = p.eval(s, y.x);
    Variational { x: y.xi, xi: -v.grad, j: y.jd, jd: -v.hess * y.j }
}

fn rk4_variational(p: &dyn PotentialModel, s: f64, y: Variational, h: f64) -> Variational {
    let k1 = variational_rhs(p, s, y);
    let k2 = variational_rhs(p, s + 0.5 * h, y.axpy(0.5 * h, k1));
    let k3 = variational_rhs(p, s + 0.5 * h, y.axpy(0.5 * h, k2));
    let k4 = variational_rhs(p, s + h, y.axpy(h, k3));
    Variational {
        x: y.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        xi: y.xi + h / 6.0 * (k1.xi + 2.0 * k2.xi + 2.0 * k3.xi + k4.xi),
        j: y.j + h / 6.0 * (k1.j + 2.0 * k2.j + 2.0 * k3.j + k4.j),
        jd: y.jd + h / 6.0 * (k1.jd + 2.0 * k2.jd + 2.0 * k3.jd + k4.jd),
    }
}

fn check_flow_args(t: f64, steps: usize) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("orbit duration must be positive and finite"));
    }
    if steps < MIN_STEPS {
        return Err(invalid("orbit integration needs at least 16 steps"));
    }
    Ok(())
}

fn integrate(
    p: &dyn PotentialModel,
    s0: f64,
    h: f64,
    steps: usize,
    start: Variational,
) -> Result<Vec<(f64, Variational)>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = start;
    out.push((s0, y));
    for k in 0..steps {
        let s = s0 + k as f64 * h;
        y = rk4_variational(p, s, y, h);
        if !y.is_finite() {
            return Err(Error::NonFinite { s: s + h });
        }
        out.push((s0 + (k + 1) as f64 * h, y));
    }
    Ok(out)
}

fn into_orbit(mut nodes: Vec<(f64, Variational)>, kind: OrbitKind, reverse: bool) -> Orbit {
    if reverse {
        nodes.reverse();
    }
    let n = nodes.len();
    let mut orbit = Orbit {
        t_grid: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        jac: Vec::with_capacity(n),
        jac_rate: Vec::with_capacity(n),
        kind,
    };
    for (s, y) in nodes {
        orbit.t_grid.push(s);
        orbit.states.push(PhasePoint { x: y.x, xi: y.xi });
        orbit.jac.push(y.j);
        orbit.jac_rate.push(y.jd);
    }
    // Pin the endpoints so that s = 0 and s = t are exact.
    if let Some(s) = orbit.t_grid.first_mut() {
        *s = s.max(0.0).min(0.0);
    }
    orbit
}

/// Integrates backward from `x(t) = x, ξ(t) = ξ` to `s = 0`, co-integrating
/// `J(s) = ∂x(s)/∂ξ` with `J(t) = 0, J′(t) = 1`.
pub fn flow_from_terminal(
    potential: &dyn PotentialModel,
    t: f64,
    x: f64,
    xi: f64,
    steps: usize,
) -> Result<Orbit> {
    check_flow_args(t, steps)?;
    let h = -t / steps as f64;
    let start = Variational { x, xi, j: 0.0, jd: 1.0 };
    let mut nodes = integrate(potential, t, h, steps, start)?;
    if let Some(last) = nodes.last_mut() {
        last.0 = 0.0;
    }
    let mut orbit = into_orbit(nodes, OrbitKind::TerminalData, true);
    if let Some(s) = orbit.t_grid.last_mut() {
        *s = t;
    }
    Ok(orbit)
}

/// Integrates forward from `x(0) = y, ξ(0) = v` to `s = t`, co-integrating
/// `J(s) = ∂x(s)/∂v` with `J(0) = 0, J′(0) = 1`.
pub fn flow_from_initial(
    potential: &dyn PotentialModel,
    t: f64,
    y: f64,
    v: f64,
    steps: usize,
) -> Result<Orbit> {
    check_flow_args(t, steps)?;
    let h = t / steps as f64;
    let start = Variational { x: y, xi: v, j: 0.0, jd: 1.0 };
    let mut nodes = integrate(potential, 0.0, h, steps, start)?;
    if let Some(last) = nodes.last_mut() {
        last.0 = t;
    }
    Ok(into_orbit(nodes, OrbitKind::BoundaryData, false))
}

/// Backward RK4 on `(x, ξ)` only, calling `visit(k, s, x, ξ)` at every node
/// from `k = 0` (`s = t`) to `k = steps` (`s = 0`). Used where only the
/// endpoint and running integrals are needed.
pub fn sweep_from_terminal<F>(
    potential: &dyn PotentialModel,
    t: f64,
    x: f64,
    xi: f64,
    steps: usize,
    mut visit: F,
) -> Result<PhasePoint>
where
    F: FnMut(usize, f64, f64, f64),
{
    let h = -t / steps as f64;
    let (mut px, mut pxi) = (x, xi);
    visit(0, t, px, pxi);
    for k in 0..steps {
        let s = t + k as f64 * h;
        let f1 = potential.grad(s, px);
        let (x2, xi2) = (px + 0.5 * h * pxi, pxi - 0.5 * h * f1);
        let f2 = potential.grad(s + 0.5 * h, x2);
        let (x3, xi3) = (px + 0.5 * h * xi2, pxi - 0.5 * h * f2);
        let f3 = potential.grad(s + 0.5 * h, x3);
        let (x4, xi4) = (px + h * xi3, pxi - h * f3);
        let f4 = potential.grad(s + h, x4);
        px += h / 6.0 * (pxi + 2.0 * xi2 + 2.0 * xi3 + xi4);
        pxi -= h / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4);
        if !(px.is_finite() && pxi.is_finite()) {
            return Err(Error::NonFinite { s: s + h });
        }
        let s_next = if k + 1 == steps { 0.0 } else { t + (k + 1) as f64 * h };
        visit(k + 1, s_next, px, pxi);
    }
    Ok(PhasePoint { x: px, xi: pxi })
}

/// Solution of the two-point problem `x(0) = y, x(t) = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BvpSolution {
    pub orbit: Orbit,
    /// `ξ(0)`.
    pub xi0: f64,
    /// `ξ(t)`.
    pub xit: f64,
    /// `S(t, x, y)`.
    pub action: f64,
    /// `|x(t) − x|` reached by the final shot.
    pub residual: f64,
    pub newton_steps: usize,
}

/// Shooting with Newton on the initial momentum, using the co-integrated
/// `∂x(t)/∂ξ(0)`. Steps are halved while the residual fails to decrease.
pub fn solve_bvp(potential: &dyn PotentialModel, t: f64, x: f64, y: f64, tol: f64) -> Result<BvpSolution> {
    solve_bvp_with_steps(potential, t, x, y, tol, default_steps(t))
}

pub fn solve_bvp_with_steps(
    potential: &dyn PotentialModel,
    t: f64,
    x: f64,
    y: f64,
    tol: f64,
    steps: usize,
) -> Result<BvpSolution> {
    if !(tol > 0.0) {
        return Err(invalid("BVP tolerance must be positive"));
    }
    if !(t > 0.0) {
        return Err(invalid("BVP duration must be positive"));
    }
    let horizon = safe_horizon(potential);
    if t >= horizon {
        return Err(Error::HorizonExceeded { t, horizon });
    }
    let mut v = (x - y) / t;
    let mut orbit = flow_from_initial(potential, t, y, v, steps)?;
    let mut r = orbit.last().x - x;
    let mut it = 0;
    while r.abs() > tol {
        if it == MAX_NEWTON_STEPS {
            return Err(Error::NoConvergence { iterations: it, residual: r.abs() });
        }
        it += 1;
        let jt = orbit.jac[orbit.jac.len() - 1];
        if jt.abs() < SINGULAR_JACOBIAN {
            return Err(Error::NoConvergence { iterations: it, residual: r.abs() });
        }
        let dv = -r / jt;
        let mut lambda = 1.0;
        loop {
            let trial_v = v + lambda * dv;
            let trial = flow_from_initial(potential, t, y, trial_v, steps)?;
            let trial_r = trial.last().x - x;
            if trial_r.abs() < r.abs() || lambda < 1e-6 {
                v = trial_v;
                orbit = trial;
                r = trial_r;
                break;
            }
            lambda *= 0.5;
        }
    }
    let action = action(potential, &orbit);
    Ok(BvpSolution {
        xi0: orbit.first().xi,
        xit: orbit.last().xi,
        action,
        residual: r.abs(),
        newton_steps: it,
        orbit,
    })
}

/// `∫₀ᵗ ½ξ(s)² − V(s, x(s)) ds` by composite Simpson on the orbit nodes.
pub fn action(potential: &dyn PotentialModel, orbit: &Orbit) -> f64 {
    let lagrangian: Vec<f64> = orbit
        .t_grid
        .iter()
        .zip(&orbit.states)
        .map(|(&s, p)| 0.5 * p.xi * p.xi - potential.value(s, p.x))
        .collect();
    simpson(&lagrangian, orbit.duration() / orbit.steps() as f64)
}

/// Jacobian of `ξ ↦ x(0; t, x, ξ)` along a terminal-data orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianR0 {
    /// `J(0) = ∂x(0)/∂ξ`.
    pub jac0: f64,
    /// `|det J(0)|⁻¹`.
    pub det_ratio: f64,
    /// `t^{n−1} |det J(0)|⁻¹ − t⁻¹` with `n = 1`.
    pub r0: f64,
}

pub fn jacobian_r0(potential: &dyn PotentialModel, t: f64, x: f64, xi: f64) -> Result<JacobianR0> {
    let horizon = safe_horizon(potential);
    if t >= horizon {
        return Err(Error::HorizonExceeded { t, horizon });
    }
    let orbit = flow_from_terminal(potential, t, x, xi, default_steps(t))?;
    let jac0 = orbit.jac[0];
    if jac0.abs() < SINGULAR_JACOBIAN {
        return Err(Error::SingularJacobian { det: jac0.abs() });
    }
    let det_ratio = 1.0 / jac0.abs();
    Ok(JacobianR0 { jac0, det_ratio, r0: det_ratio - 1.0 / t })
}

/// Measured gaps between the boundary-data orbit through `(t, x, y)` and the
/// terminal-data orbit through `(t, x′, ξ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    /// `sup_s |x⁽¹⁾(s) − x⁽²⁾(s)|`.
    pub position_gap: f64,
    /// `sup_s |ξ⁽¹⁾(s) − ξ⁽²⁾(s) − X/t|` with `X = (x − x′) − (y − x⁽²⁾(0))`.
    pub momentum_gap: f64,
    /// `|x − x′| + |y − x⁽²⁾(0)|`.
    pub mismatch: f64,
    /// `position_gap / mismatch`.
    pub c1: f64,
    /// `momentum_gap / (t · mismatch)`.
    pub c2: f64,
}

pub fn orbit_gap_check(
    potential: &dyn PotentialModel,
    t: f64,
    x: f64,
    y: f64,
    x_prime: f64,
    xi: f64,
) -> Result<GapReport> {
    let steps = default_steps(t);
    let bvp = solve_bvp_with_steps(potential, t, x, y, 1e-12, steps)?;
    let term = flow_from_terminal(potential, t, x_prime, xi, steps)?;
    let x2_0 = term.first().x;
    let big_x = (x - x_prime) - (y - x2_0);
    let mut position_gap = 0.0f64;
    let mut momentum_gap = 0.0f64;
    for (a, b) in bvp.orbit.states.iter().zip(&term.states) {
        position_gap = position_gap.max((a.x - b.x).abs());
        momentum_gap = momentum_gap.max((a.xi - b.xi - big_x / t).abs());
    }
    let mismatch = (x - x_prime).abs() + (y - x2_0).abs();
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    Ok(GapReport {
        position_gap,
        momentum_gap,
        mismatch,
        c1: ratio(position_gap, mismatch),
        c2: ratio(momentum_gap, t * mismatch),
    })
}

/// Largest `|H(s) − H(0)|` along an orbit.
pub fn energy_drift(potential: &dyn PotentialModel, orbit: &Orbit) -> f64 {
    let h0 = hamiltonian(potential, orbit.t_grid[0], orbit.states[0]);
    let drifts: Vec<f64> = orbit
        .t_grid
        .iter()
        .zip(&orbit.states)
        .map(|(&s, &p)| (hamiltonian(potential, s, p) - h0).abs())
        .collect();
    drifts.into_iter().fold(0.0, f64::max)
}

/// Mean of the Lagrangian along the orbit; handy for sanity checks in reports.
pub fn mean_lagrangian(potential: &dyn PotentialModel, orbit: &Orbit) -> f64 {
    let l: Vec<f64> = orbit
        .t_grid
        .iter()
        .zip(&orbit.states)
        .map(|(&s, p)| 0.5 * p.xi * p.xi - potential.value(s, p.x))
        .collect();
    pairwise_sum(&l) / l.len() as f64
}
