//! Potentials `V(t, x)` with analytic gradient and Hessian.
//!
//! Every supported potential is C² in space with a uniformly bounded second
//! derivative `|∂ₓ²V| ≤ M`. The bound fixes the safe horizon `π/√M` below
//! which the two-point boundary value problem has a unique solution.

use alloc::format;
use alloc::string::String;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // unused whenever std is linked into the build
use num_traits::Float;

use crate::error::{invalid, Error, Result};

/// Value, gradient and Hessian of a potential at one `(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSample {
    pub v: f64,
    pub grad: f64,
    pub hess: f64,
}

/// A potential with analytic derivatives and a known Hessian bound.
///
/// Implementations must be pure: the same `(t, x)` always yields the same
/// sample.
pub trait PotentialModel: Sync {
    /// Short name used in reports.
    fn id(&self) -> String;

    fn eval(&self, t: f64, x: f64) -> PotentialSample;

    /// Supremum of `|∂ₓ²V|` over all `(t, x)`.
    fn hess_bound(&self) -> f64;

    fn is_time_dependent(&self) -> bool;

    fn value(&self, t: f64, x: f64) -> f64 {
        self.eval(t, x).v
    }

    fn grad(&self, t: f64, x: f64) -> f64 {
        self.eval(t, x).grad
    }
}

/// The built-in potential family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    /// `V = 0`.
    Free,
    /// `V = E x`.
    Stark { field: f64 },
    /// `V = x²/2`.
    Harmonic,
    /// `|x|³/6` on `|x| ≤ 1`, continued quadratically outside. `V″ = min(|x|, 1)`
    /// is continuous but `V‴` jumps at `0` and `±1`.
    AbsCubed,
    /// `V = (1 + ½ sin t) x²/2`.
    Breathing,
}

impl Builtin {
    /// Every builtin, with `field = 1` for the Stark potential.
    pub const ALL: [Builtin; 5] = [
        Builtin::Free,
        Builtin::Stark { field: 1.0 },
        Builtin::Harmonic,
        Builtin::AbsCubed,
        Builtin::Breathing,
    ];

    /// Points where the third derivative is discontinuous.
    pub fn kinks(&self) -> &'static [f64] {
        match self {
            Builtin::AbsCubed => &[-1.0, 0.0, 1.0],
            _ => &[],
        }
    }
}

impl PotentialModel for Builtin {
    fn id(&self) -> String {
        format!("{self}")
    }

    fn eval(&self, t: f64, x: f64) -> PotentialSample {
        match *self {
            Builtin::Free => PotentialSample { v: 0.0, grad: 0.0, hess: 0.0 },
            Builtin::Stark { field } => PotentialSample { v: field * x, grad: field, hess: 0.0 },
            Builtin::Harmonic => PotentialSample { v: 0.5 * x * x, grad: x, hess: 1.0 },
            Builtin::AbsCubed => abs_cubed(x),
            Builtin::Breathing => {
                let c = 1.0 + 0.5 * t.sin();
                PotentialSample { v: 0.5 * c * x * x, grad: c * x, hess: c }
            }
        }
    }

    fn hess_bound(&self) -> f64 {
        match self {
            Builtin::Free | Builtin::Stark { .. } => 0.0,
            Builtin::Harmonic | Builtin::AbsCubed => 1.0,
            Builtin::Breathing => 1.5,
        }
    }

    fn is_time_dependent(&self) -> bool {
        matches!(self, Builtin::Breathing)
    }
}

fn abs_cubed(x: f64) -> PotentialSample {
    let a = x.abs();
    if a <= 1.0 {
        PotentialSample { v: a * a * a / 6.0, grad: 0.5 * x * a, hess: a }
    } else {
        let d = a - 1.0;
        PotentialSample {
            v: 1.0 / 6.0 + 0.5 * d + 0.5 * d * d,
            grad: x.signum() * (0.5 + d),
            hess: 1.0,
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Free => f.write_str("free"),
            Builtin::Stark { field } => write!(f, "stark:E={field}"),
            Builtin::Harmonic => f.write_str("harmonic"),
            Builtin::AbsCubed => f.write_str("abscubed"),
            Builtin::Breathing => f.write_str("breathing"),
        }
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "free" => return Ok(Builtin::Free),
            "harmonic" => return Ok(Builtin::Harmonic),
            "abscubed" => return Ok(Builtin::AbsCubed),
            "breathing" => return Ok(Builtin::Breathing),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("stark") {
            let field = match rest {
                "" => Some(1.0),
                _ => rest
                    .strip_prefix(":E=")
                    .or_else(|| rest.strip_prefix(":e="))
                    .and_then(|v| v.parse::<f64>().ok()),
            };
            if let Some(field) = field.filter(|e| e.is_finite()) {
                return Ok(Builtin::Stark { field });
            }
        }
        Err(Error::UnknownPotential(s.into()))
    }
}

/// Time below which the boundary value problem is uniquely solvable:
/// `π/√M`, or `+∞` when the Hessian bound is zero.
pub fn safe_horizon(potential: &dyn PotentialModel) -> f64 {
    let m = potential.hess_bound();
    if m > 0.0 {
        PI / m.sqrt()
    } else {
        f64::INFINITY
    }
}

/// Step used for the central-difference gradient check.
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Relative slack on the Hessian bound.
pub const HESS_SLACK: f64 = 1e-9;
/// Maximum allowed gradient inconsistency, relative to `1 + |grad|`.
pub const GRAD_CONSISTENCY_TOL: f64 = 1e-5;

/// Outcome of [`check_assumption`]. A failed check is reported, not raised.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub potential: String,
    pub samples: usize,
    pub hess_bound: f64,
    pub max_abs_hess: f64,
    /// `(t, x)` where `max_abs_hess` was attained.
    pub argmax_hess: (f64, f64),
    pub max_grad_error: f64,
    pub growth_ok: bool,
    pub consistency_ok: bool,
    pub finite: bool,
}

impl AssumptionReport {
    pub fn pass(&self) -> bool {
        self.growth_ok && self.consistency_ok && self.finite
    }
}

/// Samples the potential on the product of `t_samples` and `x_samples` and
/// checks the Hessian bound and gradient consistency.
pub fn check_assumption(
    potential: &dyn PotentialModel,
    t_samples: &[f64],
    x_samples: &[f64],
) -> Result<AssumptionReport> {
    if t_samples.is_empty() || x_samples.is_empty() {
        return Err(invalid("assumption check needs nonempty t and x samples"));
    }
    let bound = potential.hess_bound();
    let h = GRAD_CHECK_STEP;
    let mut max_hess = 0.0f64;
    let mut argmax = (t_samples[0], x_samples[0]);
    let mut max_err = 0.0f64;
    let mut finite = true;
    for &t in t_samples {
        for &x in x_samples {
            let s = potential.eval(t, x);
            if !(s.v.is_finite() && s.grad.is_finite() && s.hess.is_finite()) {
                finite = false;
                continue;
            }
            if s.hess.abs() > max_hess {
                max_hess = s.hess.abs();
                argmax = (t, x);
            }
            let fd = (potential.value(t, x + h) - potential.value(t, x - h)) / (2.0 * h);
            let err = (fd - s.grad).abs() / (1.0 + s.grad.abs());
            max_err = max_err.max(err);
        }
    }
    Ok(AssumptionReport {
        potential: potential.id(),
        samples: t_samples.len() * x_samples.len(),
        hess_bound: bound,
        max_abs_hess: max_hess,
        argmax_hess: argmax,
        max_grad_error: max_err,
        growth_ok: max_hess <= bound * (1.0 + HESS_SLACK),
        consistency_ok: max_err <= GRAD_CONSISTENCY_TOL,
        finite,
    })
}

/// `n` equally spaced points covering `[a, b]` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> alloc::vec::Vec<f64> {
    match n {
        0 => alloc::vec::Vec::new(),
        1 => alloc::vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Default validation sampling: 64 times in `[0, 2π]` and 512 positions in
/// `[−8, 8]`.
pub fn default_validation_samples() -> (alloc::vec::Vec<f64>, alloc::vec::Vec<f64>) {
    (linspace(0.0, 2.0 * PI, 64), linspace(-8.0, 8.0, 512))
}
