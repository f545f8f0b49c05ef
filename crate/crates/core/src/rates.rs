//! Least-squares fits of `log err = intercept + slope · log t`.

use alloc::vec::Vec;

#[allow(unused_imports)] // unused whenever std is linked into the build
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::quad::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl RateFit {
    /// `e^{intercept}`, the constant in `err ≈ C t^{slope}`.
    pub fn constant(&self) -> f64 {
        self.intercept.exp()
    }
}

/// Ordinary least squares on `(log t, log err)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit);
    }
    if points.iter().any(|&(t, e)| !(t > 0.0) || !(e > 0.0) || !t.is_finite() || !e.is_finite()) {
        return Err(invalid("rate fit needs positive finite t and err"));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = points.len() as f64;
    let mx = pairwise_sum(&lx) / n;
    let my = pairwise_sum(&ly) / n;
    let dx: Vec<f64> = lx.iter().map(|x| x - mx).collect();
    let dy: Vec<f64> = ly.iter().map(|y| y - my).collect();
    let sxx = pairwise_sum(&dx.iter().map(|d| d * d).collect::<Vec<_>>());
    if sxx <= f64::EPSILON * n * (1.0 + mx * mx) {
        return Err(Error::DegenerateFit);
    }
    let sxy = pairwise_sum(&dx.iter().zip(&dy).map(|(a, b)| a * b).collect::<Vec<_>>());
    let syy = pairwise_sum(&dy.iter().map(|d| d * d).collect::<Vec<_>>());
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { slope, intercept, r2 })
}
