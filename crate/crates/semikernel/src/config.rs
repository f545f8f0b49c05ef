//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use semikernel_core::kernels::GridSpec;
use semikernel_core::parametrix::QuadratureSpec;
use semikernel_core::potentials::{safe_horizon, Builtin};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub x0: f64,
    pub x1: f64,
    pub nx: usize,
    pub y0: f64,
    pub y1: f64,
    pub ny: usize,
}

impl WindowConfig {
    pub fn xs(&self) -> Vec<f64> {
        axis(self.x0, self.x1, self.nx)
    }

    pub fn ys(&self) -> Vec<f64> {
        axis(self.y0, self.y1, self.ny)
    }
}

fn axis(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: usize,
    pub l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub nodes_x: usize,
    pub nodes_xi: usize,
    pub trunc_sigma: f64,
}

impl QuadConfig {
    pub fn spec(&self) -> QuadratureSpec {
        QuadratureSpec {
            nodes_x: self.nodes_x,
            nodes_xi: self.nodes_xi,
            trunc_sigma: self.trunc_sigma,
            ..QuadratureSpec::default()
        }
    }
}

impl Default for QuadConfig {
    fn default() -> Self {
        let d = QuadratureSpec::default();
        Self { nodes_x: d.nodes_x, nodes_xi: d.nodes_xi, trunc_sigma: d.trunc_sigma }
    }
}

/// Window scale as a function of `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsRule {
    SqrtT,
    Fixed(f64),
}

impl EpsRule {
    pub fn eps(&self, t: f64) -> f64 {
        match *self {
            EpsRule::SqrtT => t.sqrt(),
            EpsRule::Fixed(e) => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: String,
    pub t_values: Vec<f64>,
    /// t ladder for the remainder experiment; defaults to `t_values`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remainder_t_values: Option<Vec<f64>>,
    pub window: WindowConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub quad: QuadConfig,
    pub eps_rule: EpsRule,
    /// Split-step steps per propagation.
    pub steps: usize,
    /// Half-width of the central block used for the remainder norm.
    #[serde(default = "default_block_radius")]
    pub block_radius: f64,
    pub out_dir: PathBuf,
}

fn default_block_radius() -> f64 {
    4.0
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; a relative `out_dir` is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if cfg.out_dir.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.out_dir = dir.join(&cfg.out_dir);
            }
        }
        Ok(cfg)
    }

    pub fn builtin(&self) -> Result<Builtin> {
        self.potential.parse::<Builtin>().map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.l, self.grid.n).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn remainder_ts(&self) -> &[f64] {
        self.remainder_t_values.as_deref().unwrap_or(&self.t_values)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        let potential = self.builtin()?;
        let horizon = safe_horizon(&potential);
        for ts in [Some(&self.t_values), self.remainder_t_values.as_ref()].into_iter().flatten() {
            check_ladder(ts, horizon)?;
        }
        if self.window.nx == 0 || self.window.ny == 0 || self.window.x1 < self.window.x0 || self.window.y1 < self.window.y0 {
            return usage("window must be nonempty with x0 <= x1 and y0 <= y1");
        }
        self.grid_spec()?;
        if self.grid.n > 512 {
            return usage("grid.n above 512 is not supported for dense kernel blocks");
        }
        self.quad.spec().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if let EpsRule::Fixed(e) = self.eps_rule {
            if !(e > 0.0) {
                return usage("fixed eps must be positive");
            }
        }
        if self.steps == 0 {
            return usage("steps must be positive");
        }
        if !(self.block_radius > 0.0) || self.block_radius >= self.grid.l {
            return usage("block_radius must lie inside the grid");
        }
        Ok(())
    }
}

fn check_ladder(ts: &[f64], horizon: f64) -> Result<()> {
    let usage = |m: String| Err(CliError::Usage(m));
    if ts.len() < 4 {
        return usage("t ladders need at least 4 values".into());
    }
    if ts.iter().any(|&t| !(t > 0.0) || t >= horizon) {
        return usage(format!("every t must lie in (0, {horizon})"));
    }
    let ratio = ts[1] / ts[0];
    if !(ratio < 1.0) {
        return usage("t values must be decreasing".into());
    }
    for w in ts.windows(2) {
        if ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-9 {
            return usage("t values must form a geometric sequence".into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "potential": "harmonic",
        "t_values": [0.32, 0.16, 0.08, 0.04, 0.02],
        "window": {"x0": -1, "x1": 1, "nx": 5, "y0": -1, "y1": 1, "ny": 5},
        "grid": {"n": 256, "l": 16},
        "quad": {"nodes_x": 64, "nodes_xi": 64, "trunc_sigma": 10},
        "eps_rule": "sqrt_t",
        "steps": 2048,
        "out_dir": "out"
    }"#;

    #[test]
    fn parses_the_documented_shape() {
        let c = ExperimentConfig::from_json(SAMPLE).unwrap();
        assert_eq!(c.eps_rule, EpsRule::SqrtT);
        assert_eq!(c.window.xs(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(c.remainder_ts(), &c.t_values[..]);
        assert_eq!(c.block_radius, 4.0);
        let fixed = SAMPLE.replace("\"sqrt_t\"", "{\"fixed\": 0.3}");
        assert_eq!(ExperimentConfig::from_json(&fixed).unwrap().eps_rule, EpsRule::Fixed(0.3));
    }

    #[test]
    fn rejects_bad_ladders_and_names() {
        for (from, to) in [
            ("[0.32, 0.16, 0.08, 0.04, 0.02]", "[0.32, 0.16, 0.08]"),
            ("[0.32, 0.16, 0.08, 0.04, 0.02]", "[0.02, 0.04, 0.08, 0.16]"),
            ("[0.32, 0.16, 0.08, 0.04, 0.02]", "[0.32, 0.16, 0.1, 0.04]"),
            ("[0.32, 0.16, 0.08, 0.04, 0.02]", "[4.0, 2.0, 1.0, 0.5]"),
            ("\"harmonic\"", "\"quartic\""),
            ("\"n\": 256", "\"n\": 200"),
        ] {
            let text = SAMPLE.replace(from, to);
            assert!(matches!(ExperimentConfig::from_json(&text), Err(CliError::Usage(_))), "{to}");
        }
    }
}
