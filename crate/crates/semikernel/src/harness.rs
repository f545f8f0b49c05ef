//! Rate experiments: amplitude deviation `max |ã₀ − 1|` and the remainder
//! operator norm, each over a ladder of times, with log-log fits.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use semikernel_core::kernels::op_norm;
use semikernel_core::parametrix::{
    amplitude_from_table, FilteredBlockPlan, OrbitTable, SpectralFilter, TablePlan,
};
use semikernel_core::potentials::{Builtin, PotentialModel};
use semikernel_core::rates::{fit_rate, RateFit};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::propagator::filtered_propagator_block;

/// Amplitude errors at or below this are treated as exact.
pub const AMPLITUDE_EXACT: f64 = 1e-6;
/// Remainder norms at or below this are treated as exact.
pub const REMAINDER_EXACT: f64 = 1e-4;
pub const AMPLITUDE_MIN_SLOPE: f64 = 0.9;
pub const REMAINDER_MIN_SLOPE: f64 = 1.8;

const REMAINDER_NOTE: &str = "err is the operator norm of the difference between the split-step propagator and the \
parametrix, both compressed by a smooth spectral filter and restricted to the central block; a restriction of an \
operator has norm at most that of the operator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Amplitude,
    Remainder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub t: f64,
    pub eps: f64,
    /// `None` when this `t` failed; see `error`.
    pub err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitSummary {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl From<RateFit> for FitSummary {
    fn from(f: RateFit) -> Self {
        Self { slope: f.slope, intercept: f.intercept, r2: f.r2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub name: String,
    pub kind: ExperimentKind,
    pub potential: String,
    pub rows: Vec<RateRow>,
    /// Every row at or below the exactness threshold; no fit is attempted.
    pub exact: bool,
    pub fit: Option<FitSummary>,
    /// Slope the experiment is expected to reach.
    pub min_slope: f64,
    pub pass: bool,
    pub notes: Vec<String>,
    pub config: ExperimentConfig,
    pub version: String,
}

impl RateReport {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.rows.iter().filter_map(|r| r.err.map(|e| (r.t, e))).collect()
    }

    pub fn summary(&self) -> String {
        let status = if self.pass { "pass" } else { "FAIL" };
        match (self.exact, self.fit) {
            (true, _) => format!("{}: exact (all err below threshold) [{status}]", self.name),
            (false, Some(f)) => format!(
                "{}: slope {:.3} (need >= {}), r2 {:.4}, C {:.3e} [{status}]",
                self.name,
                f.slope,
                self.min_slope,
                f.r2,
                f.intercept.exp()
            ),
            (false, None) => format!("{}: no fit [{status}]", self.name),
        }
    }
}

fn finish(
    kind: ExperimentKind,
    config: &ExperimentConfig,
    rows: Vec<RateRow>,
    exact_threshold: f64,
    min_slope: f64,
    mut notes: Vec<String>,
) -> RateReport {
    let suffix = match kind {
        ExperimentKind::Amplitude => "amplitude",
        ExperimentKind::Remainder => "remainder",
    };
    let name = format!("{}_{suffix}", config.potential.replace([':', '='], "_"));
    let points: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.err.map(|e| (r.t, e))).collect();
    let complete = points.len() == rows.len() && !rows.is_empty();
    let exact = complete && points.iter().all(|&(_, e)| e <= exact_threshold);
    let mut fit = None;
    if !exact {
        match fit_rate(&points) {
            Ok(f) => fit = Some(FitSummary::from(f)),
            Err(e) => notes.push(format!("fit failed: {e}")),
        }
    }
    let pass = complete && (exact || fit.is_some_and(|f| f.slope >= min_slope));
    RateReport {
        name,
        kind,
        potential: config.potential.clone(),
        rows,
        exact,
        fit,
        min_slope,
        pass,
        notes,
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn failed_row(t: f64, eps: f64, e: impl ToString) -> RateRow {
    RateRow { t, eps, err: None, error: Some(e.to_string()), detail: BTreeMap::new() }
}

/// Builds an orbit table with rows computed in parallel.
pub fn build_table(potential: &dyn PotentialModel, plan: TablePlan) -> semikernel_core::Result<OrbitTable> {
    let rows = (0..plan.row_count())
        .into_par_iter()
        .map(|r| plan.build_row(potential, r))
        .collect::<semikernel_core::Result<Vec<_>>>()?;
    OrbitTable::from_rows(plan, rows)
}

fn amplitude_row(potential: &Builtin, config: &ExperimentConfig, t: f64) -> semikernel_core::Result<RateRow> {
    let eps = config.eps_rule.eps(t);
    let w = config.window;
    let plan = TablePlan::new(potential, t, eps, config.quad.spec(), (w.x0, w.x1), (w.y0, w.y1))?;
    let table = build_table(potential, plan)?;
    let points: Vec<(f64, f64)> = w.xs().into_iter().flat_map(|x| w.ys().into_iter().map(move |y| (x, y))).collect();
    let samples = points
        .par_iter()
        .map(|&(x, y)| amplitude_from_table(potential, &table, x, y))
        .collect::<semikernel_core::Result<Vec<_>>>()?;
    let worst = samples
        .iter()
        .max_by(|a, b| (a.a0 - 1.0).norm().total_cmp(&(b.a0 - 1.0).norm()))
        .expect("window is nonempty");
    let mut detail = BTreeMap::new();
    detail.insert("argmax_x".into(), worst.x);
    detail.insert("argmax_y".into(), worst.y);
    detail.insert("quad_nodes".into(), table.node_count() as f64);
    Ok(RateRow { t, eps, err: Some((worst.a0 - 1.0).norm()), error: None, detail })
}

/// `err(t) = max |ã₀(t, x, y; ε) − 1|` over the configured window.
pub fn amplitude_rate_experiment(config: &ExperimentConfig) -> Result<RateReport> {
    config.validate()?;
    let potential = config.builtin()?;
    let rows = config
        .t_values
        .par_iter()
        .map(|&t| amplitude_row(&potential, config, t).unwrap_or_else(|e| failed_row(t, config.eps_rule.eps(t), e)))
        .collect();
    Ok(finish(ExperimentKind::Amplitude, config, rows, AMPLITUDE_EXACT, AMPLITUDE_MIN_SLOPE, Vec::new()))
}

fn remainder_row(potential: &Builtin, config: &ExperimentConfig, t: f64) -> semikernel_core::Result<RateRow> {
    let eps = config.eps_rule.eps(t);
    let grid = config.grid_spec().map_err(|e| semikernel_core::Error::InvalidArgument(e.to_string()))?;
    let block = grid.central(config.block_radius);
    let filter = SpectralFilter::default();
    let plan = FilteredBlockPlan::new(potential, t, eps, grid, block.clone(), filter, config.quad.spec())?;
    let partials = (0..plan.chunk_count())
        .into_par_iter()
        .map(|c| plan.accumulate_chunk(potential, c))
        .collect::<semikernel_core::Result<Vec<_>>>()?;
    let parametrix = plan.assemble(&partials)?;
    let numeric = filtered_propagator_block(potential, t, grid, &block, filter, config.steps)?;
    let diff = numeric.sub(&parametrix)?;
    let mut detail = BTreeMap::new();
    detail.insert("norm_numeric".into(), op_norm(&numeric, 1.0));
    detail.insert("norm_parametrix".into(), op_norm(&parametrix, 1.0));
    detail.insert("band_modes".into(), plan.band() as f64);
    detail.insert("block_size".into(), block.len() as f64);
    Ok(RateRow { t, eps, err: Some(op_norm(&diff, 1.0)), error: None, detail })
}

/// `err(t)` = operator norm of the filtered remainder on the central block.
pub fn remainder_rate_experiment(config: &ExperimentConfig) -> Result<RateReport> {
    config.validate()?;
    let potential = config.builtin()?;
    let rows = config
        .remainder_ts()
        .par_iter()
        .map(|&t| remainder_row(&potential, config, t).unwrap_or_else(|e| failed_row(t, config.eps_rule.eps(t), e)))
        .collect();
    let notes = vec![REMAINDER_NOTE.to_string()];
    Ok(finish(ExperimentKind::Remainder, config, rows, REMAINDER_EXACT, REMAINDER_MIN_SLOPE, notes))
}

/// Runs `f` on a pool sized by `threads`, else by `SEMIKERNEL_THREADS`, else
/// by rayon's default.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let n = threads.or_else(|| std::env::var("SEMIKERNEL_THREADS").ok().and_then(|v| v.trim().parse().ok()));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = n.filter(|&n| n > 0) {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
