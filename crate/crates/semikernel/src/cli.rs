//! The `semikernel` command line.
//!
//! Exit codes: 0 on success, 1 on a numeric error or a failed acceptance
//! threshold, 2 on a usage error.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semikernel_core::classical::{default_steps, flow_from_terminal, solve_bvp_with_steps};
use semikernel_core::kernels::GridSpec;
use semikernel_core::parametrix::{amplitude_from_table, QuadratureSpec, TablePlan, BVP_TOL};
use semikernel_core::potentials::{check_assumption, default_validation_samples, safe_horizon, Builtin};
use semikernel_core::wavepacket::key_estimate_check;

use crate::config::{EpsRule, ExperimentConfig, WindowConfig};
use crate::error::{CliError, Result};
use crate::harness::{amplitude_rate_experiment, build_table, remainder_rate_experiment, with_threads, RateReport};
use crate::io::{emit_report, write_kernel, write_kernel_slice};
use crate::propagator::{numeric_kernel_matrix, resolved_kernel_block};

#[derive(Debug, Parser)]
#[command(name = "semikernel", version, about = "Short-time parametrix for 1-D Schrödinger propagators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the Hessian bound and gradient consistency of a potential.
    Validate {
        #[arg(long, value_parser = parse_potential)]
        potential: Builtin,
    },
    /// Print a classical orbit as CSV `s,x,xi,j`.
    Orbit(OrbitArgs),
    /// Propagate grid deltas and write the kernel matrix.
    Kernel(KernelArgs),
    /// Evaluate E₀ and the amplitude ã₀ as CSV.
    Parametrix(ParametrixArgs),
    /// Sweep the Gaussian moment bounds as CSV.
    Keyest(KeyestArgs),
    /// Run the rate experiments described by a config file.
    Rates(RatesArgs),
}

#[derive(Debug, Args)]
struct OrbitArgs {
    #[arg(long, value_parser = parse_potential)]
    potential: Builtin,
    #[arg(long)]
    t: f64,
    #[arg(long)]
    x: f64,
    /// Initial position; solves the boundary value problem.
    #[arg(long, conflicts_with = "xi", required_unless_present = "xi")]
    y: Option<f64>,
    /// Terminal momentum; integrates backwards from `(x, xi)`.
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[arg(long, value_parser = parse_potential)]
    potential: Builtin,
    #[arg(long)]
    t: f64,
    #[arg(long = "grid-n")]
    grid_n: usize,
    #[arg(long = "grid-l")]
    grid_l: f64,
    #[arg(long)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the column nearest `--slice-y` as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long = "slice-y", default_value_t = 0.0)]
    slice_y: f64,
    /// Start from a band-limited delta on a refined grid instead of `e_j/dx`.
    #[arg(long)]
    resolved: bool,
}

#[derive(Debug, Args)]
struct ParametrixArgs {
    #[arg(long, value_parser = parse_potential)]
    potential: Builtin,
    #[arg(long)]
    t: f64,
    /// A positive number or `sqrt_t`.
    #[arg(long, value_parser = parse_eps, default_value = "sqrt_t")]
    eps: EpsRule,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "window")]
    x: Option<f64>,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "window")]
    y: Option<f64>,
    /// `x0,x1,nx,y0,y1,ny`; replaces `--x`/`--y`.
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true, conflicts_with_all = ["x", "y"])]
    window: Option<WindowConfig>,
    /// `nx,nxi`.
    #[arg(long = "quad-nodes", value_parser = parse_pair)]
    quad_nodes: Option<(usize, usize)>,
}

#[derive(Debug, Args)]
struct KeyestArgs {
    /// Comma-separated moment orders.
    #[arg(long, value_delimiter = ',', default_values_t = [0u32, 1, 2])]
    alpha: Vec<u32>,
    /// Comma-separated times; defaults to 2^-k, k = 1..6.
    #[arg(long, value_delimiter = ',')]
    t: Vec<f64>,
    /// Comma-separated window scales; defaults to 2^-j, j = 0..3.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Both,
    Amplitude,
    Remainder,
}

#[derive(Debug, Args)]
struct RatesArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Which::Both)]
    experiment: Which,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_potential(s: &str) -> std::result::Result<Builtin, String> {
    s.parse().map_err(|e: semikernel_core::Error| e.to_string())
}

fn parse_eps(s: &str) -> std::result::Result<EpsRule, String> {
    if s.eq_ignore_ascii_case("sqrt_t") {
        return Ok(EpsRule::SqrtT);
    }
    match s.parse::<f64>() {
        Ok(e) if e > 0.0 => Ok(EpsRule::Fixed(e)),
        _ => Err(format!("expected a positive number or sqrt_t, got `{s}`")),
    }
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected `a,b`")?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(a)?, p(b)?))
}

fn parse_window(s: &str) -> std::result::Result<WindowConfig, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err("expected x0,x1,nx,y0,y1,ny".into());
    }
    let f = |v: &str| v.parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    let n = |v: &str| v.parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    let w = WindowConfig { x0: f(parts[0])?, x1: f(parts[1])?, nx: n(parts[2])?, y0: f(parts[3])?, y1: f(parts[4])?, ny: n(parts[5])? };
    if w.nx == 0 || w.ny == 0 || w.x1 < w.x0 || w.y1 < w.y0 {
        return Err("window must be nonempty with x0 <= x1 and y0 <= y1".into());
    }
    Ok(w)
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e))
}

/// `Ok(false)` means the command ran but a check failed.
fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<bool> {
    match command {
        Command::Validate { potential } => validate(potential, out),
        Command::Orbit(a) => orbit(a, out).map(|_| true),
        Command::Kernel(a) => kernel(a, out).map(|_| true),
        Command::Parametrix(a) => parametrix(a, out).map(|_| true),
        Command::Keyest(a) => keyest(a, out).map(|_| true),
        Command::Rates(a) => rates(a, out, err),
    }
}

fn validate(potential: Builtin, out: &mut dyn Write) -> Result<bool> {
    let (ts, xs) = default_validation_samples();
    let r = check_assumption(&potential, &ts, &xs)?;
    let text = format!(
        "potential        {}\nsamples          {}\nhess_bound       {}\nmax_abs_hess     {} at (t, x) = ({}, {})\n\
         max_grad_error   {:.3e}\nsafe_horizon     {}\ngrowth           {}\nconsistency      {}\nfinite           {}\nresult           {}\n",
        r.potential,
        r.samples,
        r.hess_bound,
        r.max_abs_hess,
        r.argmax_hess.0,
        r.argmax_hess.1,
        r.max_grad_error,
        safe_horizon(&potential),
        ok(r.growth_ok),
        ok(r.consistency_ok),
        ok(r.finite),
        ok(r.pass()),
    );
    write_out(out, &text)?;
    Ok(r.pass())
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn orbit(a: OrbitArgs, out: &mut dyn Write) -> Result<()> {
    let steps = a.steps.unwrap_or_else(|| default_steps(a.t));
    let orbit = match (a.y, a.xi) {
        (Some(y), _) => solve_bvp_with_steps(&a.potential, a.t, a.x, y, BVP_TOL, steps)?.orbit,
        (None, Some(xi)) => flow_from_terminal(&a.potential, a.t, a.x, xi, steps)?,
        (None, None) => return Err(CliError::Usage("orbit needs --y or --xi".into())),
    };
    let mut text = String::from("s,x,xi,j\n");
    for ((s, p), j) in orbit.t_grid.iter().zip(&orbit.states).zip(&orbit.jac) {
        text.push_str(&format!("{s},{},{},{j}\n", p.x, p.xi));
    }
    write_out(out, &text)
}

fn kernel(a: KernelArgs, out: &mut dyn Write) -> Result<()> {
    let grid = GridSpec::new(a.grid_l, a.grid_n).map_err(|e| CliError::Usage(e.to_string()))?;
    let k = with_threads(None, || {
        if a.resolved {
            let all: Vec<usize> = (0..grid.n_points).collect();
            resolved_kernel_block(&a.potential, a.t, grid, &all, &all, a.steps).map(|entries| {
                semikernel_core::kernels::KernelMatrix { grid, t: a.t, entries }
            })
        } else {
            numeric_kernel_matrix(&a.potential, a.t, grid, a.steps)
        }
    })??;
    write_kernel(&a.out, &k)?;
    if let Some(csv) = &a.csv {
        write_kernel_slice(csv, &k, a.slice_y)?;
    }
    write_out(out, &format!("wrote {} ({}x{})\n", a.out.display(), grid.n_points, grid.n_points))
}

fn parametrix(a: ParametrixArgs, out: &mut dyn Write) -> Result<()> {
    let eps = a.eps.eps(a.t);
    let mut spec = QuadratureSpec::default();
    if let Some((nx, nxi)) = a.quad_nodes {
        spec.nodes_x = nx;
        spec.nodes_xi = nxi;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let window = match a.window {
        Some(w) => w,
        None => {
            let (x, y) = (a.x.unwrap_or(0.0), a.y.unwrap_or(0.0));
            WindowConfig { x0: x, x1: x, nx: 1, y0: y, y1: y, ny: 1 }
        }
    };
    let p = &a.potential;
    let samples = with_threads(None, || -> semikernel_core::Result<_> {
        use rayon::prelude::*;
        let plan = TablePlan::new(p, a.t, eps, spec, (window.x0, window.x1), (window.y0, window.y1))?;
        let table = build_table(p, plan)?;
        let pts: Vec<(f64, f64)> = window.xs().into_iter().flat_map(|x| window.ys().into_iter().map(move |y| (x, y))).collect();
        pts.par_iter().map(|&(x, y)| amplitude_from_table(p, &table, x, y)).collect::<semikernel_core::Result<Vec<_>>>()
    })??;
    let mut text = String::from("t,x,y,eps,re_e0,im_e0,s_action,re_a0,im_a0,abs_a0_minus_1\n");
    for s in samples {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.t,
            s.x,
            s.y,
            s.eps,
            s.e0.re,
            s.e0.im,
            s.s_action,
            s.a0.re,
            s.a0.im,
            (s.a0 - 1.0).norm()
        ));
    }
    write_out(out, &text)
}

fn keyest(a: KeyestArgs, out: &mut dyn Write) -> Result<()> {
    let ts = if a.t.is_empty() { (1..=6).map(|k| 0.5f64.powi(k)).collect() } else { a.t };
    let es = if a.eps.is_empty() { (0..=3).map(|j| 0.5f64.powi(j)).collect() } else { a.eps };
    let mut text = String::from("alpha,t,eps,lhs_l1,rhs_l1,ratio_l1,lhs_l2,rhs_l2,ratio_l2\n");
    for &alpha in &a.alpha {
        for &t in &ts {
            for &eps in &es {
                let k = key_estimate_check(alpha, t, eps).map_err(|e| CliError::Usage(e.to_string()))?;
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    k.alpha, k.t, k.eps, k.lhs_l1, k.rhs_l1, k.ratio_l1, k.lhs_l2, k.rhs_l2, k.ratio_l2
                ));
            }
        }
    }
    write_out(out, &text)
}

fn rates(a: RatesArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<bool> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(dir) = a.out_dir {
        config.out_dir = dir;
    }
    let mut reports: Vec<RateReport> = Vec::new();
    if a.experiment != Which::Remainder {
        reports.push(with_threads(None, || amplitude_rate_experiment(&config))??);
    }
    if a.experiment != Which::Amplitude {
        reports.push(with_threads(None, || remainder_rate_experiment(&config))??);
    }
    let mut pass = true;
    for report in &reports {
        for row in report.rows.iter().filter(|r| r.error.is_some()) {
            let _ = writeln!(err, "{}: t = {} failed: {}", report.name, row.t, row.error.as_deref().unwrap_or(""));
        }
        let (csv, json) = emit_report(report, &config.out_dir)?;
        write_out(out, &format!("{}\n  {}\n  {}\n", report.summary(), csv.display(), json.display()))?;
        pass &= report.pass;
    }
    Ok(pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("semikernel").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
        assert_eq!(run_capture(&[]).0, 2);
        assert_eq!(run_capture(&["validate", "--potential", "quartic"]).0, 2);
        assert_eq!(run_capture(&["orbit", "--potential", "free", "--t", "0.1", "--x", "0"]).0, 2);
        assert_eq!(run_capture(&["parametrix", "--potential", "free", "--t", "0.1", "--eps", "-1", "--x", "0", "--y", "0"]).0, 2);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("parametrix"));
    }

    #[test]
    fn horizon_violation_is_a_numeric_error() {
        let (code, _, err) = run_capture(&["orbit", "--potential", "harmonic", "--t", "4", "--x", "0", "--y", "0"]);
        assert_eq!(code, 1);
        assert!(err.contains("horizon"), "{err}");
    }

    #[test]
    fn window_and_pair_parsers() {
        let w = parse_window("-1,1,5,-2,2,3").unwrap();
        assert_eq!((w.nx, w.ny, w.y0), (5, 3, -2.0));
        assert!(parse_window("1,0,2,0,1,2").is_err());
        assert_eq!(parse_pair("64, 96").unwrap(), (64, 96));
        assert_eq!(parse_eps("SQRT_T").unwrap(), EpsRule::SqrtT);
    }
}
