//! On-disk formats: the binary kernel file, CSV slices and rate reports.
//!
//! Kernel files are little-endian: the magic `SKRN`, a `u32` format version,
//! `N: u64`, `L: f64`, `t: f64`, then `N²` entries as `(re, im)` `f64` pairs
//! in row-major order.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use semikernel_core::kernels::{DenseMatrix, GridSpec, KernelMatrix};

use crate::error::{CliError, Result};
use crate::harness::RateReport;

const MAGIC: &[u8; 4] = b"SKRN";
const VERSION: u32 = 1;

pub fn write_kernel(path: &Path, k: &KernelMatrix) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| CliError::io(path, e));
    put(MAGIC)?;
    put(&VERSION.to_le_bytes())?;
    put(&(k.grid.n_points as u64).to_le_bytes())?;
    put(&k.grid.half_len.to_le_bytes())?;
    put(&k.t.to_le_bytes())?;
    for v in &k.entries.data {
        put(&v.re.to_le_bytes())?;
        put(&v.im.to_le_bytes())?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_kernel(path: &Path) -> Result<KernelMatrix> {
    let mut bytes = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| CliError::io(path, e))?;
    let bad = |reason: &str| CliError::Format { path: path.to_path_buf(), reason: reason.to_string() };
    if bytes.len() < 32 || &bytes[..4] != MAGIC {
        return Err(bad("missing header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(bad("unsupported version"));
    }
    let n = u64_at(8) as usize;
    let grid = GridSpec::new(f64_at(16), n).map_err(|e| bad(&e.to_string()))?;
    let t = f64_at(24);
    let body = &bytes[32..];
    if body.len() != n * n * 16 {
        return Err(bad("payload length does not match N"));
    }
    let data = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok(KernelMatrix { grid, t, entries: DenseMatrix { rows: n, cols: n, data } })
}

/// Column of `k` nearest to `y`, as CSV `x,re,im,abs`.
pub fn write_kernel_slice(path: &Path, k: &KernelMatrix, y: f64) -> Result<()> {
    let j = (0..k.grid.n_points)
        .min_by(|&a, &b| (k.grid.point(a) - y).abs().total_cmp(&(k.grid.point(b) - y).abs()))
        .unwrap_or(0);
    let mut out = String::from("x,re,im,abs\n");
    for i in 0..k.grid.n_points {
        let v = k.entries.get(i, j);
        out.push_str(&format!("{},{},{},{}\n", k.grid.point(i), v.re, v.im, v.norm()));
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// Writes `<dir>/<name>.csv` (columns `t,err`) and `<dir>/<name>.json`.
/// Rows without an error value are left out of the CSV but kept in the JSON.
pub fn emit_report(report: &RateReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if report.rows.is_empty() {
        return Err(CliError::Numeric(semikernel_core::Error::DegenerateFit));
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let csv_path = dir.join(format!("{}.csv", report.name));
    let json_path = dir.join(format!("{}.json", report.name));
    fs::write(&csv_path, report_csv(report)).map_err(|e| CliError::io(&csv_path, e))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| CliError::Json { path: json_path.clone(), source: e })?;
    fs::write(&json_path, json + "\n").map_err(|e| CliError::io(&json_path, e))?;
    Ok((csv_path, json_path))
}

pub fn report_csv(report: &RateReport) -> String {
    let mut out = String::from("t,err\n");
    for row in &report.rows {
        if let Some(err) = row.err {
            out.push_str(&format!("{},{}\n", row.t, err));
        }
    }
    out
}

/// Parses a `t,err` CSV as written by [`emit_report`].
pub fn read_report_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |reason: String| CliError::Format { path: path.to_path_buf(), reason };
    let mut lines = text.lines();
    if lines.next() != Some("t,err") {
        return Err(bad("missing t,err header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (a, b) = l.split_once(',').ok_or_else(|| bad(format!("bad row `{l}`")))?;
            let parse = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("bad number `{s}`: {e}")));
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}
