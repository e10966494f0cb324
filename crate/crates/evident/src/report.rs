//! Report JSON and curve CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use evident_core::metrics::CurveSeries;

use crate::error::{EvidentError, Result};
use crate::pipeline::CurveSet;

pub const CSV_HEADER: &str = "x,y_unc,y_oracle";

/// Shortest representation that round-trips, padded to at least nine
/// significant digits.
fn fmt_value(v: f64) -> String {
    format!("{v:.9e}")
}

pub fn curve_csv(c: &CurveSeries) -> String {
    let mut s = String::with_capacity(64 * (c.x.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for i in 0..c.x.len() {
        let _ = writeln!(
            s,
            "{},{},{}",
            fmt_value(c.x[i]),
            fmt_value(c.y_unc[i]),
            fmt_value(c.y_oracle[i])
        );
    }
    s
}

pub fn parse_curve_csv(text: &str) -> std::result::Result<CurveSeries, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(format!("expected header '{CSV_HEADER}'"));
    }
    let mut c = CurveSeries {
        x: vec![],
        y_unc: vec![],
        y_oracle: vec![],
    };
    for (n, line) in lines.enumerate() {
        let f: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("row {}: {e}", n + 1))?;
        if f.len() != 3 {
            return Err(format!("row {}: expected 3 fields", n + 1));
        }
        c.x.push(f[0]);
        c.y_unc.push(f[1]);
        c.y_oracle.push(f[2]);
    }
    Ok(c)
}

/// The four files written for `prefix`, in a fixed order.
pub fn curve_paths(prefix: &Path) -> [PathBuf; 4] {
    let p = prefix.as_os_str().to_string_lossy();
    [
        "risk_coverage_perimg",
        "risk_coverage_pooled",
        "sparsification_perimg",
        "sparsification_pooled",
    ]
    .map(|s| PathBuf::from(format!("{p}_{s}.csv")))
}

pub fn write_curves(prefix: &Path, curves: &CurveSet) -> Result<Vec<PathBuf>> {
    let paths = curve_paths(prefix);
    let series = [
        &curves.risk_coverage_perimg,
        &curves.risk_coverage_pooled,
        &curves.sparsification_perimg,
        &curves.sparsification_pooled,
    ];
    for (p, c) in paths.iter().zip(series) {
        write_text(p, &curve_csv(c))?;
    }
    Ok(paths.to_vec())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| EvidentError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| EvidentError::io(path, e))
}

/// `<dir>/<stem>_config.json` next to an output file.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}_{suffix}"))
}
