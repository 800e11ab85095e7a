//! Comparison reports and their CSV form.
//!
//! Values are written in scientific notation with ten significant digits.
//! Comment lines start with `#`; the timestamp sits alone on the line
//! beginning with [`TIMESTAMP_PREFIX`] so runs can be compared byte for byte
//! after dropping that one line.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CSV_HEADER: &str = "x,m0,m1,approx,m_contraction,error_bps,approx_se_bps,invariant_pdf";
pub const TIMESTAMP_PREFIX: &str = "# generated-at-unix: ";

/// One reporting grid point. Rates are in decimal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub x: f64,
    pub m0: f64,
    pub m1: f64,
    pub approx: f64,
    pub m_contraction: f64,
    pub error_bps: f64,
    pub approx_se_bps: f64,
    pub invariant_pdf: f64,
}

impl ReportRow {
    fn fields(&self) -> [f64; 8] {
        [
            self.x,
            self.m0,
            self.m1,
            self.approx,
            self.m_contraction,
            self.error_bps,
            self.approx_se_bps,
            self.invariant_pdf,
        ]
    }

    fn from_fields(v: [f64; 8]) -> Self {
        Self {
            x: v[0],
            m0: v[1],
            m1: v[2],
            approx: v[3],
            m_contraction: v[4],
            error_bps: v[5],
            approx_se_bps: v[6],
            invariant_pdf: v[7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Configuration echo, one entry per line.
    pub config_echo: String,
    pub seed: u64,
    pub version: String,
    pub decomposition: String,
    pub contraction_iterations: usize,
    pub contraction_converged: bool,
    pub rows: Vec<ReportRow>,
}

/// Version string in the style of `git describe`.
pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Ten significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.9e}")
}

impl ComparisonReport {
    /// Rows sorted by `x` with nonnegative errors.
    pub fn is_well_formed(&self) -> bool {
        self.rows.windows(2).all(|w| w[0].x < w[1].x) && self.rows.iter().all(|r| r.error_bps >= 0.0)
    }

    pub fn to_csv_string(&self, timestamp: u64) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# current-coupon comparison report");
        let _ = writeln!(s, "# version: {}", self.version);
        let _ = writeln!(s, "# seed: {}", self.seed);
        let _ = writeln!(s, "# decomposition: {}", self.decomposition);
        let _ = writeln!(
            s,
            "# contraction: iterations={} converged={}",
            self.contraction_iterations, self.contraction_converged
        );
        let _ = writeln!(s, "{TIMESTAMP_PREFIX}{timestamp}");
        let _ = writeln!(s, "# config:");
        for line in self.config_echo.lines() {
            let _ = writeln!(s, "{}", format!("#   {line}").trim_end());
        }
        let _ = writeln!(s, "{CSV_HEADER}");
        for row in &self.rows {
            let line: Vec<String> = row.fields().iter().map(|&v| format_value(v)).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    pub fn emit_csv(&self, path: &Path) -> Result<(), CliError> {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        std::fs::write(path, self.to_csv_string(ts)).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// Data rows of an emitted report.
pub fn parse_csv_rows(text: &str) -> Result<Vec<ReportRow>, CliError> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(CliError::Config(format!("unexpected CSV header {other:?}")));
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Config(format!("row {i}: {e}")))?;
            let arr: [f64; 8] = vals
                .try_into()
                .map_err(|v: Vec<f64>| CliError::Config(format!("row {i}: {} fields", v.len())))?;
            Ok(ReportRow::from_fields(arr))
        })
        .collect()
}

/// The CSV with the timestamp line removed.
pub fn mask_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with(TIMESTAMP_PREFIX))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ComparisonReport {
        ComparisonReport {
            config_echo: "a = 1\nb = 2".into(),
            seed: 7,
            version: version_string(),
            decomposition: "zero".into(),
            contraction_iterations: 5,
            contraction_converged: true,
            rows: vec![
                ReportRow {
                    x: 0.01,
                    m0: 0.043456789012345,
                    m1: -0.0031,
                    approx: 0.04,
                    m_contraction: 0.0401,
                    error_bps: 1.0,
                    approx_se_bps: 0.3,
                    invariant_pdf: 3.2,
                },
                ReportRow {
                    x: 0.02,
                    m0: 1.0 / 3.0,
                    m1: 0.0,
                    approx: 1.0 / 3.0,
                    m_contraction: 0.3,
                    error_bps: 333.3,
                    approx_se_bps: 0.0,
                    invariant_pdf: 9.0,
                },
            ],
        }
    }

    #[test]
    fn header_and_digits() {
        let s = sample().to_csv_string(0);
        assert!(s.lines().any(|l| l == CSV_HEADER));
        assert!(s.contains("3.333333333e-1"));
    }

    #[test]
    fn empty_grid_is_header_only() {
        let mut r = sample();
        r.rows.clear();
        let s = r.to_csv_string(0);
        assert_eq!(s.lines().last(), Some(CSV_HEADER));
        assert!(parse_csv_rows(&s).unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample().to_csv_string(12);
        let rows = parse_csv_rows(&s).unwrap();
        for (a, b) in rows.iter().zip(&sample().rows) {
            for (u, v) in a.fields().iter().zip(b.fields()) {
                assert_eq!(*u, format_value(v).parse::<f64>().unwrap());
            }
        }
        let again = ComparisonReport {
            rows,
            ..sample()
        };
        assert_eq!(again.to_csv_string(12), s);
    }

    #[test]
    fn timestamp_mask() {
        let a = sample().to_csv_string(1);
        let b = sample().to_csv_string(2);
        assert_ne!(a, b);
        assert_eq!(mask_timestamp(&a), mask_timestamp(&b));
        assert_eq!(a.lines().count(), mask_timestamp(&a).lines().count() + 1);
    }
}
