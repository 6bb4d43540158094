//! CSV and JSON output of a `verify` run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::{Arithmetic, Config};
use crate::error::Result;
use crate::files::{write_json, write_text};
use crate::runner::{Failure, Row, RunResult, Tally};

pub const CSV_HEADER: &str = "trial,p,d,depth,Qp,lhs,rhs,ratio,pass";

/// Failures listed in full in the summary; the rest are only counted.
const LISTED_FAILURES: usize = 50;

/// 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header and rows, without the timestamp line.
pub fn csv_body(rows: &[Row]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.p,
            r.d,
            r.depth,
            format_float(r.qp),
            format_float(r.lhs),
            format_float(r.rhs),
            format_float(r.ratio),
            r.pass
        )
        .expect("writing to a string");
    }
    out
}

/// Everything after the first (timestamp) line.
pub fn strip_timestamp(csv: &str) -> &str {
    match csv.split_once('\n') {
        Some((first, rest)) if first.starts_with('#') => rest,
        _ => csv,
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub pass: bool,
    pub seed: u64,
    pub trials: u64,
    pub arithmetic: Arithmetic,
    pub rows: usize,
    pub failed_rows: usize,
    pub suites: BTreeMap<&'static str, Tally>,
    pub fixtures_checked: usize,
    pub failure_count: usize,
    pub failures: Vec<Failure>,
}

impl Summary {
    pub fn new(cfg: &Config, result: &RunResult) -> Self {
        Summary {
            pass: result.passed(),
            seed: cfg.seed,
            trials: cfg.trials,
            arithmetic: cfg.arithmetic,
            rows: result.rows.len(),
            failed_rows: result.rows.iter().filter(|r| !r.pass).count(),
            suites: result.tallies.iter().map(|(s, t)| (s.name(), t.clone())).collect(),
            fixtures_checked: result.fixtures_checked,
            failure_count: result.failures.len(),
            failures: result.failures.iter().take(LISTED_FAILURES).cloned().collect(),
        }
    }
}

pub struct Written {
    pub csv: PathBuf,
    pub summary: PathBuf,
}

/// Writes `trials.csv` and `summary.json` into `dir`.
pub fn write_reports(dir: &Path, cfg: &Config, result: &RunResult) -> Result<Written> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let csv = dir.join("trials.csv");
    write_text(&csv, &format!("# generated unix={stamp}\n{}", csv_body(&result.rows)))?;
    let summary = dir.join("summary.json");
    write_json(&summary, &Summary::new(cfg, result))?;
    Ok(Written { csv, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use martsparse::Exponent;

    #[test]
    fn rows_use_seventeen_digits() {
        let row = Row {
            trial: 3,
            p: Exponent::new(4, 3),
            d: 2,
            depth: 10,
            qp: 1.0,
            lhs: 0.1,
            rhs: 2.5,
            ratio: 0.04,
            pass: true,
        };
        let body = csv_body(&[row]);
        let line = body.lines().nth(1).unwrap();
        assert_eq!(
            line,
            "3,4/3,2,10,1.0000000000000000e0,1.0000000000000001e-1,2.5000000000000000e0,4.0000000000000001e-2,true"
        );
        let with_stamp = format!("# generated unix=1\n{body}");
        assert_eq!(strip_timestamp(&with_stamp), body);
    }
}
