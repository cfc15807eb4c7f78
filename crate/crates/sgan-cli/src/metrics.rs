//! The metrics table: one CSV row per evaluation run, with a fixed header,
//! plus the aggregation used by `report` (per-learner means and an Overall
//! row that is the unweighted mean over runs).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_HEADER: &str = "domain,representation,size,dynamics,learner,l1,validity,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub domain: String,
    pub representation: String,
    pub size: usize,
    pub dynamics: String,
    pub learner: String,
    pub l1: f64,
    pub validity: f64,
    pub seed: u64,
}

impl MetricsRow {
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{}",
            self.domain,
            self.representation,
            self.size,
            self.dynamics,
            self.learner,
            self.l1,
            self.validity,
            self.seed
        )
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_line());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("metrics {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => {
            return Err(CliError::Integrity(format!(
                "metrics {}: header {:?} does not match {METRICS_HEADER:?}",
                path.display(),
                other.unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(CliError::Integrity(format!(
                "metrics {}: line {} has {} fields, expected 8",
                path.display(),
                i + 2,
                f.len()
            )));
        }
        let bad = |what: &str| {
            CliError::Integrity(format!("metrics {}: line {}: bad {what}", path.display(), i + 2))
        };
        rows.push(MetricsRow {
            domain: f[0].to_string(),
            representation: f[1].to_string(),
            size: f[2].parse().map_err(|_| bad("size"))?,
            dynamics: f[3].to_string(),
            learner: f[4].to_string(),
            l1: f[5].parse().map_err(|_| bad("l1"))?,
            validity: f[6].parse().map_err(|_| bad("validity"))?,
            seed: f[7].parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(rows)
}

/// Renders the aggregate report: every row, per-learner means, and the
/// Overall line (unweighted mean across all rows).
pub fn render_report(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<28} {:<10} {:>8} {:>9} {:>6}", "run", "learner", "l1", "validity", "seed");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<28} {:<10} {:>8.3} {:>9.3} {:>6}",
            format!("{}/{}/n={}", r.domain, r.representation, r.size),
            r.learner,
            r.l1,
            r.validity,
            r.seed
        );
    }
    let mut learners: Vec<String> = Vec::new();
    for r in rows {
        if !learners.contains(&r.learner) {
            learners.push(r.learner.clone());
        }
    }
    if !rows.is_empty() {
        let _ = writeln!(out);
        for learner in &learners {
            let group: Vec<&MetricsRow> = rows.iter().filter(|r| &r.learner == learner).collect();
            let n = group.len() as f64;
            let l1 = group.iter().map(|r| r.l1).sum::<f64>() / n;
            let validity = group.iter().map(|r| r.validity).sum::<f64>() / n;
            let _ = writeln!(
                out,
                "{:<28} {:<10} {:>8.3} {:>9.3} {:>6}",
                format!("mean over {} runs", group.len()),
                learner,
                l1,
                validity,
                "-"
            );
        }
        let n = rows.len() as f64;
        let l1 = rows.iter().map(|r| r.l1).sum::<f64>() / n;
        let validity = rows.iter().map(|r| r.validity).sum::<f64>() / n;
        let _ = writeln!(
            out,
            "{:<28} {:<10} {:>8.3} {:>9.3} {:>6}",
            "Overall",
            format!("{} kinds", learners.len()),
            l1,
            validity,
            "-"
        );
    }
    out
}
