//! Plain-text reports: aligned tables for the console and tab-separated
//! files for tooling. All percentages print with two decimals so outputs
//! diff cleanly.

use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::evalkit::SweepPoint;

pub fn pct(v: f64) -> String {
    format!("{v:.2}")
}

/// Space-aligned table with a header row.
pub fn format_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.len());
            }
        }
    }
    let mut out = String::new();
    let fmt_row = |cells: &[String], widths: &[usize], out: &mut String| {
        let mut first = true;
        for (cell, w) in cells.iter().zip(widths) {
            if !first {
                out.push_str("  ");
            }
            out.push_str(&format!("{cell:<w$}"));
            first = false;
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    };
    let header_cells: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    fmt_row(&header_cells, &widths, &mut out);
    for row in rows {
        fmt_row(row, &widths, &mut out);
    }
    out
}

/// One S/U/HM summary row of a metric report.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub metric: String,
    pub direction: String,
    pub s: f64,
    pub u: f64,
    pub hm: f64,
}

pub fn metric_report_tsv(rows: &[MetricRow]) -> String {
    let mut out = String::from("metric\tdirection\tS\tU\tHM\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.metric,
            r.direction,
            pct(r.s),
            pct(r.u),
            pct(r.hm)
        ));
    }
    out
}

pub fn sweep_tsv(points: &[SweepPoint]) -> String {
    let mut out = String::from("beta\tS\tU\tHM\n");
    for p in points {
        out.push_str(&format!(
            "{:.6}\t{}\t{}\t{}\n",
            p.beta,
            pct(p.s),
            pct(p.u),
            pct(p.hm)
        ));
    }
    out
}

pub fn write_report(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, contents)?;
    Ok(())
}
