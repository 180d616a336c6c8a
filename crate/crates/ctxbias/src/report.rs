//! Report files: one JSON per cell, a summary, a method-by-length table and
//! an RTF CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::Serialize;

use crate::sweep::{CellReport, Method};

pub const SUMMARY_FILE: &str = "summary.json";
pub const TABLE_FILE: &str = "table.txt";
pub const RTF_FILE: &str = "rtf.csv";
pub const CELLS_DIR: &str = "cells";

/// Seed-averaged metrics of one (method, list length) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub method: Method,
    pub list_len: usize,
    pub runs: usize,
    pub cer: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub retention: f64,
    pub rtf: f64,
    pub decode_seconds: f64,
    pub mean_m_pur: f64,
}

pub fn aggregate(reports: &[CellReport]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(usize, usize), Vec<&CellReport>> = BTreeMap::new();
    let mut order: Vec<Method> = Vec::new();
    for r in reports {
        if !order.contains(&r.method) {
            order.push(r.method);
        }
        let pos = order.iter().position(|&m| m == r.method).expect("just inserted");
        groups.entry((pos, r.list_len)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((pos, list_len), rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&CellReport) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            Aggregate {
                method: order[pos],
                list_len,
                runs: rs.len(),
                cer: mean(&|r| r.metrics.cer),
                precision: mean(&|r| r.metrics.precision),
                recall: mean(&|r| r.metrics.recall),
                f1: mean(&|r| r.metrics.f1),
                retention: mean(&|r| r.metrics.retention),
                rtf: mean(&|r| r.metrics.rtf),
                decode_seconds: mean(&|r| r.metrics.decode_seconds),
                mean_m_pur: mean(&|r| r.mean_m_pur),
            }
        })
        .collect()
}

/// Rows are methods, columns list lengths; cells read
/// `CER // R|P|F1` in percent.
pub fn render_table(reports: &[CellReport]) -> String {
    let aggs = aggregate(reports);
    let mut lengths: Vec<usize> = aggs.iter().map(|a| a.list_len).collect();
    lengths.sort_unstable();
    lengths.dedup();
    let mut methods: Vec<Method> = Vec::new();
    for a in &aggs {
        if !methods.contains(&a.method) {
            methods.push(a.method);
        }
    }
    let cell = |m: Method, len: usize| {
        aggs.iter()
            .find(|a| a.method == m && a.list_len == len)
            .map(|a| {
                format!(
                    "{:.2} // {:.2}|{:.2}|{:.2}",
                    100.0 * a.cer,
                    100.0 * a.recall,
                    100.0 * a.precision,
                    100.0 * a.f1
                )
            })
            .unwrap_or_else(|| "-".to_string())
    };
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("method".to_string())
        .chain(lengths.iter().map(|l| format!("M={l}")))
        .collect()];
    for &m in &methods {
        rows.push(
            std::iter::once(m.to_string())
                .chain(lengths.iter().map(|&l| cell(m, l)))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::from("# CER // R|P|F1 (%), mean over runs\n");
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s:<w$}"))
            .collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
    }
    out
}

pub fn render_rtf_csv(reports: &[CellReport]) -> String {
    let mut out = String::from("method,list_len,rtf,decode_seconds,mean_m_pur\n");
    for a in aggregate(reports) {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.3}",
            a.method, a.list_len, a.rtf, a.decode_seconds, a.mean_m_pur
        );
    }
    out
}

/// Reports with wall-clock fields zeroed, for reproducibility checks.
pub fn without_timing(reports: &[CellReport]) -> Vec<CellReport> {
    reports
        .iter()
        .cloned()
        .map(|mut r| {
            r.metrics.decode_seconds = 0.0;
            r.metrics.rtf = 0.0;
            r
        })
        .collect()
}

pub fn cell_file_name(r: &CellReport) -> String {
    format!("{}-M{}-s{}.json", r.method, r.list_len, r.seed)
}

/// Writes all report files under `dir` and returns their paths.
pub fn emit_report(dir: &Path, reports: &[CellReport]) -> Result<Vec<PathBuf>> {
    ensure!(!reports.is_empty(), "no reports to write");
    let cells = dir.join(CELLS_DIR);
    fs::create_dir_all(&cells).with_context(|| format!("creating {}", cells.display()))?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, text: String| -> Result<()> {
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(())
    };
    for r in reports {
        put(cells.join(cell_file_name(r)), serde_json::to_string_pretty(r)? + "\n")?;
    }
    put(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(reports)? + "\n")?;
    put(dir.join(TABLE_FILE), render_table(reports))?;
    put(dir.join(RTF_FILE), render_rtf_csv(reports))?;
    Ok(written)
}

pub fn load_summary(dir: &Path) -> Result<Vec<CellReport>> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
