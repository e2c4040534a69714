//! Deviation report between two trajectory blocks on identical grids.

use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::{read_csv, summary_path, Block, Table};

#[derive(Debug, Clone, Serialize)]
pub struct ColumnDeviation {
    pub name: String,
    pub max: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub a: String,
    pub b: String,
    pub points: usize,
    pub columns: Vec<ColumnDeviation>,
    pub max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub exceeded: bool,
    /// Rate reports from the `.json` summaries next to the inputs, if present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates_a: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates_b: Option<serde_json::Value>,
}

fn pick<'a>(table: &'a Table, method: Option<&str>, file: &Path) -> CliResult<&'a Block> {
    match method {
        Some(m) => table.block(m).ok_or_else(|| {
            CliError::Input(format!("{}: no method {m:?} (have {})", file.display(), table.methods().join(", ")))
        }),
        None if table.blocks.len() == 1 => Ok(&table.blocks[0]),
        None => Err(CliError::Input(format!(
            "{} holds several methods ({}); choose one",
            file.display(),
            table.methods().join(", ")
        ))),
    }
}

pub fn compare_blocks(names: &[String], a: &Block, b: &Block) -> CliResult<Vec<ColumnDeviation>> {
    if a.t.len() != b.t.len() || a.t.iter().zip(&b.t).any(|(x, y)| x != y) {
        return Err(CliError::Input(format!(
            "time grids of {:?} and {:?} differ ({} vs {} points); resample before comparing",
            a.method,
            b.method,
            a.t.len(),
            b.t.len()
        )));
    }
    Ok(names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let d: Vec<f64> = a.columns[i].iter().zip(&b.columns[i]).map(|(x, y)| (x - y).abs()).collect();
            let max = d.iter().cloned().fold(0.0, f64::max);
            let rms = if d.is_empty() { 0.0 } else { (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt() };
            ColumnDeviation { name: name.clone(), max, rms }
        })
        .collect())
}

fn rates_beside(csv: &Path) -> Option<serde_json::Value> {
    let text = std::fs::read_to_string(summary_path(csv)).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("rates").filter(|r| !r.is_null()).cloned()
}

pub fn compare_files(
    a_path: &Path,
    b_path: &Path,
    a_method: Option<&str>,
    b_method: Option<&str>,
    threshold: Option<f64>,
) -> CliResult<ComparisonReport> {
    let ta = read_csv(a_path)?;
    let tb = if a_path == b_path { ta.clone() } else { read_csv(b_path)? };
    if ta.names != tb.names {
        return Err(CliError::Input(format!(
            "observable columns differ: [{}] vs [{}]",
            ta.names.join(", "),
            tb.names.join(", ")
        )));
    }
    let a = pick(&ta, a_method, a_path)?;
    let b = pick(&tb, b_method, b_path)?;
    let columns = compare_blocks(&ta.names, a, b)?;
    let max = columns.iter().map(|c| c.max).fold(0.0, f64::max);
    Ok(ComparisonReport {
        a: format!("{}:{}", a_path.display(), a.method),
        b: format!("{}:{}", b_path.display(), b.method),
        points: a.t.len(),
        columns,
        max,
        threshold,
        exceeded: threshold.is_some_and(|th| max > th),
        rates_a: rates_beside(a_path),
        rates_b: rates_beside(b_path),
    })
}
