//! Trajectory tables: long-form CSV `method,t,<observables>` with one block
//! of rows per method.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tiered_core::ReducedTrajectory;

use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub method: String,
    pub t: Vec<f64>,
    /// `columns[i][k]` is observable `i` at `t[k]`.
    pub columns: Vec<Vec<f64>>,
}

impl Block {
    pub fn from_trajectory(method: &str, tr: &ReducedTrajectory) -> Self {
        let m = tr.states.first().map_or(0, |s| s.len() - 1);
        Self { method: method.to_string(), t: tr.t.clone(), columns: (0..m).map(|i| tr.observable(i)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub names: Vec<String>,
    pub blocks: Vec<Block>,
}

impl Table {
    pub fn new(n: usize) -> Self {
        Self { names: observable_names(n), blocks: Vec::new() }
    }

    pub fn block(&self, method: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.method == method)
    }

    pub fn methods(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.method.as_str()).collect()
    }
}

/// `<nu_i>` column names: `sx, sy, sz` for a qubit, `nu1..` otherwise.
pub fn observable_names(n: usize) -> Vec<String> {
    if n == 2 {
        return vec!["sx".into(), "sy".into(), "sz".into()];
    }
    (1..n * n).map(|i| format!("nu{i}")).collect()
}

/// 17 significant digits, exactly reproducible.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_string(table: &Table) -> String {
    let mut s = String::new();
    s.push_str("method,t");
    for n in &table.names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for b in &table.blocks {
        for (k, t) in b.t.iter().enumerate() {
            write!(s, "{},{}", b.method, fmt(*t)).unwrap();
            for c in &b.columns {
                s.push(',');
                s.push_str(&fmt(c[k]));
            }
            s.push('\n');
        }
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err("create", dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err("write", path, e))
}

pub fn read_csv(path: &Path) -> CliResult<Table> {
    let bad = |m: String| CliError::Input(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new().from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "method" || &header[1] != "t" {
        return Err(bad("header must start with method,t and name at least one observable".into()));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut blocks: Vec<Block> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> CliResult<f64> {
            rec[i].parse::<f64>().map_err(|_| bad(format!("row {}: cannot parse {:?}", line + 2, &rec[i])))
        };
        let method = &rec[0];
        let idx = match blocks.iter().position(|b| b.method == method) {
            Some(i) if i + 1 == blocks.len() => i,
            Some(_) => return Err(bad(format!("rows of method {method:?} are not contiguous"))),
            None => {
                blocks.push(Block {
                    method: method.to_string(),
                    t: Vec::new(),
                    columns: vec![Vec::new(); names.len()],
                });
                blocks.len() - 1
            }
        };
        let b = &mut blocks[idx];
        b.t.push(num(1)?);
        for i in 0..names.len() {
            b.columns[i].push(num(i + 2)?);
        }
    }
    Ok(Table { names, blocks })
}

/// `trajectory.csv` -> `trajectory.json`.
pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

/// `trajectory.csv` -> `trajectory.envelope.csv`.
pub fn envelope_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trajectory".into());
    out.with_file_name(format!("{stem}.envelope.csv"))
}

pub fn envelope_csv(t: &[f64], theta_relax: &[f64], envelope: &[f64]) -> String {
    let mut s = String::from("t,theta_relax,envelope\n");
    for k in 0..t.len() {
        writeln!(s, "{},{},{}", fmt(t[k]), fmt(theta_relax[k]), fmt(envelope[k])).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = Table::new(2);
        t.blocks.push(Block {
            method: "influence".into(),
            t: vec![0.0, 0.1],
            columns: vec![vec![0.1, 1.0 / 3.0], vec![-0.0, 2e-300], vec![1.0, -0.12345678901234568]],
        });
        t.blocks.push(Block { method: "oracle".into(), t: vec![0.0], columns: vec![vec![1.0], vec![2.0], vec![3.0]] });
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_text(&p, &csv_string(&t)).unwrap();
        let back = read_csv(&p).unwrap();
        assert_eq!(back.names, t.names);
        for (a, b) in back.blocks.iter().zip(&t.blocks) {
            assert_eq!(a.method, b.method);
            assert_eq!(a.t, b.t);
            for (x, y) in a.columns.iter().zip(&b.columns) {
                assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits() || (*p == 0.0 && *q == 0.0)));
            }
        }
    }

    #[test]
    fn rejects_interleaved_methods() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "method,t,sx\na,0,1\nb,0,1\na,1,1\n").unwrap();
        assert!(read_csv(&p).unwrap_err().to_string().contains("contiguous"));
    }

    #[test]
    fn derived_paths() {
        let p = Path::new("out/biased.csv");
        assert_eq!(summary_path(p), Path::new("out/biased.json"));
        assert_eq!(envelope_path(p), Path::new("out/biased.envelope.csv"));
    }

    #[test]
    fn names_for_qutrit() {
        assert_eq!(observable_names(3).len(), 8);
        assert_eq!(observable_names(3)[7], "nu8");
    }
}
