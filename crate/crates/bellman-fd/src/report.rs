//! Report output: pretty JSON with the resolved config embedded, aligned text
//! for people, and the convergence table as CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bellman_fd_core::diagnostics::ConvergenceReport;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub passed: Option<bool>,
    pub config: &'a RunConfig,
    pub result: &'a T,
}

pub fn to_json<T: Serialize>(command: &str, config: &RunConfig, passed: Option<bool>, result: &T) -> String {
    let env = Envelope {
        command,
        version: env!("CARGO_PKG_VERSION"),
        passed,
        config,
        result,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("report values always serialize");
    s.push('\n');
    s
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        format!("{x}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Columns padded to their widest cell; numeric columns right-aligned, others left.
#[derive(Debug, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let n = self.header.len();
        let mut width = vec![0; n];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let numeric: Vec<bool> = (0..n)
            .map(|k| {
                self.rows
                    .iter()
                    .filter_map(|r| r.get(k))
                    .all(|c| c.is_empty() || c.parse::<f64>().is_ok())
            })
            .collect();
        let mut out = String::new();
        for r in std::iter::once(&self.header).chain(&self.rows) {
            let line: Vec<String> = r
                .iter()
                .zip(width.iter().zip(&numeric))
                .map(|(c, (&w, &right))| if right { format!("{c:>w$}") } else { format!("{c:<w$}") })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// `key  value` lines with the keys padded to one width.
pub fn key_values(pairs: &[(&str, String)]) -> String {
    let w = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k:<w$}  {v}");
    }
    out
}

pub fn convergence_table(r: &ConvergenceReport) -> Table {
    let mut t = Table::new(&["h", "tau", "sup_error", "order_pairwise"]);
    for (i, &(tau, h)) in r.mesh_params.iter().enumerate() {
        t.row(vec![num(h), num(tau), num(r.errors[i]), opt(r.pairwise_orders[i])]);
    }
    t
}

pub fn convergence_csv(r: &ConvergenceReport) -> String {
    let mut out = String::from("h,tau,sup_error,order_pairwise\n");
    for (i, &(tau, h)) in r.mesh_params.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", num(h), num(tau), num(r.errors[i]), opt(r.pairwise_orders[i]));
    }
    out
}

/// Files land in one directory, named `<command>.<ext>` or `<command>_<part>.csv`.
pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> std::io::Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, contents)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0, 1e-300, 123456.789, -2.5e10, 1.0 / 3.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.0), "1.0");
        assert_eq!(opt(None), "");
    }

    #[test]
    fn table_aligns_columns() {
        let mut t = Table::new(&["h", "error"]);
        t.row(vec!["0.1".into(), "1e-3".into()]);
        t.row(vec!["0.05".into(), "2.5e-4".into()]);
        let s = t.render();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines, ["   h   error", " 0.1    1e-3", "0.05  2.5e-4"]);
    }

    #[test]
    fn convergence_csv_columns() {
        let r = ConvergenceReport {
            mesh_params: vec![(0.04, 0.2), (0.01, 0.1)],
            errors: vec![0.4, 0.1],
            fitted_order: None,
            fitted_constant: None,
            pairwise_orders: vec![None, Some(2.0)],
            margins: vec![1, 2],
            failures: vec![],
        };
        assert_eq!(convergence_csv(&r), "h,tau,sup_error,order_pairwise\n0.2,0.04,0.4,\n0.1,0.01,0.1,2.0\n");
    }
}
