//! Result tables, CSV output and plot scripts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub sweep_value: f64,
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// One curve of an experiment. Values are in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    /// File stem, unique within a run.
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub rows: Vec<TableRow>,
}

impl ResultTable {
    pub fn new(name: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>, mut rows: Vec<TableRow>) -> Self {
        rows.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.sweep_value.total_cmp(&b.sweep_value)));
        Self {
            name: name.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            rows,
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep_value,x,mean,stderr\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.sweep_value, r.x, r.mean, r.stderr).expect("write to String");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.file_name());
        std::fs::write(&path, self.to_csv()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean).collect()
    }
}

/// Sample mean and standard error (0 for a single sample).
pub fn summarize(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn gnuplot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Writes `plot.gp` into `dir`, drawing each table to its own PNG.
///
/// Every table must already exist inside `dir`. Returns `None`, after a
/// warning, when `tables` is empty.
pub fn emit_plot_script(dir: &Path, tables: &[ResultTable]) -> Result<Option<PathBuf>> {
    if tables.is_empty() {
        log::warn!("no result tables to plot; skipping plot script");
        return Ok(None);
    }
    let mut script = String::from("set datafile separator ','\nset key off\nset grid\nset terminal pngcairo size 800,600\n");
    for t in tables {
        let csv = dir.join(t.file_name());
        if !csv.is_file() {
            return Err(Error::io(
                &csv,
                std::io::Error::new(std::io::ErrorKind::NotFound, "result table missing"),
            ));
        }
        writeln!(
            script,
            "\nset output {}\nset title {}\nset xlabel {}\nset ylabel {}\nplot {} using 2:3:4 skip 1 with yerrorlines",
            gnuplot_quote(&format!("{}.png", t.name)),
            gnuplot_quote(&t.name),
            gnuplot_quote(&t.x_label),
            gnuplot_quote(&t.y_label),
            gnuplot_quote(&t.file_name()),
        )
        .expect("write to String");
    }
    let path = dir.join("plot.gp");
    std::fs::write(&path, script).map_err(|e| Error::io(&path, e))?;
    Ok(Some(path))
}
