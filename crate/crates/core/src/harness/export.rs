//! CSV and JSON exports. Floats use Rust's shortest round-trip formatting,
//! so identical results give identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::pipeline::{ActiveSummary, BenchRow, Summary};
use crate::error::{Error, Result};

/// `trial,accuracy,foc_final,iterations,wall_time,acc_class_0..`: `5 + k`
/// columns. A missing FOC is an empty field.
pub fn write_trials_csv<W: Write>(summary: &Summary, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    write!(w, "trial,accuracy,foc_final,iterations,wall_time")?;
    for c in 0..summary.num_classes {
        write!(w, ",acc_class_{c}")?;
    }
    writeln!(w)?;
    for r in &summary.results {
        let foc = r.foc_final.map(|f| f.to_string()).unwrap_or_default();
        write!(w, "{},{},{},{},{}", r.trial, r.accuracy, foc, r.iterations, r.wall_time)?;
        for a in &r.per_class {
            write!(w, ",{a}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `queries,mean,std`.
pub fn write_curve_csv<W: Write>(summary: &ActiveSummary, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "queries,mean,std")?;
    for p in &summary.curve {
        writeln!(w, "{},{},{}", p.queries, p.mean, p.std)?;
    }
    w.flush()?;
    Ok(())
}

/// `vertex,x,y,score`.
pub fn write_heatmap_csv<W: Write>(rows: &[(usize, f64, f64, f64)], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "vertex,x,y,score")?;
    for &(v, x, y, s) in rows {
        writeln!(w, "{v},{x},{y},{s}")?;
    }
    w.flush()?;
    Ok(())
}

/// `method,mean_accuracy,std_accuracy,wall_time`.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "method,mean_accuracy,std_accuracy,wall_time")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.method.name(), r.mean_accuracy, r.std_accuracy, r.wall_time)?;
    }
    w.flush()?;
    Ok(())
}

/// Creates `dir` and returns the path of `name` inside it.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}

pub fn create(dir: &Path, name: &str) -> Result<File> {
    Ok(File::create(output_path(dir, name)?)?)
}

/// Writes `trials.csv` and `summary.json`.
pub fn export_experiment(summary: &Summary, dir: &Path) -> Result<Vec<PathBuf>> {
    write_trials_csv(summary, create(dir, "trials.csv")?)?;
    write_json(summary, create(dir, "summary.json")?)?;
    Ok(vec![dir.join("trials.csv"), dir.join("summary.json")])
}

/// Writes `active.json` and `curve.csv`.
pub fn export_active(summary: &ActiveSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    write_json(summary, create(dir, "active.json")?)?;
    write_curve_csv(summary, create(dir, "curve.csv")?)?;
    Ok(vec![dir.join("active.json"), dir.join("curve.csv")])
}
