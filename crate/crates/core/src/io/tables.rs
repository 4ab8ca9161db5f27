//! CSV schemas for matrices, job distributions, survival tables and logs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value parses back bit-identically.

use std::fs::File;
use std::path::Path;

use ndarray::Array2;

use crate::calibration::IterationRecord;
use crate::domain::{Cell, Dimension, JobDistribution, SurvivalTable, TransitionRecord};
use crate::error::{LfnError, Result};
use crate::shocks::FlaggedEdge;

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| LfnError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| LfnError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> LfnError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => LfnError::io(path, io),
        other => LfnError::parse(path, format!("{other:?}")),
    }
}

fn number<T: std::str::FromStr>(path: &Path, field: &str, line: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| LfnError::parse(path, format!("line {line}: `{field}` is not a number")))
}

/// A labelled table: one label column followed by numeric columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledTable {
    pub columns: Vec<String>,
    pub rows: Vec<String>,
    pub values: Array2<f64>,
}

pub fn read_table(path: &Path) -> Result<LabelledTable> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() < 2 {
        return Err(LfnError::parse(path, "expected a label column and at least one value column"));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut rows = Vec::new();
    let mut flat = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = k + 2;
        if record.len() != header.len() {
            return Err(LfnError::parse(
                path,
                format!("line {line}: {} fields, expected {}", record.len(), header.len()),
            ));
        }
        rows.push(record[0].to_owned());
        for field in record.iter().skip(1) {
            flat.push(number::<f64>(path, field, line)?);
        }
    }
    let values = Array2::from_shape_vec((rows.len(), columns.len()), flat)
        .map_err(|e| LfnError::parse(path, e))?;
    Ok(LabelledTable {
        columns,
        rows,
        values,
    })
}

pub fn write_table(path: &Path, corner: &str, rows: &[String], columns: &[String], values: &Array2<f64>) -> Result<()> {
    if values.dim() != (rows.len(), columns.len()) {
        return Err(LfnError::ShapeMismatch {
            expected: (rows.len(), columns.len()),
            actual: values.dim(),
        });
    }
    let mut w = writer(path)?;
    let mut header = vec![corner.to_owned()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (label, row) in rows.iter().zip(values.rows()) {
        let mut record = vec![label.clone()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| LfnError::io(path, e))
}

/// Square matrix whose header row and label column both list the categories.
pub fn read_matrix(path: &Path) -> Result<(Array2<f64>, Vec<String>)> {
    let t = read_table(path)?;
    if t.rows.len() != t.columns.len() {
        return Err(LfnError::ShapeMismatch {
            expected: (t.columns.len(), t.columns.len()),
            actual: t.values.dim(),
        });
    }
    if t.rows != t.columns {
        return Err(LfnError::parse(path, "row labels differ from column labels"));
    }
    Ok((t.values, t.rows))
}

/// Labels default to category indices when `labels` is `None`.
pub fn write_matrix(path: &Path, matrix: &Array2<f64>, labels: Option<&[String]>) -> Result<()> {
    let n = matrix.nrows();
    let owned: Vec<String>;
    let labels = match labels {
        Some(l) => l,
        None => {
            owned = (0..n).map(|k| k.to_string()).collect();
            &owned
        }
    };
    write_table(path, "label", labels, labels, matrix)
}

const JOB_HEADER: [&str; 6] = ["region", "industry", "occupation", "count", "wage_mean", "wage_std"];

/// One row per cell with `region, industry, occupation, count, wage_mean,
/// wage_std`. Every cell of the `dims` grid must appear exactly once.
pub fn read_jobs(path: &Path, dims: (usize, usize, usize)) -> Result<JobDistribution> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != JOB_HEADER {
        return Err(LfnError::parse(path, format!("header must be {}", JOB_HEADER.join(","))));
    }
    let n_cells = dims.0 * dims.1 * dims.2;
    let mut seen = vec![false; n_cells];
    let mut counts = vec![0u64; n_cells];
    let mut mean = vec![0.0; n_cells];
    let mut std = vec![0.0; n_cells];
    let index = |c: Cell| (c.region * dims.1 + c.industry) * dims.2 + c.occupation;
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = k + 2;
        let r: usize = number(path, &record[0], line)?;
        let i: usize = number(path, &record[1], line)?;
        let o: usize = number(path, &record[2], line)?;
        for (v, size, name) in [(r, dims.0, "region"), (i, dims.1, "industry"), (o, dims.2, "occupation")] {
            if v >= size {
                return Err(LfnError::DimensionMismatch {
                    first: path.display().to_string(),
                    second: "labels".into(),
                    detail: format!("line {line}: {name} {v} but only {size} {name} labels"),
                });
            }
        }
        let cell = index(Cell::new(r, i, o));
        if seen[cell] {
            return Err(LfnError::parse(path, format!("line {line}: duplicate cell ({r}, {i}, {o})")));
        }
        seen[cell] = true;
        counts[cell] = number(path, &record[3], line)?;
        mean[cell] = number(path, &record[4], line)?;
        std[cell] = number(path, &record[5], line)?;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(LfnError::DimensionMismatch {
            first: path.display().to_string(),
            second: "labels".into(),
            detail: format!("cell index {missing} missing; every cell must be listed"),
        });
    }
    JobDistribution::new(dims, counts, mean, std)
}

pub fn write_jobs(path: &Path, jobs: &JobDistribution) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(JOB_HEADER).map_err(|e| csv_err(path, e))?;
    for k in 0..jobs.n_cells() {
        let c = jobs.cell(k);
        w.write_record([
            c.region.to_string(),
            c.industry.to_string(),
            c.occupation.to_string(),
            jobs.counts[k].to_string(),
            jobs.wage_mean[k].to_string(),
            jobs.wage_std[k].to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| LfnError::io(path, e))
}

/// `age, survival_probability` rows for consecutive ages.
pub fn read_survival(path: &Path) -> Result<SurvivalTable> {
    let mut rdr = reader(path)?;
    let mut first = None;
    let mut probs = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = k + 2;
        if record.len() != 2 {
            return Err(LfnError::parse(path, format!("line {line}: expected age,survival_probability")));
        }
        let age: u32 = number(path, &record[0], line)?;
        let expected = first.map(|f: u32| f + probs.len() as u32).unwrap_or(age);
        if age != expected {
            return Err(LfnError::parse(path, format!("line {line}: age {age}, expected {expected}")));
        }
        first.get_or_insert(age);
        probs.push(number(path, &record[1], line)?);
    }
    let first = first.ok_or_else(|| LfnError::parse(path, "empty survival table"))?;
    SurvivalTable::new(first, probs)
}

pub fn write_survival(path: &Path, table: &SurvivalTable) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["age", "survival_probability"]).map_err(|e| csv_err(path, e))?;
    for (k, p) in table.probabilities.iter().enumerate() {
        w.write_record([(table.first_age + k as u32).to_string(), p.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| LfnError::io(path, e))
}

pub fn write_transitions(path: &Path, log: &[TransitionRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["step", "from_r", "from_i", "from_o", "to_r", "to_i", "to_o", "mover_status"])
        .map_err(|e| csv_err(path, e))?;
    for t in log {
        w.write_record([
            t.step.to_string(),
            t.from.region.to_string(),
            t.from.industry.to_string(),
            t.from.occupation.to_string(),
            t.to.region.to_string(),
            t.to.industry.to_string(),
            t.to.occupation.to_string(),
            t.status.as_str().to_owned(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| LfnError::io(path, e))
}

/// Error history as `step, xi`, steps counted from 1.
pub fn write_xi(path: &Path, xi: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["step", "xi"]).map_err(|e| csv_err(path, e))?;
    for (k, v) in xi.iter().enumerate() {
        w.write_record([(k + 1).to_string(), v.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| LfnError::io(path, e))
}

pub fn read_xi(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != 2 {
            return Err(LfnError::parse(path, format!("line {}: expected step,xi", k + 2)));
        }
        out.push(number(path, &record[1], k + 2)?);
    }
    Ok(out)
}

pub fn write_calibration_history(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "iteration", "mean_error", "pearson_R", "pearson_I", "pearson_O", "frob_R", "frob_I", "frob_O",
    ])
    .map_err(|e| csv_err(path, e))?;
    for h in history {
        let mut record = vec![h.iteration.to_string(), h.mean_error.to_string()];
        let fit = |d: Dimension| h.fit.get(d).expect("fit covers every dimension");
        record.extend(Dimension::ALL.iter().map(|&d| fit(d).pearson.to_string()));
        record.extend(Dimension::ALL.iter().map(|&d| fit(d).frobenius.to_string()));
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| LfnError::io(path, e))
}

pub fn write_flagged_edges(path: &Path, edges: &[FlaggedEdge], labels: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["from", "to", "mean_change", "p_value"])
        .map_err(|e| csv_err(path, e))?;
    let name = |k: usize| labels.get(k).cloned().unwrap_or_else(|| k.to_string());
    for e in edges {
        w.write_record([name(e.from), name(e.to), e.mean_change.to_string(), e.p_value.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| LfnError::io(path, e))
}
