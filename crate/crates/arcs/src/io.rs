//! CSV input and output.
//!
//! Numbers are written with Rust's shortest round-trip formatting so reruns
//! produce identical bytes. Wall times go to their own file because they
//! never repeat exactly.

use std::fs::File;
use std::path::Path;

use arcs_core::numerics::Matrix;
use arcs_core::simulate::{DataTable, ReplicationSummary};

use crate::error::{HarnessError, Result};
use crate::runner::Study;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const PER_REP_FILE: &str = "per_rep.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const TIMING_FILE: &str = "timing.csv";

pub const PER_REP_HEADER: [&str; 8] = ["rep", "method", "example", "n", "p", "batch_size", "metric", "value"];
pub const TRAJECTORY_HEADER: [&str; 5] = ["rep", "method", "batch", "tpr", "fpr"];
pub const SUMMARY_HEADER: [&str; 15] = [
    "method",
    "example",
    "n",
    "p",
    "batch_size",
    "reps",
    "failures",
    "imb_m",
    "dncm",
    "dnc",
    "imb_phi",
    "tau_mean",
    "tau_sd_scaled",
    "final_tpr",
    "final_fpr",
];

/// Reads a numeric table with a header row. Every cell must parse as a
/// finite number; the error names the offending row and column.
pub fn read_table(path: &Path) -> Result<DataTable> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| HarnessError::data(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().any(String::is_empty) {
        return Err(HarnessError::data(path, "header row has an empty column name"));
    }
    if let Some(dup) = headers.iter().enumerate().find(|(i, h)| headers[..*i].contains(h)) {
        return Err(HarnessError::data(path, format!("duplicate column `{}`", dup.1)));
    }
    let mut values = Matrix::with_cols(headers.len());
    let mut row = vec![0.0; headers.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HarnessError::data(path, e.to_string()))?;
        let line = i + 2;
        if record.len() != headers.len() {
            return Err(HarnessError::data(
                path,
                format!("line {line} has {} fields, header has {}", record.len(), headers.len()),
            ));
        }
        for ((slot, field), name) in row.iter_mut().zip(record.iter()).zip(&headers) {
            if field.is_empty() || field.eq_ignore_ascii_case("na") {
                return Err(HarnessError::data(path, format!("missing value in column `{name}` on line {line}")));
            }
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    HarnessError::data(path, format!("column `{name}` on line {line}: `{field}` is not a finite number"))
                })?;
        }
        values.push_row(&row)?;
    }
    if values.rows() == 0 {
        return Err(HarnessError::data(path, "no data rows"));
    }
    Ok(DataTable::new(headers, values)?)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::data(path, format!("{other:?}")),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_table(path: &Path, table: &DataTable) -> Result<()> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(&table.headers).map_err(&err)?;
    for row in table.values.row_iter() {
        w.write_record(row.iter().map(f64::to_string)).map_err(&err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_summary(path: &Path, rows: &[ReplicationSummary]) -> Result<()> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(SUMMARY_HEADER).map_err(&err)?;
    for s in rows {
        w.write_record([
            s.method.key().to_string(),
            s.example.clone(),
            s.n.to_string(),
            s.p.to_string(),
            s.batch.to_string(),
            s.reps.to_string(),
            s.failures.to_string(),
            s.imb_m.to_string(),
            s.dncm.to_string(),
            s.dnc.to_string(),
            s.imb_phi.to_string(),
            s.tau_mean.to_string(),
            s.tau_sd_scaled.to_string(),
            opt(s.final_tpr()),
            opt(s.final_fpr()),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Long format, one metric per line. Failed replications are left out.
pub fn write_per_rep(path: &Path, studies: &[Study]) -> Result<()> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(PER_REP_HEADER).map_err(&err)?;
    for study in studies {
        let c = &study.config;
        for (rep, record) in study.records.iter().enumerate() {
            let Ok(m) = record else { continue };
            let mut metrics = vec![
                ("imb_m", m.imb_m),
                ("dncm", m.dncm),
                ("dnc", m.dnc),
                ("imb_phi", m.imb_phi),
                ("tau_hat", m.tau_hat),
            ];
            if let (Some(t), Some(f)) = (m.tpr.last(), m.fpr.last()) {
                metrics.push(("final_tpr", *t));
                metrics.push(("final_fpr", *f));
            }
            for (name, value) in metrics {
                w.write_record([
                    rep.to_string(),
                    c.method.key().to_string(),
                    study.example.clone(),
                    c.n.to_string(),
                    c.p.to_string(),
                    c.batch.to_string(),
                    name.to_string(),
                    value.to_string(),
                ])
                .map_err(&err)?;
            }
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Selection rates after each refit; batch 0 is the initial stage.
pub fn write_trajectory(path: &Path, studies: &[Study]) -> Result<()> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(TRAJECTORY_HEADER).map_err(&err)?;
    for study in studies {
        for (rep, record) in study.records.iter().enumerate() {
            let Ok(m) = record else { continue };
            for (b, (t, f)) in m.tpr.iter().zip(&m.fpr).enumerate() {
                w.write_record([
                    rep.to_string(),
                    study.config.method.key().to_string(),
                    b.to_string(),
                    t.to_string(),
                    f.to_string(),
                ])
                .map_err(&err)?;
            }
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_timing(path: &Path, studies: &[Study]) -> Result<()> {
    let mut w = writer(path)?;
    let err = csv_err(path);
    w.write_record(["rep", "method", "seconds"]).map_err(&err)?;
    for study in studies {
        for (rep, record) in study.records.iter().enumerate() {
            if let Ok(m) = record {
                w.write_record([rep.to_string(), study.config.method.key().to_string(), m.wall_seconds.to_string()])
                    .map_err(&err)?;
            }
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}
