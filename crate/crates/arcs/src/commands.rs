//! What the subcommands do, minus argument parsing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use arcs_core::engine::Method;
use arcs_core::simulate::{
    calibrate_pseudo_trial, run_replication, Example, PseudoTrial, ReplicationSummary, Scenario,
};

use crate::config::{form_name, ExperimentSpec};
use crate::error::{HarnessError, Result};
use crate::io;
use crate::runner::{run_study, Study};

/// Reads and fits the calibration table named by `spec.data`.
pub fn pseudo_trial(spec: &ExperimentSpec) -> Result<PseudoTrial> {
    let path = spec.data.as_deref().ok_or_else(|| {
        HarnessError::Config("`data`: the calibrated example needs a CSV table (--data)".into())
    })?;
    let table = io::read_table(path)?;
    let trial = calibrate_pseudo_trial(&table, &spec.calibration_spec())
        .map_err(|e| HarnessError::data(path, e.to_string()))?;
    if trial.covariates.cols() != spec.p {
        return Err(HarnessError::data(
            path,
            format!("table has {} covariate columns but p = {}", trial.covariates.cols(), spec.p),
        ));
    }
    if trial.covariates.rows() < spec.n {
        return Err(HarnessError::data(
            path,
            format!("table has {} rows but n = {}", trial.covariates.rows(), spec.n),
        ));
    }
    Ok(trial)
}

pub fn scenario(spec: &ExperimentSpec) -> Result<Scenario> {
    match spec.example {
        Example::Calibrated => Ok(pseudo_trial(spec)?.scenario()),
        ex => Ok(Scenario::example(ex, spec.p)?),
    }
}

/// Label used in the `example` CSV column.
pub fn example_label(spec: &ExperimentSpec) -> String {
    match spec.example {
        Example::Calibrated => format!("calibrated-{}", form_name(spec.form)),
        ex => ex.id().into(),
    }
}

/// Runs every method of `spec` and returns the studies with their summaries.
pub fn run_studies(spec: &ExperimentSpec, scenario: &Scenario) -> Result<Vec<(Study, ReplicationSummary)>> {
    let workers = spec.workers();
    let label = example_label(spec);
    spec.methods
        .iter()
        .map(|&m| {
            let study = run_study(&spec.trial_config(m), scenario, &label, spec.reps, workers)?;
            let summary = study.summary()?;
            if summary.failures > 0 {
                log::warn!("{m}: {} of {} replications failed", summary.failures, spec.reps);
            }
            Ok((study, summary))
        })
        .collect()
}

/// Summary, per-replication, trajectory and timing CSVs under `dir`.
pub fn write_outputs(dir: &Path, results: &[(Study, ReplicationSummary)]) -> Result<Vec<PathBuf>> {
    let studies: Vec<Study> = results.iter().map(|(s, _)| s.clone()).collect();
    let summaries: Vec<ReplicationSummary> = results.iter().map(|(_, s)| s.clone()).collect();
    let paths = [io::SUMMARY_FILE, io::PER_REP_FILE, io::TRAJECTORY_FILE, io::TIMING_FILE].map(|f| dir.join(f));
    io::write_summary(&paths[0], &summaries)?;
    io::write_per_rep(&paths[1], &studies)?;
    io::write_trajectory(&paths[2], &studies)?;
    io::write_timing(&paths[3], &studies)?;
    Ok(paths.to_vec())
}

/// Two decimals, truncated rather than rounded. Going through a longer
/// decimal string first keeps 0.29 from printing as 0.28.
pub fn two_decimals(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let long = format!("{x:.9}");
    let cut = &long[..long.find('.').map_or(long.len(), |d| d + 3)];
    if cut.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        cut.trim_start_matches('-').to_string()
    } else {
        cut.to_string()
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), two_decimals)
}

/// Metrics down, methods across, two decimals.
pub fn render_table(summaries: &[ReplicationSummary]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = vec![
        ("Imb^M".into(), summaries.iter().map(|s| cell(Some(s.imb_m))).collect()),
        ("DNCM".into(), summaries.iter().map(|s| cell(Some(s.dncm))).collect()),
        ("DNC".into(), summaries.iter().map(|s| cell(Some(s.dnc))).collect()),
        ("Imb^phi".into(), summaries.iter().map(|s| cell(Some(s.imb_phi))).collect()),
        (
            "tau mean (sqrt(n) sd)".into(),
            summaries
                .iter()
                .map(|s| format!("{} ({})", two_decimals(s.tau_mean), two_decimals(s.tau_sd_scaled)))
                .collect(),
        ),
    ];
    if summaries.iter().any(|s| s.final_tpr().is_some()) {
        rows.push(("final TPR".into(), summaries.iter().map(|s| cell(s.final_tpr())).collect()));
        rows.push(("final FPR".into(), summaries.iter().map(|s| cell(s.final_fpr())).collect()));
    }
    rows.push(("time (s)".into(), summaries.iter().map(|s| format!("{:.3}", s.wall_mean)).collect()));
    rows.push(("failures".into(), summaries.iter().map(|s| s.failures.to_string()).collect()));

    let header: Vec<String> = summaries.iter().map(|s| s.method.name().to_string()).collect();
    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..summaries.len())
        .map(|j| rows.iter().map(|(_, c)| c[j].len()).chain([header[j].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    if let Some(first) = summaries.first() {
        let _ = writeln!(
            out,
            "example {}  n = {}  p = {}  reps = {}",
            first.example, first.n, first.p, first.reps + first.failures
        );
    }
    let _ = write!(out, "{:label_width$}", "");
    for (h, w) in header.iter().zip(&widths) {
        let _ = write!(out, "  {h:>w$}");
    }
    out.push('\n');
    for (label, cells) in &rows {
        let _ = write!(out, "{label:label_width$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    }
    out
}

/// `table`: the replication study, its CSVs and the console table.
pub fn cmd_table(spec: &ExperimentSpec) -> Result<String> {
    let scenario = scenario(spec)?;
    let results = run_studies(spec, &scenario)?;
    write_outputs(&spec.out, &results)?;
    let summaries: Vec<ReplicationSummary> = results.into_iter().map(|(_, s)| s).collect();
    Ok(render_table(&summaries))
}

/// `calibrate`: fit the pseudo-trial on `spec.data`, then run the study on it.
pub fn cmd_calibrate(spec: &ExperimentSpec) -> Result<String> {
    if spec.example != Example::Calibrated {
        return Err(HarnessError::Config(format!(
            "`example`: calibrate runs the calibrated example, got {}",
            spec.example
        )));
    }
    let trial = pseudo_trial(spec)?;
    std::fs::create_dir_all(&spec.out).map_err(|e| HarnessError::io(&spec.out, e))?;
    let coef_path = spec.out.join("calibration.csv");
    let mut w = csv::Writer::from_path(&coef_path).map_err(|e| HarnessError::data(&coef_path, e.to_string()))?;
    let mut text = format!("{} model fitted on {} rows\n", form_name(spec.form), trial.covariates.rows());
    let write_err = |e: csv::Error| HarnessError::data(&coef_path, e.to_string());
    w.write_record(["term", "coefficient"]).map_err(write_err)?;
    for (name, c) in trial.term_names.iter().zip(&trial.coefficients) {
        w.write_record([name.as_str(), &c.to_string()]).map_err(write_err)?;
        let _ = writeln!(text, "  {name:>16}  {c:.4}");
    }
    w.flush().map_err(|e| HarnessError::io(&coef_path, e))?;
    let results = run_studies(spec, &trial.scenario())?;
    write_outputs(&spec.out, &results)?;
    let summaries: Vec<ReplicationSummary> = results.into_iter().map(|(_, s)| s).collect();
    text.push_str(&render_table(&summaries));
    Ok(text)
}

/// `run`: one trial per method (replication 0), written patient by patient.
pub fn cmd_run(spec: &ExperimentSpec) -> Result<String> {
    let scenario = scenario(spec)?;
    let mut text = String::new();
    for &method in &spec.methods {
        let config = spec.trial_config(method);
        let (state, metrics) = run_replication(&config, &scenario, 0)?;
        let path = spec.out.join(format!("trial_{}.csv", method.key()));
        write_trial(&path, &state)?;
        let [c0, c1] = state.counts();
        let _ = writeln!(
            text,
            "{:<13} control {c0:>4}  treatment {c1:>4}  tau {:>7.3}  Imb^M {:>8.3}  DNCM {:>9.2}  selected {:?}",
            method.name(),
            metrics.tau_hat,
            metrics.imb_m,
            metrics.dncm,
            state.selected.indices()
        );
    }
    Ok(text)
}

fn write_trial(path: &Path, state: &arcs_core::engine::TrialState) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::data(path, e.to_string()))?;
    let err = |e: csv::Error| HarnessError::data(path, e.to_string());
    w.write_record(["patient", "arm", "outcome"]).map_err(err)?;
    for (i, (arm, y)) in state.assignments.iter().zip(&state.outcomes).enumerate() {
        w.write_record([i.to_string(), arm.index().to_string(), y.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Every method key, for help texts.
pub fn method_keys() -> String {
    Method::ALL.iter().map(|m| m.key()).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::two_decimals;

    #[test]
    fn table_cells_truncate() {
        assert_eq!(two_decimals(0.29), "0.29");
        assert_eq!(two_decimals(2.9876), "2.98");
        assert_eq!(two_decimals(-1.239), "-1.23");
        assert_eq!(two_decimals(-0.004), "0.00");
        assert_eq!(two_decimals(5.0), "5.00");
        assert_eq!(two_decimals(f64::NAN), "NaN");
    }
}
