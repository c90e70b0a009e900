//! Experiment specification: a flat JSON file whose keys the command-line
//! flags mirror one-to-one. Flags win over file values.

use std::path::{Path, PathBuf};

use arcs_core::balance::PhiSpec;
use arcs_core::engine::{Method, TrialConfig};
use arcs_core::simulate::{CalibrationForm, CalibrationSpec, Example};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const DEFAULT_REPS: usize = 200;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_N0: usize = 30;
pub const DEFAULT_BATCH: usize = 10;
/// `n - N0 = 346` for the full stand-in table only splits into pairs.
pub const DEFAULT_CALIBRATED_BATCH: usize = 2;
pub const DEFAULT_RHO: f64 = 0.85;
pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_OUTCOME: &str = "FinalHAMD";
pub const DEFAULT_ARM: &str = "TREAT";
pub const DEFAULT_MODEL_COLUMNS: [&str; 2] = ["RACE", "HAMD24"];

/// The file format. Every key is optional; missing keys take defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, rename = "N0", skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
}

impl RawSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("config file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Values set in `over` replace ours.
    pub fn overlay(self, over: RawSpec) -> RawSpec {
        RawSpec {
            example: over.example.or(self.example),
            methods: over.methods.or(self.methods),
            n: over.n.or(self.n),
            p: over.p.or(self.p),
            n0: over.n0.or(self.n0),
            batch: over.batch.or(self.batch),
            rho: over.rho.or(self.rho),
            weights: over.weights.or(self.weights),
            reps: over.reps.or(self.reps),
            seed: over.seed.or(self.seed),
            threads: over.threads.or(self.threads),
            out: over.out.or(self.out),
            form: over.form.or(self.form),
            data: over.data.or(self.data),
            outcome: over.outcome.or(self.outcome),
            arm: over.arm.or(self.arm),
            covariates: over.covariates.or(self.covariates),
        }
    }
}

/// A validated experiment with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub example: Example,
    pub methods: Vec<Method>,
    pub n: usize,
    pub p: usize,
    pub n0: usize,
    pub batch: usize,
    pub rho: f64,
    pub weights: [f64; 3],
    pub reps: usize,
    pub seed: u64,
    /// `None` uses the available parallelism.
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub form: CalibrationForm,
    pub data: Option<PathBuf>,
    pub outcome: String,
    pub arm: Option<String>,
    pub covariates: Vec<String>,
}

fn config_error(key: &str, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("`{key}`: {msg}"))
}

pub fn parse_form(s: &str) -> Result<CalibrationForm> {
    match s.trim().to_ascii_lowercase().as_str() {
        "linear" => Ok(CalibrationForm::Linear),
        "quadratic" => Ok(CalibrationForm::Quadratic),
        other => Err(config_error("form", format!("expected linear or quadratic, got `{other}`"))),
    }
}

pub fn form_name(form: CalibrationForm) -> &'static str {
    match form {
        CalibrationForm::Linear => "linear",
        CalibrationForm::Quadratic => "quadratic",
    }
}

impl ExperimentSpec {
    pub fn resolve(raw: RawSpec) -> Result<Self> {
        let example: Example = raw
            .example
            .as_deref()
            .ok_or_else(|| config_error("example", "missing (one of 1a, 1b, 2, 3, 4, calibrated)"))?
            .parse()
            .map_err(|e| config_error("example", e))?;
        let names = raw.methods.unwrap_or_default();
        if names.is_empty() {
            return Err(config_error("methods", "at least one method is required"));
        }
        let mut methods = Vec::with_capacity(names.len());
        for name in &names {
            let m: Method = name.parse().map_err(|e| config_error("methods", e))?;
            if methods.contains(&m) {
                return Err(config_error("methods", format!("`{}` listed twice", m.key())));
            }
            methods.push(m);
        }
        let (n_default, p_default) = example.default_size();
        let batch_default = if example == Example::Calibrated {
            DEFAULT_CALIBRATED_BATCH
        } else {
            DEFAULT_BATCH
        };
        let reps = raw.reps.unwrap_or(DEFAULT_REPS);
        if reps == 0 {
            return Err(config_error("reps", "must be at least 1"));
        }
        if raw.threads == Some(0) {
            return Err(config_error("threads", "must be at least 1"));
        }
        let weights = raw.weights.unwrap_or([1.0 / 3.0; 3]);
        PhiSpec::cov(weights[0], weights[1], weights[2]).map_err(|e| config_error("weights", e))?;
        let form = raw.form.as_deref().map(parse_form).transpose()?.unwrap_or_default();
        let covariates = raw
            .covariates
            .unwrap_or_else(|| DEFAULT_MODEL_COLUMNS.iter().map(|s| s.to_string()).collect());
        let spec = ExperimentSpec {
            example,
            methods,
            n: raw.n.unwrap_or(n_default),
            p: raw.p.unwrap_or(p_default),
            n0: raw.n0.unwrap_or(DEFAULT_N0),
            batch: raw.batch.unwrap_or(batch_default),
            rho: raw.rho.unwrap_or(DEFAULT_RHO),
            weights,
            reps,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            threads: raw.threads,
            out: raw.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            form,
            data: raw.data,
            outcome: raw.outcome.unwrap_or_else(|| DEFAULT_OUTCOME.into()),
            arm: Some(raw.arm.unwrap_or_else(|| DEFAULT_ARM.into())).filter(|a| !a.is_empty()),
            covariates,
        };
        for m in &spec.methods {
            spec.trial_config(*m)
                .validate()
                .map_err(|e| HarnessError::Config(format!("method {}: {e}", m.key())))?;
        }
        Ok(spec)
    }

    /// Parses a JSON document (possibly empty) and resolves it.
    pub fn parse(text: &str) -> Result<Self> {
        let raw = if text.trim().is_empty() { RawSpec::default() } else { RawSpec::from_json(text)? };
        Self::resolve(raw)
    }

    /// File values (if any) overridden by flags.
    pub fn from_sources(file: Option<&Path>, flags: RawSpec) -> Result<Self> {
        let base = file.map(RawSpec::from_file).transpose()?.unwrap_or_default();
        Self::resolve(base.overlay(flags))
    }

    /// Fully populated file form; resolving it gives back `self`.
    pub fn to_raw(&self) -> RawSpec {
        RawSpec {
            example: Some(self.example.id().into()),
            methods: Some(self.methods.iter().map(|m| m.key().to_string()).collect()),
            n: Some(self.n),
            p: Some(self.p),
            n0: Some(self.n0),
            batch: Some(self.batch),
            rho: Some(self.rho),
            weights: Some(self.weights),
            reps: Some(self.reps),
            seed: Some(self.seed),
            threads: self.threads,
            out: Some(self.out.clone()),
            form: Some(form_name(self.form).into()),
            data: self.data.clone(),
            outcome: Some(self.outcome.clone()),
            arm: Some(self.arm.clone().unwrap_or_default()),
            covariates: Some(self.covariates.clone()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("spec serializes")
    }

    pub fn trial_config(&self, method: Method) -> TrialConfig {
        let mut config = TrialConfig::new(method, self.n, self.p);
        config.n0 = self.n0;
        config.batch = self.batch;
        config.rho = self.rho;
        config.seed = self.seed;
        // already checked in resolve; keep the default if called on a hand-built spec
        if let Ok(phi) = PhiSpec::cov(self.weights[0], self.weights[1], self.weights[2]) {
            config.phi = phi;
        }
        config
    }

    pub fn calibration_spec(&self) -> CalibrationSpec {
        CalibrationSpec {
            outcome: self.outcome.clone(),
            model_columns: self.covariates.clone(),
            arm: self.arm.clone(),
            form: self.form,
        }
    }

    pub fn workers(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}
