//! Covariate generators, outcome models, the difference-in-means estimator,
//! the calibrated pseudo-trial and per-replication bookkeeping.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::balance::{report_metrics, RunMetrics};
use crate::engine::{run_trial, Method, RowCursor, TrialConfig, TrialState};
use crate::numerics::{chol_lower, dot, Matrix};
use crate::rng::{stream, StreamPurpose};
use crate::selection::{support, SelectedSet};
use crate::{Arm, Error, Result};

/// Draws i.i.d. rows from `N(0, Sigma)` with `Sigma_ij = corr^|i - j|`.
#[derive(Debug, Clone)]
pub struct Ar1Sampler {
    factor: Matrix,
    scratch: Vec<f64>,
}

impl Ar1Sampler {
    pub fn new(p: usize, corr: f64) -> Result<Self> {
        if !(corr.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!("AR(1) correlation must lie in (-1, 1), got {corr}")));
        }
        let mut sigma = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                sigma.row_mut(i)[j] = libm::pow(corr, i.abs_diff(j) as f64);
            }
        }
        Ok(Self {
            factor: chol_lower(&sigma)?,
            scratch: vec![0.0; p],
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.rows()
    }

    /// Writes one draw into `out`.
    pub fn fill<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) {
        for z in self.scratch.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.factor.row(i)[..=i], &self.scratch[..=i]);
        }
    }
}

pub fn gen_gaussian_ar1<R: Rng + ?Sized>(n: usize, p: usize, corr: f64, rng: &mut R) -> Result<Matrix> {
    let mut sampler = Ar1Sampler::new(p, corr)?;
    let mut x = Matrix::zeros(n, p);
    for i in 0..n {
        sampler.fill(rng, x.row_mut(i));
    }
    Ok(x)
}

/// First `p - 4` columns AR(1) Gaussian with correlation 0.5; the last four
/// one-hot encode `(Z1, Z2)` in the order (1,1), (1,0), (0,1), (0,0) with
/// independent fair-coin `Z`s.
pub fn gen_mixed<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<Matrix> {
    if p < 5 {
        return Err(Error::InvalidArgument(format!("mixed covariates need p >= 5, got {p}")));
    }
    let mut sampler = Ar1Sampler::new(p - 4, 0.5)?;
    let mut x = Matrix::zeros(n, p);
    for i in 0..n {
        let row = x.row_mut(i);
        sampler.fill(rng, &mut row[..p - 4]);
        let z1 = rng.random_bool(0.5);
        let z2 = rng.random_bool(0.5);
        let cell = match (z1, z2) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        row[p - 4 + cell] = 1.0;
    }
    Ok(x)
}

/// Covariate signal added to the arm effect.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    /// `x^T beta`.
    Linear { beta: Vec<f64> },
    /// Sine, quadratic, linear and exponential components on the first four covariates.
    AdditiveNonlinear,
    /// `sum c_j x_j + sum c_ab x_a x_b` (squares have `a == b`).
    Polynomial {
        linear: Vec<(usize, f64)>,
        products: Vec<(usize, usize, f64)>,
    },
}

/// The four component functions of the additive example.
pub fn additive_components(x: &[f64; 4]) -> [f64; 4] {
    let e1 = libm::exp(-1.0);
    [
        -2.0 * libm::sin(2.0 * x[0]),
        x[1] * x[1] - 1.0 / 3.0,
        x[2] - 0.5,
        libm::exp(-x[3]) + e1 - 1.0,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    pub signal: Signal,
    /// `[mu(0), mu(1)]`.
    pub mu: [f64; 2],
    pub noise_sd: f64,
}

impl OutcomeModel {
    pub fn linear(beta: Vec<f64>) -> Self {
        Self {
            signal: Signal::Linear { beta },
            mu: [0.0, 1.0],
            noise_sd: 1.0,
        }
    }

    pub fn additive_nonlinear() -> Self {
        Self {
            signal: Signal::AdditiveNonlinear,
            mu: [0.0, 1.0],
            noise_sd: 1.0,
        }
    }

    /// `3 x1 + 3 x2 + 3 x1^2 + 3 x2^2 + 3 x1 x2`.
    pub fn quadratic_phi() -> Self {
        Self {
            signal: Signal::Polynomial {
                linear: vec![(0, 3.0), (1, 3.0)],
                products: vec![(0, 0, 3.0), (1, 1, 3.0), (0, 1, 3.0)],
            },
            mu: [0.0, 1.0],
            noise_sd: 1.0,
        }
    }

    /// Checks the model against rows of width `p`.
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config(format!("noise sd must be positive, got {}", self.noise_sd)));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("arm effects must be finite".into()));
        }
        let needed = match &self.signal {
            Signal::Linear { beta } => {
                if beta.len() != p {
                    return Err(Error::DimensionMismatch { expected: p, got: beta.len() });
                }
                0
            }
            Signal::AdditiveNonlinear => 4,
            Signal::Polynomial { linear, products } => linear
                .iter()
                .map(|t| t.0 + 1)
                .chain(products.iter().map(|t| t.0.max(t.1) + 1))
                .max()
                .unwrap_or(0),
        };
        if needed > p {
            return Err(Error::DimensionMismatch { expected: needed, got: p });
        }
        Ok(())
    }

    pub fn signal(&self, x: &[f64]) -> f64 {
        match &self.signal {
            Signal::Linear { beta } => dot(beta, x),
            Signal::AdditiveNonlinear => additive_components(&[x[0], x[1], x[2], x[3]]).iter().sum(),
            Signal::Polynomial { linear, products } => {
                linear.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
                    + products.iter().map(|&(a, b, c)| c * x[a] * x[b]).sum::<f64>()
            }
        }
    }

    /// Noise-free outcome.
    pub fn mean(&self, x: &[f64], arm: Arm) -> f64 {
        self.mu[arm.index()] + self.signal(x)
    }

    pub fn outcome<R: Rng + ?Sized>(&self, x: &[f64], arm: Arm, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        self.mean(x, arm) + self.noise_sd * e
    }

    pub fn tau(&self) -> f64 {
        self.mu[1] - self.mu[0]
    }

    /// Covariates the signal depends on.
    pub fn true_set(&self) -> SelectedSet {
        match &self.signal {
            Signal::Linear { beta } => support(beta, 0.0),
            Signal::AdditiveNonlinear => SelectedSet::all(4),
            Signal::Polynomial { linear, products } => SelectedSet::from_indices(
                linear
                    .iter()
                    .filter(|t| t.1 != 0.0)
                    .map(|t| t.0)
                    .chain(products.iter().filter(|t| t.2 != 0.0).flat_map(|t| [t.0, t.1]))
                    .collect(),
            ),
        }
    }
}

/// `mean(Y | treatment) - mean(Y | control)`.
pub fn tau_hat(arms: &[Arm], y: &[f64]) -> Result<f64> {
    if arms.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: arms.len(), got: y.len() });
    }
    let mut sum = [0.0; 2];
    let mut count = [0usize; 2];
    for (a, v) in arms.iter().zip(y) {
        sum[a.index()] += v;
        count[a.index()] += 1;
    }
    for a in [Arm::Control, Arm::Treatment] {
        if count[a.index()] == 0 {
            return Err(Error::EmptyArm(a.index()));
        }
    }
    Ok(sum[1] / count[1] as f64 - sum[0] / count[0] as f64)
}

/// The built-in simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Example {
    /// Linear signal, Gaussian covariates, `p = 10`.
    Ex1a,
    /// As `Ex1a` with `p = 150`.
    Ex1b,
    /// Linear signal with one indicator among four one-hot covariates.
    Ex2,
    /// Additive nonlinear signal.
    Ex3,
    /// Quadratic signal matching the mean/covariance feature map.
    Ex4,
    /// Pseudo-trial calibrated on a data table.
    Calibrated,
}

impl Example {
    pub const ALL: [Example; 6] = [
        Example::Ex1a,
        Example::Ex1b,
        Example::Ex2,
        Example::Ex3,
        Example::Ex4,
        Example::Calibrated,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Example::Ex1a => "1a",
            Example::Ex1b => "1b",
            Example::Ex2 => "2",
            Example::Ex3 => "3",
            Example::Ex4 => "4",
            Example::Calibrated => "calibrated",
        }
    }

    /// Default `(n, p)`.
    pub fn default_size(self) -> (usize, usize) {
        match self {
            Example::Ex1a => (120, 10),
            Example::Ex1b | Example::Ex2 => (120, 150),
            Example::Ex3 | Example::Ex4 => (300, 150),
            Example::Calibrated => (376, 57),
        }
    }
}

impl core::fmt::Display for Example {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.id())
    }
}

impl core::str::FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Example::ALL
            .into_iter()
            .find(|e| e.id().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Config(format!("unknown example `{t}` (expected 1a, 1b, 2, 3, 4 or calibrated)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateDesign {
    GaussianAr1 { corr: f64 },
    Mixed,
    /// A fixed table whose rows are shuffled per replication; the first `n`
    /// shuffled rows arrive in order.
    Table(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub covariates: CovariateDesign,
    pub model: OutcomeModel,
    pub true_set: SelectedSet,
}

impl Scenario {
    pub fn new(covariates: CovariateDesign, model: OutcomeModel) -> Self {
        let true_set = model.true_set();
        Self { covariates, model, true_set }
    }

    /// Simulated example with `p` covariates. The calibrated example needs a
    /// data table; see [`PseudoTrial::scenario`].
    pub fn example(example: Example, p: usize) -> Result<Self> {
        let ar1 = CovariateDesign::GaussianAr1 { corr: 0.5 };
        let linear = |tail: &[(usize, f64)]| -> Result<OutcomeModel> {
            if p < 5 {
                return Err(Error::Config(format!("example {example} needs p >= 5, got {p}")));
            }
            let mut beta = vec![0.0; p];
            beta[0] = 3.0;
            beta[1] = 1.5;
            beta[4] = 2.0;
            for &(j, b) in tail {
                beta[j] = b;
            }
            Ok(OutcomeModel::linear(beta))
        };
        let scenario = match example {
            Example::Ex1a | Example::Ex1b => Self::new(ar1, linear(&[])?),
            Example::Ex2 => {
                if p < 9 {
                    return Err(Error::Config(format!("example 2 needs p >= 9, got {p}")));
                }
                Self::new(CovariateDesign::Mixed, linear(&[(p - 4, 1.0)])?)
            }
            Example::Ex3 => Self::new(ar1, OutcomeModel::additive_nonlinear()),
            Example::Ex4 => Self::new(ar1, OutcomeModel::quadratic_phi()),
            Example::Calibrated => {
                return Err(Error::Config("the calibrated example is built from a data table".into()))
            }
        };
        scenario.model.validate(p)?;
        Ok(scenario)
    }

    pub fn draw_covariates<R: Rng + ?Sized>(&self, n: usize, p: usize, rng: &mut R) -> Result<Matrix> {
        match &self.covariates {
            CovariateDesign::GaussianAr1 { corr } => gen_gaussian_ar1(n, p, *corr, rng),
            CovariateDesign::Mixed => gen_mixed(n, p, rng),
            CovariateDesign::Table(table) => {
                if table.cols() != p {
                    return Err(Error::DimensionMismatch { expected: p, got: table.cols() });
                }
                if n > table.rows() {
                    return Err(Error::Config(format!(
                        "n = {n} exceeds the {} rows of the covariate table",
                        table.rows()
                    )));
                }
                let mut order: Vec<usize> = (0..table.rows()).collect();
                order.shuffle(rng);
                order.truncate(n);
                Ok(table.select_rows(&order))
            }
        }
    }
}

/// One replication: covariates, outcome noise and design randomness come from
/// separate streams keyed by `(config.seed, rep)`.
pub fn run_replication(config: &TrialConfig, scenario: &Scenario, rep: u64) -> Result<(TrialState, RunMetrics)> {
    config.validate()?;
    scenario.model.validate(config.p)?;
    let mut cov_rng = stream(config.seed, rep, StreamPurpose::Covariates);
    let x = scenario.draw_covariates(config.n, config.p, &mut cov_rng)?;
    let mut out_rng = stream(config.seed, rep, StreamPurpose::Outcomes);
    let model = &scenario.model;
    let mut oracle = |row: &[f64], arm: Arm| model.outcome(row, arm, &mut out_rng);
    let mut design = stream(config.seed, rep, StreamPurpose::Design);
    let state = run_trial(config, &mut RowCursor::new(&x), &mut oracle, &mut design)?;
    let metrics = report_metrics(&state, &scenario.true_set, &config.phi, config.pinv_tol)?;
    Ok((state, metrics))
}

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_SHARE: f64 = 0.01;

/// Aggregates over replications (one table row).
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub method: Method,
    pub example: String,
    pub n: usize,
    pub p: usize,
    pub batch: usize,
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
    pub imb_m: f64,
    pub dncm: f64,
    pub dnc: f64,
    pub imb_phi: f64,
    pub tau_mean: f64,
    /// `sqrt(n)` times the sample standard deviation of the estimates (0 for one replication).
    pub tau_sd_scaled: f64,
    pub wall_mean: f64,
    /// Per-batch means; empty for designs without selection.
    pub tpr_by_batch: Vec<f64>,
    pub fpr_by_batch: Vec<f64>,
}

impl ReplicationSummary {
    pub fn final_tpr(&self) -> Option<f64> {
        self.tpr_by_batch.last().copied()
    }

    pub fn final_fpr(&self) -> Option<f64> {
        self.fpr_by_batch.last().copied()
    }
}

/// Reduces per-replication results in the order given. Failed replications
/// are skipped and counted; more than [`MAX_FAILURE_SHARE`] of them is an error.
pub fn summarize(config: &TrialConfig, example: &str, records: &[Result<RunMetrics>]) -> Result<ReplicationSummary> {
    let ok: Vec<&RunMetrics> = records.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures = records.len() - ok.len();
    if records.is_empty() {
        return Err(Error::EmptyInput("no replications"));
    }
    if failures as f64 > MAX_FAILURE_SHARE * records.len() as f64 || ok.is_empty() {
        let first = records
            .iter()
            .find_map(|r| r.as_ref().err())
            .map_or_else(String::new, |e| e.to_string());
        return Err(Error::Replications(format!(
            "{failures} of {} replications failed for {} on example {example}; first error: {first}",
            records.len(),
            config.method
        )));
    }
    let r = ok.len() as f64;
    let mean_of = |f: &dyn Fn(&RunMetrics) -> f64| ok.iter().map(|m| f(m)).sum::<f64>() / r;
    let tau_mean = mean_of(&|m| m.tau_hat);
    let tau_sd = if ok.len() > 1 {
        libm::sqrt(ok.iter().map(|m| { let e = m.tau_hat - tau_mean; e * e }).sum::<f64>() / (r - 1.0))
    } else {
        0.0
    };
    let batches = ok.iter().map(|m| m.tpr.len()).min().unwrap_or(0);
    let by_batch = |f: &dyn Fn(&RunMetrics) -> &[f64]| -> Vec<f64> {
        (0..batches).map(|b| ok.iter().map(|m| f(m)[b]).sum::<f64>() / r).collect()
    };
    Ok(ReplicationSummary {
        method: config.method,
        example: example.into(),
        n: config.n,
        p: config.p,
        batch: config.batch,
        reps: ok.len(),
        failures,
        imb_m: mean_of(&|m| m.imb_m),
        dncm: mean_of(&|m| m.dncm),
        dnc: mean_of(&|m| m.dnc),
        imb_phi: mean_of(&|m| m.imb_phi),
        tau_mean,
        tau_sd_scaled: libm::sqrt(config.n as f64) * tau_sd,
        wall_mean: mean_of(&|m| m.wall_seconds),
        tpr_by_batch: by_batch(&|m| &m.tpr),
        fpr_by_batch: by_batch(&|m| &m.fpr),
    })
}

/// A named numeric table, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub headers: Vec<String>,
    pub values: Matrix,
}

impl DataTable {
    pub fn new(headers: Vec<String>, values: Matrix) -> Result<Self> {
        if headers.len() != values.cols() {
            return Err(Error::DimensionMismatch { expected: headers.len(), got: values.cols() });
        }
        Ok(Self { headers, values })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Calibration(format!("column `{name}` not found")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CalibrationForm {
    #[default]
    Linear,
    /// Adds squares of the non-binary model covariates and all pairwise
    /// interactions of the model covariates.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSpec {
    pub outcome: String,
    /// Covariates entering the outcome model.
    pub model_columns: Vec<String>,
    /// 0/1 arm column; without it both arms share one intercept.
    pub arm: Option<String>,
    pub form: CalibrationForm,
}

/// Covariate table plus the outcome model fitted on it.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTrial {
    /// Every column except the outcome and the arm, in table order.
    pub covariate_names: Vec<String>,
    pub covariates: Matrix,
    pub model: OutcomeModel,
    /// Names of the fitted terms, intercept and arm first.
    pub term_names: Vec<String>,
    pub coefficients: Vec<f64>,
}

impl PseudoTrial {
    pub fn scenario(&self) -> Scenario {
        Scenario::new(CovariateDesign::Table(self.covariates.clone()), self.model.clone())
    }
}

/// Least squares via modified Gram-Schmidt with one reorthogonalization pass.
/// Columns that are (numerically) combinations of earlier ones are reported by name.
pub fn least_squares(columns: &[Vec<f64>], names: &[String], y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    let m = columns.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: columns.iter().map(Vec::len).find(|&l| l != n).unwrap_or(0) });
    }
    if n < m + 2 {
        return Err(Error::Calibration(format!("{n} rows cannot fit {m} terms (need at least {})", m + 2)));
    }
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut r = Matrix::zeros(m, m);
    let mut collinear = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let original = libm::sqrt(dot(col, col));
        let mut v = col.clone();
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let c = dot(qi, &v);
                r.row_mut(i)[j] += c;
                v.iter_mut().zip(qi).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = libm::sqrt(dot(&v, &v));
        if !(norm > 1e-10 * original) {
            collinear.push(names[j].clone());
            q.push(vec![0.0; n]);
            continue;
        }
        r.row_mut(j)[j] = norm;
        v.iter_mut().for_each(|a| *a /= norm);
        q.push(v);
    }
    if !collinear.is_empty() {
        return Err(Error::Calibration(format!(
            "rank-deficient design; collinear columns: {}",
            collinear.join(", ")
        )));
    }
    let qty: Vec<f64> = q.iter().map(|qi| dot(qi, y)).collect();
    let mut beta = vec![0.0; m];
    for j in (0..m).rev() {
        let tail: f64 = (j + 1..m).map(|k| r.row(j)[k] * beta[k]).sum();
        beta[j] = (qty[j] - tail) / r.row(j)[j];
    }
    Ok(beta)
}

fn is_binary(values: &[f64]) -> bool {
    values.iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Fits the outcome model of `spec` by least squares and returns the
/// pseudo-trial that replays it with unit-variance noise.
pub fn calibrate_pseudo_trial(table: &DataTable, spec: &CalibrationSpec) -> Result<PseudoTrial> {
    let rows = table.values.rows();
    let outcome = table.column_index(&spec.outcome)?;
    let arm = spec.arm.as_deref().map(|a| table.column_index(a)).transpose()?;
    if spec.model_columns.is_empty() {
        return Err(Error::Calibration("no model covariates given".into()));
    }
    let covariate_cols: Vec<usize> = (0..table.headers.len())
        .filter(|&j| j != outcome && Some(j) != arm)
        .collect();
    let covariate_names: Vec<String> = covariate_cols.iter().map(|&j| table.headers[j].clone()).collect();
    let mut model_idx = Vec::new();
    for name in &spec.model_columns {
        let pos = covariate_names
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Calibration(format!("model covariate `{name}` is not a covariate column")))?;
        if model_idx.contains(&pos) {
            return Err(Error::Calibration(format!("model covariate `{name}` listed twice")));
        }
        model_idx.push(pos);
    }
    let covariates = table.values.select_columns(&covariate_cols);
    let column = |j: usize| covariates.column(j);

    let mut names = vec![String::from("(intercept)")];
    let mut columns = vec![vec![1.0; rows]];
    if let Some(a) = arm {
        let t = table.values.column(a);
        if !is_binary(&t) {
            return Err(Error::Calibration(format!(
                "arm column `{}` must hold only 0 and 1",
                table.headers[a]
            )));
        }
        names.push(table.headers[a].clone());
        columns.push(t);
    }
    for &j in &model_idx {
        names.push(covariate_names[j].clone());
        columns.push(column(j));
    }
    let mut products = Vec::new();
    if spec.form == CalibrationForm::Quadratic {
        for (u, &a) in model_idx.iter().enumerate() {
            let xa = column(a);
            if !is_binary(&xa) {
                products.push((a, a));
            }
            for &b in &model_idx[u + 1..] {
                products.push((a, b));
            }
        }
        for &(a, b) in &products {
            let (xa, xb) = (column(a), column(b));
            names.push(if a == b {
                format!("{}^2", covariate_names[a])
            } else {
                format!("{}*{}", covariate_names[a], covariate_names[b])
            });
            columns.push(xa.iter().zip(&xb).map(|(u, v)| u * v).collect());
        }
    }
    let y = table.values.column(outcome);
    let coefficients = least_squares(&columns, &names, &y)?;

    let offset = if arm.is_some() { 2 } else { 1 };
    let mu0 = coefficients[0];
    let mu1 = if arm.is_some() { mu0 + coefficients[1] } else { mu0 };
    let linear = model_idx
        .iter()
        .zip(&coefficients[offset..])
        .map(|(&j, &c)| (j, c))
        .collect();
    let products = products
        .iter()
        .zip(&coefficients[offset + model_idx.len()..])
        .map(|(&(a, b), &c)| (a, b, c))
        .collect();
    let model = OutcomeModel {
        signal: Signal::Polynomial { linear, products },
        mu: [mu0, mu1],
        noise_sd: 1.0,
    };
    Ok(PseudoTrial {
        covariate_names,
        covariates,
        model,
        term_names: names,
        coefficients,
    })
}

/// Number of rows and covariates of the stand-in table.
pub const STANDIN_ROWS: usize = 376;
pub const STANDIN_COVARIATES: usize = 57;

/// A synthetic table shaped like a two-arm depression trial: outcome
/// `FinalHAMD`, arm `TREAT`, and 57 covariates of which `RACE` (binary) and
/// `HAMD24` (baseline score) drive the outcome. The rest mix binary flags,
/// ordinal scores and continuous measurements.
pub fn synthetic_standin<R: Rng + ?Sized>(rng: &mut R) -> Result<DataTable> {
    let mut headers = vec![
        String::from("FinalHAMD"),
        String::from("TREAT"),
        String::from("RACE"),
        String::from("HAMD24"),
    ];
    for j in 3..=STANDIN_COVARIATES {
        headers.push(format!("X{j:02}"));
    }
    let mut treat: Vec<f64> = (0..STANDIN_ROWS).map(|i| (i % 2) as f64).collect();
    treat.shuffle(rng);
    let mut values = Matrix::with_cols(headers.len());
    let mut row = vec![0.0; headers.len()];
    for &t in &treat {
        let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
        let race = f64::from(u8::from(rng.random_bool(0.85)));
        let hamd24 = libm::round(26.0 + 4.5 * normal(rng)).clamp(14.0, 44.0);
        for (k, slot) in row[4..].iter_mut().enumerate() {
            *slot = match k % 3 {
                0 => f64::from(u8::from(rng.random_bool(0.3 + 0.01 * (k % 20) as f64))),
                1 => libm::round(10.0 + 3.0 * normal(rng)).max(0.0),
                _ => libm::round(100.0 * (normal(rng) + 0.1 * hamd24)) / 100.0,
            };
        }
        let final_hamd = 17.0 - 4.0 * t - 2.5 * race + 0.45 * (hamd24 - 26.0) + 5.0 * normal(rng);
        row[0] = libm::round(final_hamd.max(0.0) * 100.0) / 100.0;
        row[1] = t;
        row[2] = race;
        row[3] = hamd24;
        values.push_row(&row)?;
    }
    DataTable::new(headers, values)
}
