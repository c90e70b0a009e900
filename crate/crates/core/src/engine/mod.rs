//! The randomization procedures.
//!
//! Every design is a single-threaded state machine driven by a covariate
//! source, an outcome oracle and one design RNG. The design RNG is consumed
//! in the order events happen: one uniform per initial pair orientation, one
//! per coin toss, then whatever the cross-validation shuffles need at each
//! refit.

mod rr;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::balance::{is_tie, ImbalanceState, MahalanobisForm, PhiKind, PhiSpec};
use crate::numerics::{Matrix, DEFAULT_PINV_TOL};
use crate::selection::{arcs_select, SelectedSet, SelectionMode, SelectionSettings};
use crate::{Arm, Error, Result};

pub use rr::{chi2_cdf, chi2_quantile, run_rr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Complete randomization.
    Cr,
    /// Rerandomization with a Mahalanobis acceptance threshold.
    Rr,
    /// Pairwise Mahalanobis design on all covariates.
    Arm,
    /// Mean/covariance imbalance on all covariates.
    Cov,
    ArcsM,
    ArcsCov,
    ArcsMAdd,
    ArcsCovAdd,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Cr,
        Method::Rr,
        Method::Arm,
        Method::Cov,
        Method::ArcsM,
        Method::ArcsCov,
        Method::ArcsMAdd,
        Method::ArcsCovAdd,
    ];

    /// Display name, e.g. `ARCS-COV-add`.
    pub fn name(self) -> &'static str {
        match self {
            Method::Cr => "CR",
            Method::Rr => "RR",
            Method::Arm => "ARM",
            Method::Cov => "COV",
            Method::ArcsM => "ARCS-M",
            Method::ArcsCov => "ARCS-COV",
            Method::ArcsMAdd => "ARCS-M-add",
            Method::ArcsCovAdd => "ARCS-COV-add",
        }
    }

    /// Lower-case key used on the command line.
    pub fn key(self) -> &'static str {
        match self {
            Method::Cr => "cr",
            Method::Rr => "rr",
            Method::Arm => "arm",
            Method::Cov => "cov",
            Method::ArcsM => "arcs-m",
            Method::ArcsCov => "arcs-cov",
            Method::ArcsMAdd => "arcs-m-add",
            Method::ArcsCovAdd => "arcs-cov-add",
        }
    }

    pub fn selection_mode(self) -> Option<SelectionMode> {
        match self {
            Method::ArcsM | Method::ArcsCov => Some(SelectionMode::Lasso),
            Method::ArcsMAdd | Method::ArcsCovAdd => Some(SelectionMode::Additive),
            _ => None,
        }
    }

    pub fn is_arcs(self) -> bool {
        self.selection_mode().is_some()
    }

    /// Assigns in pairs with the Mahalanobis criterion.
    pub fn is_pairwise(self) -> bool {
        matches!(self, Method::Arm | Method::ArcsM | Method::ArcsMAdd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Method::ALL
            .into_iter()
            .find(|m| m.key().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Config(format!("unknown method `{t}`")))
    }
}

/// Every knob of one design run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub n: usize,
    pub p: usize,
    /// Size of the initial, pairwise-randomized stage.
    pub n0: usize,
    /// Patients per batch between refits.
    pub batch: usize,
    pub rho: f64,
    /// Mean/covariance feature map used by the COV family and for reporting.
    pub phi: PhiSpec,
    pub method: Method,
    /// Selection settings; the mode is dictated by the method.
    pub selection: SelectionSettings,
    pub rr_accept_prob: f64,
    pub rr_max_draws: usize,
    pub pinv_tol: f64,
    pub seed: u64,
}

impl TrialConfig {
    pub fn new(method: Method, n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            n0: 30,
            batch: 10,
            rho: 0.85,
            phi: PhiSpec::default(),
            method,
            selection: SelectionSettings::default(),
            rr_accept_prob: 0.001,
            rr_max_draws: 1_000_000,
            pinv_tol: DEFAULT_PINV_TOL,
            seed: 42,
        }
    }

    /// Selection settings with the mode the method calls for.
    pub fn selection_settings(&self) -> SelectionSettings {
        SelectionSettings {
            mode: self.method.selection_mode().unwrap_or(self.selection.mode),
            ..self.selection
        }
    }

    /// Number of batches after the initial stage.
    pub fn batches(&self) -> usize {
        if self.method.is_arcs() && self.batch > 0 {
            (self.n - self.n0) / self.batch
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n < 2 {
            return fail(format!("n must be at least 2, got {}", self.n));
        }
        if self.p == 0 {
            return fail("p must be positive".into());
        }
        if !(self.rho > 0.5 && self.rho < 1.0) {
            return fail(format!("rho must lie in (0.5, 1), got {}", self.rho));
        }
        if self.phi.kind() != PhiKind::Cov {
            return fail("phi must use the mean/covariance feature map".into());
        }
        if !(self.pinv_tol > 0.0 && self.pinv_tol.is_finite()) {
            return fail(format!("pinv tolerance must be positive, got {}", self.pinv_tol));
        }
        if self.method.is_pairwise() && self.n % 2 != 0 {
            return fail(format!("{} assigns in pairs, so n must be even (n = {})", self.method, self.n));
        }
        if self.method.is_arcs() {
            if self.n0 % 2 != 0 {
                return fail(format!("N0 must be even, got {}", self.n0));
            }
            if self.n0 > self.n {
                return fail(format!("N0 = {} exceeds n = {}", self.n0, self.n));
            }
            if self.batch == 0 {
                return fail("batch size N must be positive".into());
            }
            if (self.n - self.n0) % self.batch != 0 {
                return fail(format!(
                    "n - N0 must be divisible by N (n = {}, N0 = {}, N = {})",
                    self.n, self.n0, self.batch
                ));
            }
            if self.method.is_pairwise() && self.batch % 2 != 0 {
                return fail(format!("{} needs an even batch size N, got {}", self.method, self.batch));
            }
            let cv = &self.selection.cv;
            if cv.folds < 2
                || cv.grid_size == 0
                || !(cv.min_ratio > 0.0 && cv.min_ratio < 1.0)
                || !(cv.tol > 0.0 && cv.tol.is_finite())
            {
                return fail(
                    "cross-validation needs >= 2 folds, a nonempty grid, min ratio in (0, 1) and a positive tolerance"
                        .into(),
                );
            }
            if self.method.selection_mode() == Some(SelectionMode::Additive)
                && !(2..=4).contains(&self.selection.degree)
            {
                return fail(format!("basis degree must be 2, 3 or 4, got {}", self.selection.degree));
            }
        }
        if self.method == Method::Rr {
            if self.n % 2 != 0 {
                return fail(format!("RR draws balanced assignments, so n must be even (n = {})", self.n));
            }
            if self.p >= self.n {
                return fail(format!(
                    "RR needs p < n (p = {}, n = {}): with at least as many covariates as patients \
                     every balanced assignment has the same Mahalanobis statistic, so no draw can \
                     pass the acceptance threshold",
                    self.p, self.n
                ));
            }
            if !(self.rr_accept_prob > 0.0 && self.rr_accept_prob < 1.0) {
                return fail(format!(
                    "RR acceptance probability must lie in (0, 1), got {}",
                    self.rr_accept_prob
                ));
            }
            if self.rr_max_draws == 0 {
                return fail("RR needs a positive draw limit".into());
            }
        }
        Ok(())
    }
}

/// Selection in force after a refit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionSnapshot {
    /// 0 for the initial stage.
    pub batch: usize,
    pub selected: SelectedSet,
    /// The refit was skipped or failed and the previous set carried over.
    pub stale: bool,
}

/// Trial history: revealed covariates, assignments, outcomes and selections.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialState {
    pub covariates: Matrix,
    pub assignments: Vec<Arm>,
    pub outcomes: Vec<f64>,
    pub selected: SelectedSet,
    /// Running imbalance for the COV family.
    pub imbalance: Option<ImbalanceState>,
    pub batch_index: usize,
    pub selection_history: Vec<SelectionSnapshot>,
}

impl TrialState {
    pub fn new(p: usize) -> Self {
        Self {
            covariates: Matrix::with_cols(p),
            assignments: Vec::new(),
            outcomes: Vec::new(),
            selected: SelectedSet::new(),
            imbalance: None,
            batch_index: 0,
            selection_history: Vec::new(),
        }
    }

    pub fn assigned(&self) -> usize {
        self.assignments.len()
    }

    /// `[n0, n1]`.
    pub fn counts(&self) -> [usize; 2] {
        let n1 = self
            .assignments
            .iter()
            .filter(|a| **a == Arm::Treatment)
            .count();
        [self.assignments.len() - n1, n1]
    }

    fn record(&mut self, row: &[f64], arm: Arm, outcome: f64) -> Result<()> {
        self.covariates.push_row(row)?;
        self.assignments.push(arm);
        self.outcomes.push(outcome);
        Ok(())
    }

    fn history(&self) -> impl Iterator<Item = (&[f64], Arm)> + '_ {
        self.covariates
            .row_iter()
            .zip(self.assignments.iter().copied())
    }
}

/// Supplies covariate rows in arrival order.
pub trait CovariateSource {
    fn next_row(&mut self) -> Result<Vec<f64>>;
}

/// Walks the rows of a pre-generated matrix.
pub struct RowCursor<'a> {
    rows: &'a Matrix,
    next: usize,
}

impl<'a> RowCursor<'a> {
    pub fn new(rows: &'a Matrix) -> Self {
        Self { rows, next: 0 }
    }
}

impl CovariateSource for RowCursor<'_> {
    fn next_row(&mut self) -> Result<Vec<f64>> {
        if self.next >= self.rows.rows() {
            return Err(Error::EmptyInput("covariate source exhausted"));
        }
        self.next += 1;
        Ok(self.rows.row(self.next - 1).to_vec())
    }
}

/// Observed outcome of a patient with covariates `x` on `arm`.
pub trait OutcomeOracle {
    fn outcome(&mut self, x: &[f64], arm: Arm) -> f64;
}

impl<F: FnMut(&[f64], Arm) -> f64> OutcomeOracle for F {
    fn outcome(&mut self, x: &[f64], arm: Arm) -> f64 {
        self(x, arm)
    }
}

/// Efron-style biased coin.
///
/// `delta = Imb(1) - Imb(0)`. A single uniform `u` is drawn: for `delta != 0`
/// the arm with the smaller imbalance is chosen iff `u < rho`; for a tie the
/// treatment arm is chosen iff `u < 0.5`.
pub fn biased_coin<R: Rng + ?Sized>(delta: f64, rho: f64, rng: &mut R) -> Result<Arm> {
    if !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("imbalance difference is {delta}")));
    }
    if !(rho > 0.5 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0.5, 1), got {rho}")));
    }
    let u: f64 = rng.random();
    Ok(if delta == 0.0 {
        Arm::from_bit(u < 0.5)
    } else {
        let preferred = if delta < 0.0 { Arm::Treatment } else { Arm::Control };
        if u < rho {
            preferred
        } else {
            preferred.other()
        }
    })
}

/// Runs the design named by `config.method`.
pub fn run_trial<S, O, R>(config: &TrialConfig, source: &mut S, oracle: &mut O, rng: &mut R) -> Result<TrialState>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    match config.method {
        Method::Cr => run_cr(config, source, oracle, rng),
        Method::Rr => run_rr(config, source, oracle, rng),
        Method::Arm => run_arm(config, source, oracle, rng),
        Method::Cov => run_cov(config, source, oracle, rng),
        Method::ArcsCov | Method::ArcsCovAdd => run_arcs(config, source, oracle, rng),
        Method::ArcsM | Method::ArcsMAdd => run_arcs_m(config, source, oracle, rng),
    }
}

pub fn run_cr<S, O, R>(config: &TrialConfig, source: &mut S, oracle: &mut O, rng: &mut R) -> Result<TrialState>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    let mut state = TrialState::new(config.p);
    for _ in 0..config.n {
        let row = source.next_row()?;
        let arm = Arm::from_bit(rng.random::<f64>() < 0.5);
        let y = oracle.outcome(&row, arm);
        state.record(&row, arm, y)?;
    }
    Ok(state)
}

/// ARCS with the running mean/covariance imbalance (ARCS-COV, ARCS-COV-add).
pub fn run_arcs<S, O, R>(config: &TrialConfig, source: &mut S, oracle: &mut O, rng: &mut R) -> Result<TrialState>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    if !config.method.is_arcs() || config.method.is_pairwise() {
        return Err(Error::Config(format!("{} is not a sequential ARCS method", config.method)));
    }
    run_sequential(config, None, source, oracle, rng)
}

/// The mean/covariance design on all covariates, without selection.
pub fn run_cov<S, O, R>(config: &TrialConfig, source: &mut S, oracle: &mut O, rng: &mut R) -> Result<TrialState>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    run_sequential(config, Some(SelectedSet::all(config.p)), source, oracle, rng)
}

/// ARCS with pairwise Mahalanobis assignment (ARCS-M, ARCS-M-add).
pub fn run_arcs_m<S, O, R>(config: &TrialConfig, source: &mut S, oracle: &mut O, rng: &mut R) -> Result<TrialState>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    if !config.method.is_arcs() || !config.method.is_pairwise() {
        return Err(Error::Config(format!("{} is not a pairwise ARCS method", config.method)));
    }
    run_pairwise(config, None, source, oracle, rng)
}

/// The pairwise Mahalanobis design on all covariates, without selection.
pub fn run_arm<S, O, R>(config: &TrialConfig, source: &mut S, oracle: &mut O, rng: &mut R) -> Result<TrialState>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    run_pairwise(config, Some(SelectedSet::all(config.p)), source, oracle, rng)
}

/// Pairwise design with the selection pinned to `fixed`: every pair goes
/// through the coin and nothing is refit. `run_arm` is this with all
/// covariates.
pub fn run_pairwise_fixed<S, O, R>(
    config: &TrialConfig,
    fixed: SelectedSet,
    source: &mut S,
    oracle: &mut O,
    rng: &mut R,
) -> Result<TrialState>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    if config.n % 2 != 0 {
        return Err(Error::Config(format!("pairwise assignment needs even n, got {}", config.n)));
    }
    if fixed.bound() > config.p {
        return Err(Error::Config("fixed selection exceeds p".into()));
    }
    run_pairwise(config, Some(fixed), source, oracle, rng)
}

fn initial_pairs<S, O, R>(
    state: &mut TrialState,
    pairs: usize,
    source: &mut S,
    oracle: &mut O,
    rng: &mut R,
) -> Result<()>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    for _ in 0..pairs {
        let first = source.next_row()?;
        let second = source.next_row()?;
        let arm = Arm::from_bit(rng.random::<f64>() < 0.5);
        let y = oracle.outcome(&first, arm);
        state.record(&first, arm, y)?;
        let y = oracle.outcome(&second, arm.other());
        state.record(&second, arm.other(), y)?;
    }
    Ok(())
}

/// Refits the selection at the end of batch `batch`; returns whether it changed.
fn refit<R: Rng + ?Sized>(state: &mut TrialState, batch: usize, settings: &SelectionSettings, rng: &mut R) -> bool {
    let result = arcs_select(
        &state.covariates,
        &state.assignments,
        &state.outcomes,
        settings,
        &state.selected,
        rng,
    );
    let changed = result.selected != state.selected;
    state.selected = result.selected;
    state.batch_index = batch;
    state.selection_history.push(SelectionSnapshot {
        batch,
        selected: state.selected.clone(),
        stale: result.stale,
    });
    changed
}

fn assign_sequential<S, O, R>(
    state: &mut TrialState,
    imbalance: &mut ImbalanceState,
    phi: &mut Vec<f64>,
    rho: f64,
    source: &mut S,
    oracle: &mut O,
    rng: &mut R,
) -> Result<()>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    let row = source.next_row()?;
    imbalance.phi_into(&row, phi);
    let delta = imbalance.decision_delta(phi)?;
    let arm = biased_coin(delta, rho, rng)?;
    imbalance.update(arm, phi)?;
    let y = oracle.outcome(&row, arm);
    state.record(&row, arm, y)
}

fn run_sequential<S, O, R>(
    config: &TrialConfig,
    fixed: Option<SelectedSet>,
    source: &mut S,
    oracle: &mut O,
    rng: &mut R,
) -> Result<TrialState>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    let mut state = TrialState::new(config.p);
    let mut phi = Vec::new();
    match fixed {
        Some(selected) => {
            state.selected = selected.clone();
            let mut imbalance = ImbalanceState::new(config.phi, selected)?;
            for _ in 0..config.n {
                assign_sequential(&mut state, &mut imbalance, &mut phi, config.rho, source, oracle, rng)?;
            }
            state.imbalance = Some(imbalance);
        }
        None => {
            let settings = config.selection_settings();
            initial_pairs(&mut state, config.n0 / 2, source, oracle, rng)?;
            refit(&mut state, 0, &settings, rng);
            let mut imbalance =
                ImbalanceState::from_history(config.phi, state.selected.clone(), state.history())?;
            for b in 1..=config.batches() {
                for _ in 0..config.batch {
                    assign_sequential(&mut state, &mut imbalance, &mut phi, config.rho, source, oracle, rng)?;
                }
                if refit(&mut state, b, &settings, rng) {
                    imbalance =
                        ImbalanceState::from_history(config.phi, state.selected.clone(), state.history())?;
                }
            }
            state.imbalance = Some(imbalance);
        }
    }
    Ok(state)
}

fn assign_pair<S, O, R>(
    state: &mut TrialState,
    config: &TrialConfig,
    source: &mut S,
    oracle: &mut O,
    rng: &mut R,
) -> Result<()>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    let first = source.next_row()?;
    let second = source.next_row()?;
    let selected = &state.selected;
    let mut x = Matrix::with_cols(selected.len());
    for row in state.covariates.row_iter() {
        x.push_row(&selected.restrict(row))?;
    }
    x.push_row(&selected.restrict(&first))?;
    x.push_row(&selected.restrict(&second))?;
    let form = MahalanobisForm::new(&x, config.pinv_tol)?;

    let mut arms = state.assignments.clone();
    arms.push(Arm::Treatment);
    arms.push(Arm::Control);
    let imb1 = form.value(&arms)?;
    let k = arms.len();
    arms.swap(k - 2, k - 1);
    let imb0 = form.value(&arms)?;
    let delta = if is_tie(imb1, imb0) { 0.0 } else { imb1 - imb0 };

    let arm = biased_coin(delta, config.rho, rng)?;
    let y = oracle.outcome(&first, arm);
    state.record(&first, arm, y)?;
    let y = oracle.outcome(&second, arm.other());
    state.record(&second, arm.other(), y)
}

fn run_pairwise<S, O, R>(
    config: &TrialConfig,
    fixed: Option<SelectedSet>,
    source: &mut S,
    oracle: &mut O,
    rng: &mut R,
) -> Result<TrialState>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    let mut state = TrialState::new(config.p);
    match fixed {
        Some(selected) => {
            state.selected = selected;
            for _ in 0..config.n / 2 {
                assign_pair(&mut state, config, source, oracle, rng)?;
            }
        }
        None => {
            let settings = config.selection_settings();
            initial_pairs(&mut state, config.n0 / 2, source, oracle, rng)?;
            refit(&mut state, 0, &settings, rng);
            for b in 1..=config.batches() {
                for _ in 0..config.batch / 2 {
                    assign_pair(&mut state, config, source, oracle, rng)?;
                }
                refit(&mut state, b, &settings, rng);
            }
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn method_keys_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.key().parse::<Method>().unwrap(), m);
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("arcs".parse::<Method>().is_err());
    }

    #[test]
    fn divisibility_is_validated() {
        let mut c = TrialConfig::new(Method::ArcsCov, 121, 10);
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("n = 121") && err.contains("N0 = 30") && err.contains("N = 10"));
        c.n = 120;
        assert!(c.validate().is_ok());
        c.n0 = 31;
        assert!(c.validate().is_err());
        let mut m = TrialConfig::new(Method::ArcsM, 120, 10);
        m.batch = 5;
        m.n = 125;
        assert!(m.validate().is_err());
        let mut r = TrialConfig::new(Method::Rr, 120, 150);
        assert!(r.validate().is_err());
        r.p = 10;
        assert!(r.validate().is_ok());
    }

    #[test]
    fn coin_rejects_bad_input() {
        let mut rng = StdRng::seed_from_u64(0);
        assert!(biased_coin(f64::NAN, 0.85, &mut rng).is_err());
        assert!(biased_coin(1.0, 0.4, &mut rng).is_err());
    }

    #[test]
    fn cursor_runs_dry() {
        let m = Matrix::from_rows(&[[1.0]]).unwrap();
        let mut c = RowCursor::new(&m);
        assert_eq!(c.next_row().unwrap(), vec![1.0]);
        assert!(c.next_row().is_err());
    }
}
