//! Per-arm regularized regression and the support-intersection rule.

mod additive;
mod cv;
mod lasso;

use alloc::vec::Vec;

use rand::Rng;

use crate::numerics::Matrix;
use crate::{Arm, Error};

pub use additive::{
    additive_fit, additive_path, additive_path_until, basis_expand, AdditiveDesign, AdditiveFit,
    AdditiveSolver, BasisSpec, ScalarBasis, ADDITIVE_MAX_SWEEPS, ADDITIVE_TOL, DEFAULT_DEGREE,
};
pub use cv::{
    cv_additive, cv_lambda, cv_lasso, fold_assignment, lambda_grid, CvOutcome, CvRule, CvSettings,
    DEFAULT_CV_TOL,
};
pub use lasso::{
    lasso_fit, lasso_path, lasso_path_until, LassoDesign, LassoFit, LassoSolver, LASSO_MAX_SWEEPS,
    LASSO_TOL,
};

/// Default threshold below which a coefficient counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Fewest patients an arm needs before it is refit.
pub const MIN_ARM_SIZE: usize = 3;

/// A fitted regression that can score a covariate row.
pub trait Predict {
    fn predict(&self, row: &[f64]) -> f64;
}

/// Sorted set of covariate indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SelectedSet {
    indices: Vec<usize>,
}

impl SelectedSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sorts and deduplicates `indices`.
    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    /// `{0, ..., p - 1}`.
    pub fn all(p: usize) -> Self {
        Self {
            indices: (0..p).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// Largest index plus one (0 when empty).
    pub fn bound(&self) -> usize {
        self.indices.last().map_or(0, |j| j + 1)
    }

    pub fn intersection(&self, other: &SelectedSet) -> SelectedSet {
        let (mut a, mut b) = (self.indices.iter().peekable(), other.indices.iter().peekable());
        let mut out = Vec::new();
        while let (Some(&&x), Some(&&y)) = (a.peek(), b.peek()) {
            match x.cmp(&y) {
                core::cmp::Ordering::Less => {
                    a.next();
                }
                core::cmp::Ordering::Greater => {
                    b.next();
                }
                core::cmp::Ordering::Equal => {
                    out.push(x);
                    a.next();
                    b.next();
                }
            }
        }
        SelectedSet { indices: out }
    }

    /// Copies the selected coordinates of `row`.
    pub fn restrict(&self, row: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&j| row[j]).collect()
    }
}

/// Indices whose coefficient exceeds `zero_tol` in magnitude.
pub fn support(coefficients: &[f64], zero_tol: f64) -> SelectedSet {
    SelectedSet {
        indices: coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| b.abs() > zero_tol)
            .map(|(j, _)| j)
            .collect(),
    }
}

pub fn intersect_supports(a0: &SelectedSet, a1: &SelectedSet) -> SelectedSet {
    a0.intersection(a1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionMode {
    /// Linear lasso.
    #[default]
    Lasso,
    /// Group lasso over a per-covariate polynomial basis.
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionSettings {
    pub mode: SelectionMode,
    pub cv: CvSettings,
    pub standardize: bool,
    pub degree: usize,
    pub zero_tol: f64,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        Self {
            mode: SelectionMode::Lasso,
            cv: CvSettings::default(),
            standardize: true,
            degree: DEFAULT_DEGREE,
            zero_tol: DEFAULT_ZERO_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArmFit {
    Lasso(LassoFit),
    Additive(AdditiveFit),
}

impl ArmFit {
    pub fn lambda(&self) -> f64 {
        match self {
            ArmFit::Lasso(f) => f.lambda,
            ArmFit::Additive(f) => f.lambda,
        }
    }

    pub fn intercept(&self) -> f64 {
        match self {
            ArmFit::Lasso(f) => f.intercept,
            ArmFit::Additive(f) => f.intercept,
        }
    }

    /// Selected covariates: nonzero coefficients, or nonzero block norms.
    pub fn support(&self, zero_tol: f64) -> SelectedSet {
        match self {
            ArmFit::Lasso(f) => support(&f.coefficients, zero_tol),
            ArmFit::Additive(f) => support(&f.group_norms, zero_tol),
        }
    }
}

impl Predict for ArmFit {
    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            ArmFit::Lasso(f) => f.predict(row),
            ArmFit::Additive(f) => f.predict(row),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Indexed by [`Arm::index`]; `None` when the refit was skipped.
    pub fits: [Option<ArmFit>; 2],
    pub supports: [SelectedSet; 2],
    pub selected: SelectedSet,
    /// Set when the previous selection was carried over.
    pub stale: bool,
    /// Why the refit was skipped, if it failed rather than lacked data.
    pub failure: Option<Error>,
    pub folds_reduced: bool,
}

impl SelectionResult {
    fn carry_over(previous: &SelectedSet, failure: Option<Error>) -> Self {
        Self {
            fits: [None, None],
            supports: [SelectedSet::new(), SelectedSet::new()],
            selected: previous.clone(),
            stale: true,
            failure,
            folds_reduced: false,
        }
    }
}

fn fit_arm<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[f64],
    arm: Arm,
    settings: &SelectionSettings,
    rng: &mut R,
) -> crate::Result<(ArmFit, bool)> {
    Ok(match settings.mode {
        SelectionMode::Lasso => {
            let (cv, mut fit) = cv_lasso(x, y, &settings.cv, settings.standardize, rng)?;
            fit.arm = Some(arm);
            (ArmFit::Lasso(fit), cv.folds_reduced)
        }
        SelectionMode::Additive => {
            let (cv, mut fit) = cv_additive(x, y, &settings.cv, settings.degree, rng)?;
            fit.arm = Some(arm);
            (ArmFit::Additive(fit), cv.folds_reduced)
        }
    })
}

/// Refits each arm on its own patients and intersects the supports.
///
/// `x`, `arms` and `y` cover the patients assigned so far. The control arm
/// is fit first, then the treatment arm, both drawing fold shuffles from
/// `rng`. An arm with fewer than [`MIN_ARM_SIZE`] patients, or a failed fit,
/// leaves `previous` in place with the stale flag set.
pub fn arcs_select<R: Rng + ?Sized>(
    x: &Matrix,
    arms: &[Arm],
    y: &[f64],
    settings: &SelectionSettings,
    previous: &SelectedSet,
    rng: &mut R,
) -> SelectionResult {
    let k = arms.len();
    if x.rows() != k || y.len() != k {
        let got = if x.rows() != k { x.rows() } else { y.len() };
        return SelectionResult::carry_over(previous, Some(Error::DimensionMismatch { expected: k, got }));
    }
    let rows_of = |arm: Arm| -> Vec<usize> { (0..k).filter(|&i| arms[i] == arm).collect() };
    let groups = [rows_of(Arm::Control), rows_of(Arm::Treatment)];
    if groups.iter().any(|g| g.len() < MIN_ARM_SIZE) {
        return SelectionResult::carry_over(previous, None);
    }

    let mut fits: [Option<ArmFit>; 2] = [None, None];
    let mut supports = [SelectedSet::new(), SelectedSet::new()];
    let mut folds_reduced = false;
    for arm in [Arm::Control, Arm::Treatment] {
        let rows = &groups[arm.index()];
        let xa = x.select_rows(rows);
        let ya: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        match fit_arm(&xa, &ya, arm, settings, rng) {
            Ok((fit, reduced)) => {
                supports[arm.index()] = fit.support(settings.zero_tol);
                fits[arm.index()] = Some(fit);
                folds_reduced |= reduced;
            }
            Err(e) => return SelectionResult::carry_over(previous, Some(e)),
        }
    }
    let selected = intersect_supports(&supports[0], &supports[1]);
    SelectionResult {
        fits,
        supports,
        selected,
        stale: false,
        failure: None,
        folds_reduced,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn support_cases() {
        assert_eq!(support(&[0.0, 3.0, -1.5, 0.0], 1e-8).indices(), &[1, 2]);
        assert!(support(&[0.0; 4], 1e-8).is_empty());
        assert_eq!(support(&[1e-12, 0.2], 1e-8).indices(), &[1]);
    }

    #[test]
    fn intersection_cases() {
        let a = SelectedSet::from_indices(vec![5, 1, 2]);
        let b = SelectedSet::from_indices(vec![2, 7, 5]);
        assert_eq!(intersect_supports(&a, &b).indices(), &[2, 5]);
        let one = SelectedSet::from_indices(vec![1]);
        assert!(intersect_supports(&one, &SelectedSet::new()).is_empty());
        assert_eq!(intersect_supports(&a, &a), a);
    }

    #[test]
    fn from_indices_normalizes() {
        let s = SelectedSet::from_indices(vec![3, 1, 3, 0]);
        assert_eq!(s.indices(), &[0, 1, 3]);
        assert!(s.contains(3) && !s.contains(2));
        assert_eq!(s.bound(), 4);
        assert_eq!(s.restrict(&[9.0, 8.0, 7.0, 6.0]), vec![9.0, 8.0, 6.0]);
    }

    #[test]
    fn small_arm_keeps_previous_selection() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0]]).unwrap();
        let arms = [Arm::Treatment, Arm::Treatment, Arm::Treatment, Arm::Control, Arm::Control];
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let previous = SelectedSet::from_indices(vec![0]);
        let out = arcs_select(
            &x,
            &arms,
            &y,
            &SelectionSettings::default(),
            &previous,
            &mut StdRng::seed_from_u64(0),
        );
        assert!(out.stale);
        assert!(out.failure.is_none());
        assert_eq!(out.selected, previous);
    }
}
