//! Imbalance measures: feature maps, the running imbalance vector and the
//! Mahalanobis criterion used by the pairwise designs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{
    certified_inverse_factor, column_means, dot, lower_mul_vec, pinv, sample_cov, symmetric_eigen,
    CovDenominator, Matrix,
};
use crate::engine::TrialState;
use crate::selection::SelectedSet;
use crate::simulate::tau_hat;
use crate::{Arm, Error, Result};

/// Which feature map a weight vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiKind {
    /// `(sqrt(w0), sqrt(w1) x, sqrt(w2) vec(x x^T))`.
    Cov,
    /// `(sqrt(w0), sqrt(w1) F x)` with `F^T F` the precision matrix.
    Mahalanobis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSpec {
    kind: PhiKind,
    weights: [f64; 3],
}

impl PhiSpec {
    pub fn cov(w0: f64, w1: f64, w2: f64) -> Result<Self> {
        Self::checked(PhiKind::Cov, [w0, w1, w2])
    }

    pub fn mahalanobis(w0: f64, w1: f64) -> Result<Self> {
        Self::checked(PhiKind::Mahalanobis, [w0, w1, 0.0])
    }

    fn checked(kind: PhiKind, weights: [f64; 3]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!(
                "weights must be finite and nonnegative, got {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("weights must sum to 1, got {total}")));
        }
        Ok(Self { kind, weights })
    }

    pub fn kind(&self) -> PhiKind {
        self.kind
    }

    /// `(w0, w1, w2)`; `w2` is 0 for the Mahalanobis family.
    pub fn weights(&self) -> [f64; 3] {
        self.weights
    }

    /// Length of the feature vector for `s` selected covariates.
    pub fn dim(&self, s: usize) -> usize {
        match self.kind {
            PhiKind::Cov => 1 + s + s * s,
            PhiKind::Mahalanobis => 1 + s,
        }
    }
}

impl Default for PhiSpec {
    fn default() -> Self {
        Self {
            kind: PhiKind::Cov,
            weights: [1.0 / 3.0; 3],
        }
    }
}

/// Writes the mean/covariance feature vector of `x` into `out`.
pub fn phi_cov_into(x: &[f64], spec: &PhiSpec, out: &mut Vec<f64>) {
    let [w0, w1, w2] = spec.weights;
    let (r1, r2) = (libm::sqrt(w1), libm::sqrt(w2));
    out.clear();
    out.reserve(1 + x.len() + x.len() * x.len());
    out.push(libm::sqrt(w0));
    out.extend(x.iter().map(|v| r1 * v));
    for a in x {
        let ra = r2 * a;
        out.extend(x.iter().map(|b| ra * b));
    }
}

pub fn phi_cov(x: &[f64], spec: &PhiSpec) -> Vec<f64> {
    let mut out = Vec::new();
    phi_cov_into(x, spec, &mut out);
    out
}

/// `(sqrt(w0), sqrt(w1) F x)` for a precision square root `F` (`F^T F = Sigma^{-1}`).
pub fn phi_mahalanobis(x: &[f64], spec: &PhiSpec, factor: &Matrix) -> Result<Vec<f64>> {
    let [w0, w1, _] = spec.weights;
    let fx = factor.mul_vec(x)?;
    let r1 = libm::sqrt(w1);
    let mut out = Vec::with_capacity(1 + fx.len());
    out.push(libm::sqrt(w0));
    out.extend(fx.iter().map(|v| r1 * v));
    Ok(out)
}

/// Relative tie tolerance between the two candidate imbalances.
pub const TIE_TOL: f64 = 1e-12;

/// True when `imb1` and `imb0` are indistinguishable.
pub fn is_tie(imb1: f64, imb0: f64) -> bool {
    (imb1 - imb0).abs() <= TIE_TOL * (1.0 + imb1.abs() + imb0.abs())
}

/// Running `Lambda = sum (2 T_i - 1) phi(x_i restricted to the selection)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceState {
    selected: SelectedSet,
    lambda: Vec<f64>,
    spec: PhiSpec,
    scratch: Vec<f64>,
}

impl ImbalanceState {
    /// Zero imbalance over `selected`; `spec` must be of the covariance family.
    pub fn new(spec: PhiSpec, selected: SelectedSet) -> Result<Self> {
        if spec.kind != PhiKind::Cov {
            return Err(Error::InvalidArgument(
                "running imbalance needs the mean/covariance feature map".into(),
            ));
        }
        Ok(Self {
            lambda: vec![0.0; spec.dim(selected.len())],
            selected,
            spec,
            scratch: Vec::new(),
        })
    }

    /// Recomputes from full-width covariate rows.
    pub fn from_history<'a, I>(spec: PhiSpec, selected: SelectedSet, history: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], Arm)>,
    {
        let mut state = Self::new(spec, selected)?;
        let mut phi = Vec::new();
        for (row, arm) in history {
            state.phi_into(row, &mut phi);
            state.update(arm, &phi)?;
        }
        Ok(state)
    }

    pub fn selected(&self) -> &SelectedSet {
        &self.selected
    }

    pub fn spec(&self) -> &PhiSpec {
        &self.spec
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `||Lambda||^2`.
    pub fn imbalance(&self) -> f64 {
        dot(&self.lambda, &self.lambda)
    }

    /// Feature vector of a full-width covariate row.
    pub fn phi_into(&mut self, row: &[f64], out: &mut Vec<f64>) {
        self.scratch.clear();
        self.scratch
            .extend(self.selected.indices().iter().map(|&j| row[j]));
        phi_cov_into(&self.scratch, &self.spec, out);
    }

    fn check_dim(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.lambda.len() {
            return Err(Error::DimensionMismatch {
                expected: self.lambda.len(),
                got: phi.len(),
            });
        }
        Ok(())
    }

    /// `Lambda += (2 T - 1) phi`.
    pub fn update(&mut self, arm: Arm, phi: &[f64]) -> Result<()> {
        self.check_dim(phi)?;
        let sign = arm.sign();
        self.lambda
            .iter_mut()
            .zip(phi)
            .for_each(|(l, v)| *l += sign * v);
        Ok(())
    }

    /// `Imb(1) - Imb(0) = 4 <Lambda, phi>`.
    pub fn imb_delta(&self, phi: &[f64]) -> Result<f64> {
        self.check_dim(phi)?;
        Ok(4.0 * dot(&self.lambda, phi))
    }

    /// Like [`imb_delta`](Self::imb_delta) but returns exactly 0 when the
    /// two candidate imbalances tie within [`TIE_TOL`].
    pub fn decision_delta(&self, phi: &[f64]) -> Result<f64> {
        let delta = self.imb_delta(phi)?;
        // Imb(1) + Imb(0) = 2 (||Lambda||^2 + ||phi||^2)
        let total = 2.0 * (self.imbalance() + dot(phi, phi));
        Ok(if delta.abs() <= TIE_TOL * (1.0 + total) {
            0.0
        } else {
            delta
        })
    }
}

/// `(k/2) (xbar1 - xbar0)^T Sigma^+ (xbar1 - xbar0)` with `Sigma` the
/// unbiased sample covariance over all `k` rows, via an explicit
/// pseudoinverse.
pub fn mahalanobis_imb(x: &Matrix, arms: &[Arm], tol_ratio: f64) -> Result<f64> {
    let d = mean_difference(x, arms)?;
    if x.cols() == 0 {
        return Ok(0.0);
    }
    let k = x.rows();
    if k < 2 {
        return Err(Error::DegenerateInput("Mahalanobis imbalance needs two rows"));
    }
    let cov = sample_cov(x, CovDenominator::Unbiased)?;
    let precision = pinv(&cov, tol_ratio)?;
    Ok(k as f64 / 2.0 * dot(&d, &precision.mul_vec(&d)?))
}

/// `xbar(1) - xbar(0)` over the columns of `x`.
pub fn mean_difference(x: &Matrix, arms: &[Arm]) -> Result<Vec<f64>> {
    if arms.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: arms.len(),
        });
    }
    let mut sums = [vec![0.0; x.cols()], vec![0.0; x.cols()]];
    let mut counts = [0usize; 2];
    for (row, arm) in x.row_iter().zip(arms) {
        counts[arm.index()] += 1;
        sums[arm.index()]
            .iter_mut()
            .zip(row)
            .for_each(|(s, v)| *s += v);
    }
    for (a, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::EmptyArm(a));
        }
    }
    Ok(sums[1]
        .iter()
        .zip(&sums[0])
        .map(|(s1, s0)| s1 / counts[1] as f64 - s0 / counts[0] as f64)
        .collect())
}

enum FormRoute {
    /// No covariates.
    Empty,
    /// `Sigma` certified invertible: `L^{-1}` of its Cholesky factor.
    Inverse(Matrix),
    /// Full-rank centered Gram matrix: the pseudoinverse projects onto all
    /// contrasts, so the value depends only on the arm sizes.
    FullProjection,
    /// Explicit pseudoinverse of `Sigma`.
    Precision(Matrix),
    /// Retained eigenvectors of the centered Gram matrix.
    GramBasis(Vec<Vec<f64>>),
}

/// Mahalanobis imbalance of a fixed set of rows, evaluated cheaply for many
/// assignment vectors.
///
/// Agrees with [`mahalanobis_imb`] up to rounding. When the sample
/// covariance is comfortably nonsingular (or, with at least as many
/// covariates as rows, when the centered rows are affinely independent) the
/// pseudoinverse equals a Cholesky-certified inverse and no
/// eigendecomposition is needed.
pub struct MahalanobisForm {
    rows: Matrix,
    means: Vec<f64>,
    route: FormRoute,
}

impl MahalanobisForm {
    pub fn new(x: &Matrix, tol_ratio: f64) -> Result<Self> {
        let (k, s) = (x.rows(), x.cols());
        if k < 2 {
            return Err(Error::DegenerateInput("Mahalanobis imbalance needs two rows"));
        }
        let means = column_means(x);
        if s == 0 {
            return Ok(Self {
                rows: x.clone(),
                means,
                route: FormRoute::Empty,
            });
        }
        let route = if s < k {
            let cov = sample_cov(x, CovDenominator::Unbiased)?;
            match certified_inverse_factor(&cov, tol_ratio) {
                Some(linv) => FormRoute::Inverse(linv),
                None => FormRoute::Precision(pinv(&cov, tol_ratio)?),
            }
        } else {
            gram_route(x, &means, tol_ratio)?
        };
        Ok(Self {
            rows: x.clone(),
            means,
            route,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows.rows()
    }

    /// Imbalance for the assignment `arms` of the stored rows.
    pub fn value(&self, arms: &[Arm]) -> Result<f64> {
        let k = self.rows.rows() as f64;
        match &self.route {
            FormRoute::Empty => {
                mean_difference(&self.rows, arms)?;
                Ok(0.0)
            }
            FormRoute::Inverse(linv) => {
                let d = mean_difference(&self.rows, arms)?;
                let z = lower_mul_vec(linv, &d);
                Ok(k / 2.0 * dot(&z, &z))
            }
            FormRoute::Precision(precision) => {
                let d = mean_difference(&self.rows, arms)?;
                Ok(k / 2.0 * dot(&d, &precision.mul_vec(&d)?))
            }
            FormRoute::FullProjection => {
                let counts = arm_counts(arms, self.rows.rows())?;
                Ok(k / 2.0 * (k - 1.0) * (1.0 / counts[1] + 1.0 / counts[0]))
            }
            FormRoute::GramBasis(basis) => {
                let c = contrast(arms, self.rows.rows())?;
                let quad: f64 = basis.iter().map(|u| { let v = dot(u, &c); v * v }).sum();
                Ok(k / 2.0 * (k - 1.0) * quad)
            }
        }
    }

    /// Column means of the stored rows.
    pub fn means(&self) -> &[f64] {
        &self.means
    }
}

fn arm_counts(arms: &[Arm], k: usize) -> Result<[f64; 2]> {
    if arms.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: arms.len() });
    }
    let n1 = arms.iter().filter(|a| **a == Arm::Treatment).count();
    if n1 == 0 {
        return Err(Error::EmptyArm(1));
    }
    if n1 == k {
        return Err(Error::EmptyArm(0));
    }
    Ok([(k - n1) as f64, n1 as f64])
}

/// `c_i = T_i / n1 - (1 - T_i) / n0`, so that `xbar(1) - xbar(0) = X^T c`.
fn contrast(arms: &[Arm], k: usize) -> Result<Vec<f64>> {
    let counts = arm_counts(arms, k)?;
    Ok(arms
        .iter()
        .map(|a| match a {
            Arm::Treatment => 1.0 / counts[1],
            Arm::Control => -1.0 / counts[0],
        })
        .collect())
}

fn gram_route(x: &Matrix, means: &[f64], tol_ratio: f64) -> Result<FormRoute> {
    let k = x.rows();
    let centered: Vec<Vec<f64>> = x
        .row_iter()
        .map(|r| r.iter().zip(means).map(|(v, m)| v - m).collect())
        .collect();
    let mut gram = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let g = dot(&centered[i], &centered[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    // The all-ones vector spans the null space of the centered Gram matrix.
    // Lifting it to a nonzero eigenvalue leaves the rest of the spectrum
    // alone, so a certified factorization proves every other eigenvalue
    // survives the cutoff.
    let trace: f64 = (0..k).map(|i| gram[(i, i)]).sum();
    let lift = trace / ((k - 1) as f64 * k as f64);
    let mut lifted = gram.clone();
    lifted
        .as_mut_slice()
        .iter_mut()
        .for_each(|v| *v += lift);
    if lift > 0.0 && certified_inverse_factor(&lifted, tol_ratio).is_some() {
        return Ok(FormRoute::FullProjection);
    }
    let spectral = symmetric_eigen(&gram)?;
    let top = spectral.eigenvalues.first().copied().unwrap_or(0.0).abs();
    let cutoff = tol_ratio * top;
    let basis = spectral
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| top > 0.0 && l.abs() > cutoff)
        .map(|(m, _)| spectral.eigenvectors.column(m))
        .collect();
    Ok(FormRoute::GramBasis(basis))
}

/// Per-trial outputs, all evaluated on the true influential set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// `(n/2) d^T Sigma^+ d` with `d` the arm mean difference.
    pub imb_m: f64,
    /// `n^2 ||xbar(1) - xbar(0)||^2`.
    pub dncm: f64,
    /// `n^2 ||Sigma(1) - Sigma(0)||_F^2` with per-arm covariances over `n_a`.
    pub dnc: f64,
    /// `||Lambda||^2` for the mean/covariance feature map.
    pub imb_phi: f64,
    pub tau_hat: f64,
    /// Selection quality after each refit (empty for designs without selection).
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    /// Filled in by the caller that owns a clock.
    pub wall_seconds: f64,
}

/// Share of `true_set` recovered and share of the other `p - |true_set|` covariates picked.
pub fn selection_rates(selected: &SelectedSet, true_set: &SelectedSet, p: usize) -> (f64, f64) {
    let hits = selected.intersection(true_set).len();
    let false_hits = selected.len() - hits;
    let tpr = if true_set.is_empty() {
        1.0
    } else {
        hits as f64 / true_set.len() as f64
    };
    let negatives = p.saturating_sub(true_set.len());
    let fpr = if negatives == 0 {
        0.0
    } else {
        false_hits as f64 / negatives as f64
    };
    (tpr, fpr)
}

/// Imbalance metrics, the treatment-effect estimate and the selection trajectory of a completed trial.
pub fn report_metrics(
    trial: &TrialState,
    true_set: &SelectedSet,
    spec: &PhiSpec,
    tol_ratio: f64,
) -> Result<RunMetrics> {
    let x = &trial.covariates;
    let arms = &trial.assignments;
    if true_set.bound() > x.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            got: true_set.bound(),
        });
    }
    let n = x.rows() as f64;
    let xs = x.select_columns(true_set.indices());
    let d = mean_difference(&xs, arms)?;
    let imb_m = mahalanobis_imb(&xs, arms, tol_ratio)?;
    let dncm = n * n * dot(&d, &d);

    let rows_of = |arm: Arm| -> Vec<usize> {
        (0..arms.len()).filter(|&i| arms[i] == arm).collect()
    };
    let c1 = sample_cov(&xs.select_rows(&rows_of(Arm::Treatment)), CovDenominator::Observations)?;
    let c0 = sample_cov(&xs.select_rows(&rows_of(Arm::Control)), CovDenominator::Observations)?;
    let diff = c1.sub(&c0)?.frobenius_norm();
    let dnc = n * n * diff * diff;

    let imb_phi = ImbalanceState::from_history(*spec, true_set.clone(), x.row_iter().zip(arms.iter().copied()))?
        .imbalance();
    let tau_hat = tau_hat(arms, &trial.outcomes)?;

    let (tpr, fpr) = trial
        .selection_history
        .iter()
        .map(|snap| selection_rates(&snap.selected, true_set, x.cols()))
        .unzip();
    Ok(RunMetrics {
        imb_m,
        dncm,
        dnc,
        imb_phi,
        tau_hat,
        tpr,
        fpr,
        wall_seconds: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arms(bits: &[u8]) -> Vec<Arm> {
        bits.iter().map(|&b| Arm::from_bit(b == 1)).collect()
    }

    #[test]
    fn weights_validated() {
        assert!(PhiSpec::cov(0.5, 0.5, 0.1).is_err());
        assert!(PhiSpec::cov(-0.1, 0.6, 0.5).is_err());
        assert!(PhiSpec::mahalanobis(0.5, 0.5).is_ok());
    }

    #[test]
    fn phi_cov_cases() {
        let third = PhiSpec::default();
        let v = phi_cov(&[0.0, 0.0, 0.0], &third);
        assert_eq!(v.len(), 13);
        assert_eq!(v[0], libm::sqrt(1.0 / 3.0));
        assert!(v[1..].iter().all(|x| *x == 0.0));

        let spec = PhiSpec::cov(0.25, 0.25, 0.5).unwrap();
        let v = phi_cov(&[1.0, 2.0], &spec);
        let r = libm::sqrt(0.5);
        let expected = [0.5, 0.5, 1.0, r, 2.0 * r, 2.0 * r, 4.0 * r];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn update_and_delta_cases() {
        let spec = PhiSpec::default();
        let mut state = ImbalanceState::new(spec, SelectedSet::from_indices(vec![0])).unwrap();
        let phi = [0.5, 1.0, -2.0];
        assert_eq!(state.imb_delta(&phi).unwrap(), 0.0);
        state.update(Arm::Treatment, &phi).unwrap();
        assert_eq!(state.lambda(), &phi);
        state.update(Arm::Control, &phi).unwrap();
        assert!(state.lambda().iter().all(|v| *v == 0.0));
        assert!(state.update(Arm::Control, &[1.0]).is_err());
    }

    #[test]
    fn delta_direct_arithmetic() {
        let mut state =
            ImbalanceState::new(PhiSpec::default(), SelectedSet::new()).unwrap();
        state.lambda = vec![1.0, -2.0];
        assert_eq!(state.imb_delta(&[3.0, 1.0]).unwrap(), 4.0);
    }

    #[test]
    fn empty_selection_counts_arms() {
        let mut state = ImbalanceState::new(PhiSpec::default(), SelectedSet::new()).unwrap();
        let mut phi = Vec::new();
        state.phi_into(&[9.0, 9.0], &mut phi);
        assert_eq!(phi.len(), 1);
        state.update(Arm::Treatment, &phi).unwrap();
        state.update(Arm::Treatment, &phi).unwrap();
        // w0 (n1 - n0)^2
        assert!((state.imbalance() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mahalanobis_identical_means_is_zero() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [3.0, 0.0], [3.0, 0.0]]).unwrap();
        let t = arms(&[1, 0, 1, 0]);
        assert!(mahalanobis_imb(&x, &t, 1e-10).unwrap().abs() < 1e-12);
        assert!(MahalanobisForm::new(&x, 1e-10).unwrap().value(&t).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_small_matrix_oracle() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]]).unwrap();
        let t = arms(&[1, 0, 1, 0]);
        // covariance diag(1/3, 1/3), mean difference (1, 0)
        let (a, b, c) = (1.0 / 3.0, 0.0, 1.0 / 3.0);
        let det = a * c - b * b;
        let inv = [[c / det, -b / det], [-b / det, a / det]];
        let d = [1.0, 0.0];
        let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
        let expected = 2.0 * q;
        assert!((mahalanobis_imb(&x, &t, 1e-10).unwrap() - expected).abs() < 1e-10);
        let fast = MahalanobisForm::new(&x, 1e-10).unwrap().value(&t).unwrap();
        assert!((fast - expected).abs() < 1e-10);
    }

    #[test]
    fn empty_arm_is_an_error() {
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert_eq!(mahalanobis_imb(&x, &arms(&[1, 1]), 1e-10), Err(Error::EmptyArm(0)));
        let empty = Matrix::zeros(2, 0);
        assert_eq!(mahalanobis_imb(&empty, &arms(&[1, 0]), 1e-10), Ok(0.0));
    }

    #[test]
    fn wide_rows_give_constant_imbalance() {
        // four affinely independent points in five dimensions
        let x = Matrix::from_rows(&[
            [1.0, 0.0, 0.0, 0.5, 0.0],
            [0.0, 2.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 3.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 1.0, 1.0],
        ])
        .unwrap();
        let form = MahalanobisForm::new(&x, 1e-10).unwrap();
        assert!(matches!(form.route, FormRoute::FullProjection));
        for t in [[1, 0, 1, 0], [1, 1, 0, 0], [0, 1, 1, 0]] {
            let t = arms(&t);
            let direct = mahalanobis_imb(&x, &t, 1e-10).unwrap();
            // (k/2)(k-1)(1/n1 + 1/n0) = 2 * 3 * 1 = 6
            assert!((direct - 6.0).abs() < 1e-8);
            assert_eq!(form.value(&t).unwrap(), 6.0);
        }
    }

    #[test]
    fn rank_deficient_gram_falls_back() {
        // duplicated rows: centered rows are not affinely independent
        let x = Matrix::from_rows(&[
            [1.0, 0.0, 2.0, 0.0],
            [1.0, 0.0, 2.0, 0.0],
            [0.0, 1.0, 0.0, 3.0],
            [2.0, 2.0, 1.0, 1.0],
        ])
        .unwrap();
        let form = MahalanobisForm::new(&x, 1e-10).unwrap();
        for t in [[1, 0, 1, 0], [1, 1, 0, 0], [0, 1, 1, 0]] {
            let t = arms(&t);
            let direct = mahalanobis_imb(&x, &t, 1e-10).unwrap();
            assert!((form.value(&t).unwrap() - direct).abs() < 1e-9 * (1.0 + direct));
        }
    }

    #[test]
    fn rates() {
        let truth = SelectedSet::from_indices(vec![0, 1, 4]);
        let sel = SelectedSet::from_indices(vec![0, 4, 7]);
        let (tpr, fpr) = selection_rates(&sel, &truth, 10);
        assert!((tpr - 2.0 / 3.0).abs() < 1e-15);
        assert!((fpr - 1.0 / 7.0).abs() < 1e-15);
    }

    fn toy_trial(rows: &[[f64; 2]], bits: &[u8], y: &[f64]) -> TrialState {
        let mut t = TrialState::new(2);
        t.covariates = Matrix::from_rows(rows).unwrap();
        t.assignments = arms(bits);
        t.outcomes = y.to_vec();
        t
    }

    #[test]
    fn identical_arms_have_zero_mean_and_covariance_gaps() {
        let t = toy_trial(
            &[[1.0, 2.0], [1.0, 2.0], [3.0, -1.0], [3.0, -1.0]],
            &[1, 0, 1, 0],
            &[1.0, 0.0, 1.0, 0.0],
        );
        let m = report_metrics(&t, &SelectedSet::all(2), &PhiSpec::default(), 1e-10).unwrap();
        assert_eq!(m.dncm, 0.0);
        assert_eq!(m.dnc, 0.0);
        assert_eq!(m.tau_hat, 1.0);
    }

    #[test]
    fn dncm_by_hand() {
        let t = toy_trial(
            &[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]],
            &[1, 0, 1, 0],
            &[3.0, 1.0, 5.0, 1.0],
        );
        let m = report_metrics(&t, &SelectedSet::all(2), &PhiSpec::default(), 1e-10).unwrap();
        // arm means (1, 0.5) and (0, 0.5)
        assert!((m.dncm - 16.0).abs() < 1e-12);
        assert_eq!(m.tau_hat, 3.0);
        // per-arm covariances diag(0, 0.25) and diag(0, 0.25)
        assert!(m.dnc.abs() < 1e-12);
    }
}
