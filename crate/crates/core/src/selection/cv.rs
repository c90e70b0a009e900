//! K-fold cross-validation over a log-spaced penalty grid.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::additive::{additive_path_until, AdditiveDesign, AdditiveFit};
use super::lasso::{lasso_path_until, LassoDesign, LassoFit};
use super::Predict;
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Default path-fit tolerance relative to the response scale.
pub const DEFAULT_CV_TOL: f64 = 3.162_277_660_168_379_5e-4;

/// How the penalty is read off the cross-validation curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CvRule {
    /// Penalty with the smallest mean held-out error.
    #[default]
    LambdaMin,
    /// Largest penalty within one standard error of the minimum.
    OneStandardError,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvSettings {
    pub folds: usize,
    pub grid_size: usize,
    /// Smallest grid value as a fraction of `lambda_max`.
    pub min_ratio: f64,
    pub rule: CvRule,
    /// Truncate the grid once the full-data path stops explaining more
    /// variance (relative gain below 1e-5 or fraction explained above 0.999,
    /// checked from the fifth value on), as glmnet does.
    pub early_stop: bool,
    /// Solver tolerance for the path fits, relative to the response scale.
    pub tol: f64,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            folds: 5,
            grid_size: 100,
            min_ratio: 1e-3,
            rule: CvRule::LambdaMin,
            early_stop: true,
            tol: DEFAULT_CV_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub lambda: f64,
    /// Grid actually evaluated (possibly truncated).
    pub grid: Vec<f64>,
    /// Mean held-out squared error per grid value (empty when no folds ran).
    pub mean_errors: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub folds_used: usize,
    /// Set when there were fewer observations than requested folds.
    pub folds_reduced: bool,
}

/// `size` values from `lambda_max` down to `min_ratio * lambda_max`, evenly spaced in log scale.
pub fn lambda_grid(lambda_max: f64, size: usize, min_ratio: f64) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![lambda_max],
        _ => {
            let step = libm::log(min_ratio) / (size - 1) as f64;
            (0..size)
                .map(|k| lambda_max * libm::exp(step * k as f64))
                .collect()
        }
    }
}

/// Shuffles `0..n` and deals the permuted indices round-robin into folds.
pub fn fold_assignment<R: Rng + ?Sized>(n: usize, folds: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold = vec![0; n];
    for (position, &idx) in order.iter().enumerate() {
        fold[idx] = position % folds;
    }
    fold
}

fn stop_rule(enabled: bool) -> impl FnMut(usize, f64) -> bool {
    let mut previous = 0.0;
    move |k, explained| {
        let stop = enabled && k >= 4 && (explained - previous < 1e-5 * explained || explained > 0.999);
        previous = explained;
        stop
    }
}

trait PathFitter {
    type Fit: Predict;
    /// Path over the grid built from this data's `lambda_max`.
    fn full_path(&self, x: &Matrix, y: &[f64], settings: &CvSettings) -> Result<(Vec<f64>, Vec<Self::Fit>)>;
    fn fold_path(&self, x: &Matrix, y: &[f64], grid: &[f64], tol: f64) -> Result<Vec<Self::Fit>>;
}

struct LassoPaths {
    standardize: bool,
}

impl PathFitter for LassoPaths {
    type Fit = LassoFit;

    fn full_path(&self, x: &Matrix, y: &[f64], settings: &CvSettings) -> Result<(Vec<f64>, Vec<LassoFit>)> {
        let design = LassoDesign::new(x, y, self.standardize)?;
        let lambda_max = design.lambda_max();
        let size = if lambda_max == 0.0 { 1 } else { settings.grid_size };
        let mut grid = lambda_grid(lambda_max, size, settings.min_ratio);
        let tol = settings.tol * design.y_scale();
        let fits = lasso_path_until(&design, &grid, tol, stop_rule(settings.early_stop))?;
        grid.truncate(fits.len());
        Ok((grid, fits))
    }

    fn fold_path(&self, x: &Matrix, y: &[f64], grid: &[f64], tol: f64) -> Result<Vec<LassoFit>> {
        let design = LassoDesign::new(x, y, self.standardize)?;
        lasso_path_until(&design, grid, tol * design.y_scale(), |_, _| false)
    }
}

struct AdditivePaths {
    degree: usize,
}

impl PathFitter for AdditivePaths {
    type Fit = AdditiveFit;

    fn full_path(&self, x: &Matrix, y: &[f64], settings: &CvSettings) -> Result<(Vec<f64>, Vec<AdditiveFit>)> {
        let design = AdditiveDesign::new(x, y, self.degree)?;
        let lambda_max = design.lambda_max();
        let size = if lambda_max == 0.0 { 1 } else { settings.grid_size };
        let mut grid = lambda_grid(lambda_max, size, settings.min_ratio);
        let tol = settings.tol * design.y_scale();
        let fits = additive_path_until(&design, &grid, tol, stop_rule(settings.early_stop))?;
        grid.truncate(fits.len());
        Ok((grid, fits))
    }

    fn fold_path(&self, x: &Matrix, y: &[f64], grid: &[f64], tol: f64) -> Result<Vec<AdditiveFit>> {
        let design = AdditiveDesign::new(x, y, self.degree)?;
        additive_path_until(&design, grid, tol * design.y_scale(), |_, _| false)
    }
}

fn cross_validate<F: PathFitter, R: Rng + ?Sized>(
    fitter: &F,
    x: &Matrix,
    y: &[f64],
    settings: &CvSettings,
    min_rows: usize,
    rng: &mut R,
) -> Result<(CvOutcome, F::Fit)> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < min_rows {
        return Err(Error::DegenerateInput("too few observations for cross-validation"));
    }
    if settings.grid_size == 0 || settings.folds < 2 || !(settings.tol > 0.0) {
        return Err(Error::InvalidArgument(
            "cross-validation needs a nonempty grid, at least two folds and a positive tolerance".into(),
        ));
    }
    let (grid, mut fits) = fitter.full_path(x, y, settings)?;
    // nothing to choose between
    if grid.len() == 1 {
        let outcome = CvOutcome {
            lambda: grid[0],
            grid,
            mean_errors: Vec::new(),
            standard_errors: Vec::new(),
            folds_used: 0,
            folds_reduced: false,
        };
        return Ok((outcome, fits.swap_remove(0)));
    }

    let (folds, folds_reduced) = if n < settings.folds {
        (n.max(2), true)
    } else {
        (settings.folds, false)
    };
    let assignment = fold_assignment(n, folds, rng);

    let g = grid.len();
    let mut sse = vec![0.0; g];
    let mut fold_mse = vec![vec![0.0; g]; folds];
    for (f, fold_errors) in fold_mse.iter_mut().enumerate() {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
        let x_train = x.select_rows(&train);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let path = fitter.fold_path(&x_train, &y_train, &grid, settings.tol)?;
        for (k, fit) in path.iter().enumerate() {
            let err: f64 = test
                .iter()
                .map(|&i| {
                    let e = y[i] - fit.predict(x.row(i));
                    e * e
                })
                .sum();
            sse[k] += err;
            fold_errors[k] = err / test.len() as f64;
        }
    }

    let mean_errors: Vec<f64> = sse.iter().map(|s| s / n as f64).collect();
    let kf = folds as f64;
    let standard_errors: Vec<f64> = (0..g)
        .map(|k| {
            let mean = fold_mse.iter().map(|f| f[k]).sum::<f64>() / kf;
            let var = fold_mse.iter().map(|f| { let e = f[k] - mean; e * e }).sum::<f64>() / (kf - 1.0);
            libm::sqrt(var / kf)
        })
        .collect();

    let mut best = 0;
    for k in 1..g {
        if mean_errors[k] < mean_errors[best] {
            best = k;
        }
    }
    let chosen = match settings.rule {
        CvRule::LambdaMin => best,
        CvRule::OneStandardError => {
            let bound = mean_errors[best] + standard_errors[best];
            (0..=best).find(|&k| mean_errors[k] <= bound).unwrap_or(best)
        }
    };

    let outcome = CvOutcome {
        lambda: grid[chosen],
        grid,
        mean_errors,
        standard_errors,
        folds_used: folds,
        folds_reduced,
    };
    fits.truncate(chosen + 1);
    Ok((outcome, fits.swap_remove(chosen)))
}

/// Cross-validated lasso: the chosen penalty and the full-data fit at it.
pub fn cv_lasso<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[f64],
    settings: &CvSettings,
    standardize: bool,
    rng: &mut R,
) -> Result<(CvOutcome, LassoFit)> {
    cross_validate(&LassoPaths { standardize }, x, y, settings, 3, rng)
}

/// Cross-validated lasso penalty.
pub fn cv_lambda<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[f64],
    settings: &CvSettings,
    standardize: bool,
    rng: &mut R,
) -> Result<CvOutcome> {
    cv_lasso(x, y, settings, standardize, rng).map(|(outcome, _)| outcome)
}

/// Cross-validated group lasso over the additive basis.
pub fn cv_additive<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[f64],
    settings: &CvSettings,
    degree: usize,
    rng: &mut R,
) -> Result<(CvOutcome, AdditiveFit)> {
    // each training split must still hold degree + 2 rows
    let folds = settings.folds.max(2) as f64;
    let min_rows = libm::ceil((degree + 2) as f64 * folds / (folds - 1.0)) as usize + 1;
    cross_validate(&AdditivePaths { degree }, x, y, settings, min_rows.max(3), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid(2.0, 100, 1e-3);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 2.0);
        assert!((g[99] - 2e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(lambda_grid(3.0, 1, 1e-3), vec![3.0]);
    }

    #[test]
    fn folds_are_balanced() {
        let mut rng = StdRng::seed_from_u64(1);
        let f = fold_assignment(23, 5, &mut rng);
        let mut counts = [0; 5];
        f.iter().for_each(|&k| counts[k] += 1);
        assert_eq!(counts, [5, 5, 5, 4, 4]);
    }

    #[test]
    fn single_point_grid_returns_lambda_max() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0]]).unwrap();
        let y = [1.0, 2.5, 2.0, 4.5, 5.0];
        let settings = CvSettings { grid_size: 1, ..CvSettings::default() };
        let out = cv_lambda(&x, &y, &settings, true, &mut StdRng::seed_from_u64(3)).unwrap();
        let lmax = LassoDesign::new(&x, &y, true).unwrap().lambda_max();
        assert_eq!(out.lambda, lmax);
    }

    #[test]
    fn few_rows_reduce_folds() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.5]]).unwrap();
        let y = [1.0, 2.2, 2.9, 4.4];
        let settings = CvSettings { grid_size: 10, early_stop: false, ..CvSettings::default() };
        let out = cv_lambda(&x, &y, &settings, true, &mut StdRng::seed_from_u64(3)).unwrap();
        assert!(out.folds_reduced);
        assert_eq!(out.folds_used, 4);
    }
}
