//! Lasso by cyclic coordinate descent with an active-set strategy.
//!
//! Objective: `(1/n) sum (y_i - mu - x_i^T beta)^2 + lambda * sum |beta_j|`
//! with an unpenalized intercept. Columns are centered (and optionally
//! scaled to unit standard deviation) internally; coefficients are reported
//! on the original scale.

use alloc::vec;
use alloc::vec::Vec;

use super::Predict;
use crate::numerics::{dot, Matrix};
use crate::{Arm, Error, Result};

pub const LASSO_TOL: f64 = 1e-9;
pub const LASSO_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub arm: Option<Arm>,
    pub iterations: usize,
}

impl Predict for LassoFit {
    fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + dot(&self.coefficients, row)
    }
}

/// Centered (and optionally scaled) design in column-major order.
#[derive(Debug, Clone)]
pub struct LassoDesign {
    n: usize,
    columns: Vec<Vec<f64>>,
    means: Vec<f64>,
    /// Divisor applied to each centered column; 0 marks a constant column.
    scales: Vec<f64>,
    /// `||column||^2 / n` after scaling.
    curvature: Vec<f64>,
    y_mean: f64,
    y_centered: Vec<f64>,
}

impl LassoDesign {
    pub fn new(x: &Matrix, y: &[f64], standardize: bool) -> Result<Self> {
        let n = x.rows();
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if n < 2 {
            return Err(Error::DegenerateInput("lasso needs at least two observations"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("response must be finite".into()));
        }
        let p = x.cols();
        let nf = n as f64;
        let mut columns = Vec::with_capacity(p);
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        let mut curvature = Vec::with_capacity(p);
        for j in 0..p {
            let mut col = x.column(j);
            let mean = col.iter().sum::<f64>() / nf;
            col.iter_mut().for_each(|v| *v -= mean);
            let var = dot(&col, &col) / nf;
            // relative to the column magnitude, not absolute
            let constant = var <= 1e-24 * (1.0 + mean * mean);
            let scale = if constant {
                0.0
            } else if standardize {
                libm::sqrt(var)
            } else {
                1.0
            };
            if constant {
                col.iter_mut().for_each(|v| *v = 0.0);
                curvature.push(0.0);
            } else {
                col.iter_mut().for_each(|v| *v /= scale);
                curvature.push(var / (scale * scale));
            }
            columns.push(col);
            means.push(mean);
            scales.push(scale);
        }
        let y_mean = y.iter().sum::<f64>() / nf;
        let y_centered = y.iter().map(|v| v - y_mean).collect();
        Ok(Self {
            n,
            columns,
            means,
            scales,
            curvature,
            y_mean,
            y_centered,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    /// Internal (centered, scaled) column `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn y_centered(&self) -> &[f64] {
        &self.y_centered
    }

    /// Root mean square of the centered response.
    pub fn y_scale(&self) -> f64 {
        libm::sqrt(dot(&self.y_centered, &self.y_centered) / self.n as f64)
    }

    /// Smallest penalty with an all-zero solution: `(2/n) max_j |x_j^T (y - ybar)|`.
    pub fn lambda_max(&self) -> f64 {
        // same rounding as the coordinate update, so lambda_max is an exact fixed point
        let inv_n = 1.0 / self.n as f64;
        self.columns
            .iter()
            .map(|c| 2.0 * (dot(c, &self.y_centered) * inv_n).abs())
            .fold(0.0, f64::max)
    }

    /// Maps internal coefficients back to the original covariate scale.
    pub fn to_fit(&self, beta: &[f64], lambda: f64, iterations: usize) -> LassoFit {
        let coefficients: Vec<f64> = beta
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| if *s == 0.0 { 0.0 } else { b / s })
            .collect();
        let intercept = self.y_mean - dot(&coefficients, &self.means);
        LassoFit {
            intercept,
            coefficients,
            lambda,
            arm: None,
            iterations,
        }
    }

    /// Objective on the internal scale.
    pub fn objective(&self, beta: &[f64], lambda: f64) -> f64 {
        let mut r = self.y_centered.clone();
        for (c, b) in self.columns.iter().zip(beta) {
            if *b != 0.0 {
                r.iter_mut().zip(c).for_each(|(ri, ci)| *ri -= b * ci);
            }
        }
        dot(&r, &r) / self.n as f64 + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Warm-startable coordinate-descent state over one design.
pub struct LassoSolver<'a> {
    design: &'a LassoDesign,
    beta: Vec<f64>,
    residual: Vec<f64>,
    sweeps: usize,
    /// Sweep count when the current `solve` started.
    solve_start: usize,
    tol: f64,
}

impl<'a> LassoSolver<'a> {
    pub fn new(design: &'a LassoDesign) -> Self {
        Self::with_tolerance(design, LASSO_TOL)
    }

    /// Stops each solve once no coefficient (internal scale) moves more than `tol` in a sweep.
    pub fn with_tolerance(design: &'a LassoDesign, tol: f64) -> Self {
        Self {
            design,
            beta: vec![0.0; design.p()],
            residual: design.y_centered.clone(),
            sweeps: 0,
            solve_start: 0,
            tol,
        }
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Fraction of the centered response sum of squares explained.
    pub fn dev_ratio(&self) -> f64 {
        let tss = dot(&self.design.y_centered, &self.design.y_centered);
        if tss == 0.0 {
            return 0.0;
        }
        1.0 - dot(&self.residual, &self.residual) / tss
    }

    fn update(&mut self, j: usize, half_lambda: f64, inv_n: f64) -> f64 {
        let v = self.design.curvature[j];
        if v == 0.0 {
            return 0.0;
        }
        let col = &self.design.columns[j];
        let old = self.beta[j];
        let z = dot(col, &self.residual) * inv_n + v * old;
        let new = soft_threshold(z, half_lambda) / v;
        let delta = new - old;
        if delta != 0.0 {
            self.residual
                .iter_mut()
                .zip(col)
                .for_each(|(r, c)| *r -= delta * c);
            self.beta[j] = new;
        }
        delta.abs()
    }

    /// One pass over either the nonzero or the zero coefficients. Returns the
    /// largest change and how many coordinates left zero.
    fn sweep(&mut self, active: bool, half_lambda: f64, inv_n: f64) -> Result<(f64, usize)> {
        if self.sweeps - self.solve_start >= LASSO_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                what: "lasso coordinate descent",
                iterations: LASSO_MAX_SWEEPS,
            });
        }
        self.sweeps += 1;
        let mut max_change: f64 = 0.0;
        let mut entered = 0;
        for j in 0..self.beta.len() {
            let was_zero = self.beta[j] == 0.0;
            if active == was_zero {
                continue;
            }
            max_change = max_change.max(self.update(j, half_lambda, inv_n));
            if was_zero && self.beta[j] != 0.0 {
                entered += 1;
            }
        }
        Ok((max_change, entered))
    }

    /// Solves at `lambda` starting from the current coefficients.
    ///
    /// Sweeps the nonzero coordinates until no change exceeds the tolerance,
    /// then checks the zero ones; the solve ends when none of them moves.
    pub fn solve(&mut self, lambda: f64) -> Result<()> {
        let half_lambda = lambda / 2.0;
        let inv_n = 1.0 / self.design.n as f64;
        self.solve_start = self.sweeps;
        loop {
            while self.sweep(true, half_lambda, inv_n)?.0 > self.tol {}
            if self.sweep(false, half_lambda, inv_n)?.1 == 0 {
                return Ok(());
            }
        }
    }
}

/// Fits the lasso at a single penalty level.
pub fn lasso_fit(x: &Matrix, y: &[f64], lambda: f64, standardize: bool) -> Result<LassoFit> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument("lambda must be finite and nonnegative".into()));
    }
    let design = LassoDesign::new(x, y, standardize)?;
    let mut solver = LassoSolver::new(&design);
    solver.solve(lambda)?;
    Ok(design.to_fit(solver.beta(), lambda, solver.sweeps()))
}

/// Warm-started fits along a decreasing penalty sequence.
pub fn lasso_path(design: &LassoDesign, lambdas: &[f64]) -> Result<Vec<LassoFit>> {
    lasso_path_until(design, lambdas, LASSO_TOL, |_, _| false)
}

/// Like [`lasso_path`] with solver tolerance `tol`, ending the path after the
/// first index for which `stop(index, dev_ratio)` returns true.
pub fn lasso_path_until<F>(design: &LassoDesign, lambdas: &[f64], tol: f64, mut stop: F) -> Result<Vec<LassoFit>>
where
    F: FnMut(usize, f64) -> bool,
{
    let mut solver = LassoSolver::with_tolerance(design, tol);
    let mut fits = Vec::with_capacity(lambdas.len());
    for (k, &lambda) in lambdas.iter().enumerate() {
        solver.solve(lambda)?;
        fits.push(design.to_fit(solver.beta(), lambda, solver.sweeps()));
        if stop(k, solver.dev_ratio()) {
            break;
        }
    }
    Ok(fits)
}
