//! Sparse additive selection by group lasso over a centered monomial basis.
//!
//! Covariate `j` is expanded to `((x - c_j), (x - c_j)^2, ..., (x - c_j)^d)`,
//! the block is centered and orthonormalized (`Q_j^T Q_j / n = I`), and
//! block coordinate descent minimizes
//! `(1/n) ||y - mu - sum_j Q_j theta_j||^2 + lambda * sqrt(d) * sum_j ||theta_j||`.

use alloc::vec;
use alloc::vec::Vec;

use super::Predict;
use crate::numerics::{column_means, dot, symmetric_eigen, Matrix};
use crate::{Arm, Error, Result};

pub const ADDITIVE_TOL: f64 = 1e-8;
pub const ADDITIVE_MAX_SWEEPS: usize = 50_000;
pub const DEFAULT_DEGREE: usize = 3;

/// Basis for a single covariate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarBasis {
    pub degree: usize,
    pub center: f64,
}

/// `(x - c, (x - c)^2, ..., (x - c)^d)`.
pub fn basis_expand(x: f64, basis: ScalarBasis) -> Vec<f64> {
    let t = x - basis.center;
    let mut out = Vec::with_capacity(basis.degree);
    let mut power = 1.0;
    for _ in 0..basis.degree {
        power *= t;
        out.push(power);
    }
    out
}

/// Degree plus one centering constant per covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    pub degree: usize,
    pub centers: Vec<f64>,
}

impl BasisSpec {
    pub fn scalar(&self, j: usize) -> ScalarBasis {
        ScalarBasis {
            degree: self.degree,
            center: self.centers[j],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveFit {
    pub intercept: f64,
    /// Coefficients on the raw centered monomials, one block per covariate.
    pub group_coefficients: Vec<Vec<f64>>,
    /// Block norms on the orthonormalized scale; these drive selection.
    pub group_norms: Vec<f64>,
    pub lambda: f64,
    pub basis: BasisSpec,
    pub arm: Option<Arm>,
    pub iterations: usize,
}

impl Predict for AdditiveFit {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut value = self.intercept;
        for (j, coef) in self.group_coefficients.iter().enumerate() {
            if coef.iter().all(|c| *c == 0.0) {
                continue;
            }
            let t = row[j] - self.basis.centers[j];
            let mut power = 1.0;
            for c in coef {
                power *= t;
                value += c * power;
            }
        }
        value
    }
}

struct Block {
    /// Orthonormal columns, each of length n.
    columns: Vec<Vec<f64>>,
    /// Maps orthonormal coefficients to raw basis coefficients (d x r, row-major).
    to_raw: Matrix,
    /// Column means of the raw block.
    raw_means: Vec<f64>,
}

/// Expanded, centered and orthonormalized design for one arm.
pub struct AdditiveDesign {
    n: usize,
    degree: usize,
    blocks: Vec<Block>,
    basis: BasisSpec,
    y_mean: f64,
    y_centered: Vec<f64>,
}

impl AdditiveDesign {
    pub fn new(x: &Matrix, y: &[f64], degree: usize) -> Result<Self> {
        let n = x.rows();
        if !(2..=4).contains(&degree) {
            return Err(Error::InvalidArgument("basis degree must be 2, 3 or 4".into()));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if n < degree + 2 {
            return Err(Error::DegenerateInput(
                "additive fit needs at least degree + 2 observations",
            ));
        }
        let nf = n as f64;
        let centers = column_means(x);
        let basis = BasisSpec { degree, centers };
        let mut blocks = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let scalar = basis.scalar(j);
            let mut raw = Matrix::zeros(n, degree);
            for i in 0..n {
                raw.row_mut(i)
                    .copy_from_slice(&basis_expand(x[(i, j)], scalar));
            }
            let raw_means = column_means(&raw);
            for i in 0..n {
                for (v, m) in raw.row_mut(i).iter_mut().zip(&raw_means) {
                    *v -= m;
                }
            }
            let mut gram = raw.transpose().matmul(&raw)?;
            for v in 0..degree {
                for w in 0..degree {
                    gram[(v, w)] /= nf;
                }
            }
            let spectral = symmetric_eigen(&gram)?;
            let top = spectral.eigenvalues.first().copied().unwrap_or(0.0);
            let scale = 1.0 + raw_means.iter().map(|m| m * m).sum::<f64>();
            let kept: Vec<usize> = spectral
                .eigenvalues
                .iter()
                .enumerate()
                .filter(|(_, &l)| l > 1e-10 * top && l > 1e-24 * scale)
                .map(|(k, _)| k)
                .collect();
            let mut to_raw = Matrix::zeros(degree, kept.len());
            for (c, &k) in kept.iter().enumerate() {
                let inv_sqrt = 1.0 / libm::sqrt(spectral.eigenvalues[k]);
                for v in 0..degree {
                    to_raw[(v, c)] = spectral.eigenvectors[(v, k)] * inv_sqrt;
                }
            }
            let q = raw.matmul(&to_raw)?;
            let columns = (0..kept.len()).map(|c| q.column(c)).collect();
            blocks.push(Block {
                columns,
                to_raw,
                raw_means,
            });
        }
        let y_mean = y.iter().sum::<f64>() / nf;
        let y_centered = y.iter().map(|v| v - y_mean).collect();
        Ok(Self {
            n,
            degree,
            blocks,
            basis,
            y_mean,
            y_centered,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> usize {
        self.blocks.len()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Orthonormal columns of block `j` (fewer than `d` if the block is rank deficient).
    pub fn block(&self, j: usize) -> &[Vec<f64>] {
        &self.blocks[j].columns
    }

    pub fn y_centered(&self) -> &[f64] {
        &self.y_centered
    }

    /// Root mean square of the centered response.
    pub fn y_scale(&self) -> f64 {
        libm::sqrt(dot(&self.y_centered, &self.y_centered) / self.n as f64)
    }

    fn penalty_weight(&self) -> f64 {
        libm::sqrt(self.degree as f64)
    }

    /// `max_j (2/n) ||Q_j^T (y - ybar)|| / sqrt(d)`.
    pub fn lambda_max(&self) -> f64 {
        let inv_n = 1.0 / self.n as f64;
        let w = self.penalty_weight();
        self.blocks
            .iter()
            .map(|b| {
                let s: f64 = b
                    .columns
                    .iter()
                    .map(|c| {
                        let z = dot(c, &self.y_centered) * inv_n;
                        z * z
                    })
                    .sum();
                2.0 * libm::sqrt(s) / w
            })
            .fold(0.0, f64::max)
    }

    pub fn objective(&self, theta: &[Vec<f64>], lambda: f64) -> f64 {
        let mut r = self.y_centered.clone();
        for (block, t) in self.blocks.iter().zip(theta) {
            for (col, tk) in block.columns.iter().zip(t) {
                r.iter_mut().zip(col).for_each(|(ri, c)| *ri -= tk * c);
            }
        }
        let penalty: f64 = theta.iter().map(|t| libm::sqrt(dot(t, t))).sum();
        dot(&r, &r) / self.n as f64 + lambda * self.penalty_weight() * penalty
    }

    pub fn to_fit(&self, theta: &[Vec<f64>], lambda: f64, iterations: usize) -> AdditiveFit {
        let mut intercept = self.y_mean;
        let mut group_coefficients = Vec::with_capacity(self.blocks.len());
        let mut group_norms = Vec::with_capacity(self.blocks.len());
        for (block, t) in self.blocks.iter().zip(theta) {
            let raw: Vec<f64> = (0..self.degree)
                .map(|v| dot(&block.to_raw.row(v)[..t.len()], t))
                .collect();
            intercept -= dot(&raw, &block.raw_means);
            group_norms.push(libm::sqrt(dot(t, t)));
            group_coefficients.push(raw);
        }
        AdditiveFit {
            intercept,
            group_coefficients,
            group_norms,
            lambda,
            basis: self.basis.clone(),
            arm: None,
            iterations,
        }
    }
}

pub struct AdditiveSolver<'a> {
    design: &'a AdditiveDesign,
    theta: Vec<Vec<f64>>,
    residual: Vec<f64>,
    sweeps: usize,
    solve_start: usize,
    scratch: Vec<f64>,
    tol: f64,
}

impl<'a> AdditiveSolver<'a> {
    pub fn new(design: &'a AdditiveDesign) -> Self {
        Self::with_tolerance(design, ADDITIVE_TOL)
    }

    /// Stops each solve once no block moves more than `tol` (Euclidean, orthonormal scale) in a sweep.
    pub fn with_tolerance(design: &'a AdditiveDesign, tol: f64) -> Self {
        Self {
            design,
            theta: design
                .blocks
                .iter()
                .map(|b| vec![0.0; b.columns.len()])
                .collect(),
            residual: design.y_centered.clone(),
            sweeps: 0,
            solve_start: 0,
            scratch: Vec::with_capacity(design.degree),
            tol,
        }
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
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

    fn update(&mut self, j: usize, half_threshold: f64, inv_n: f64) -> f64 {
        let block = &self.design.blocks[j];
        if block.columns.is_empty() {
            return 0.0;
        }
        let old = &self.theta[j];
        self.scratch.clear();
        for (col, t) in block.columns.iter().zip(old) {
            self.scratch.push(dot(col, &self.residual) * inv_n + t);
        }
        let norm = libm::sqrt(dot(&self.scratch, &self.scratch));
        let shrink = if norm > half_threshold {
            1.0 - half_threshold / norm
        } else {
            0.0
        };
        let mut change = 0.0;
        for (k, col) in block.columns.iter().enumerate() {
            let new = self.scratch[k] * shrink;
            let delta = new - self.theta[j][k];
            if delta != 0.0 {
                self.residual
                    .iter_mut()
                    .zip(col)
                    .for_each(|(r, c)| *r -= delta * c);
                self.theta[j][k] = new;
            }
            change += delta * delta;
        }
        libm::sqrt(change)
    }

    /// One pass over either the nonzero or the zero blocks. Returns the
    /// largest block change and how many blocks left zero.
    fn sweep(&mut self, active: bool, half_threshold: f64, inv_n: f64) -> Result<(f64, usize)> {
        if self.sweeps - self.solve_start >= ADDITIVE_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                what: "group coordinate descent",
                iterations: ADDITIVE_MAX_SWEEPS,
            });
        }
        self.sweeps += 1;
        let mut max_change: f64 = 0.0;
        let mut entered = 0;
        for j in 0..self.theta.len() {
            let was_zero = self.theta[j].iter().all(|t| *t == 0.0);
            if active == was_zero {
                continue;
            }
            let change = self.update(j, half_threshold, inv_n);
            max_change = max_change.max(change);
            if was_zero && change != 0.0 {
                entered += 1;
            }
        }
        Ok((max_change, entered))
    }

    /// Active blocks until converged, then a check of the zero blocks; ends
    /// when no zero block moves.
    pub fn solve(&mut self, lambda: f64) -> Result<()> {
        let half_threshold = lambda * self.design.penalty_weight() / 2.0;
        let inv_n = 1.0 / self.design.n as f64;
        self.solve_start = self.sweeps;
        loop {
            while self.sweep(true, half_threshold, inv_n)?.0 > self.tol {}
            if self.sweep(false, half_threshold, inv_n)?.1 == 0 {
                return Ok(());
            }
        }
    }
}

pub fn additive_fit(x: &Matrix, y: &[f64], lambda: f64, degree: usize) -> Result<AdditiveFit> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument("lambda must be finite and nonnegative".into()));
    }
    let design = AdditiveDesign::new(x, y, degree)?;
    let mut solver = AdditiveSolver::new(&design);
    solver.solve(lambda)?;
    Ok(design.to_fit(solver.theta(), lambda, solver.sweeps()))
}

pub fn additive_path(design: &AdditiveDesign, lambdas: &[f64]) -> Result<Vec<AdditiveFit>> {
    additive_path_until(design, lambdas, ADDITIVE_TOL, |_, _| false)
}

/// Path with solver tolerance `tol`, ending after the first index for which
/// `stop(index, dev_ratio)` holds.
pub fn additive_path_until<F>(
    design: &AdditiveDesign,
    lambdas: &[f64],
    tol: f64,
    mut stop: F,
) -> Result<Vec<AdditiveFit>>
where
    F: FnMut(usize, f64) -> bool,
{
    let mut solver = AdditiveSolver::with_tolerance(design, tol);
    let mut fits = Vec::with_capacity(lambdas.len());
    for (k, &lambda) in lambdas.iter().enumerate() {
        solver.solve(lambda)?;
        fits.push(design.to_fit(solver.theta(), lambda, solver.sweeps()));
        if stop(k, solver.dev_ratio()) {
            break;
        }
    }
    Ok(fits)
}
