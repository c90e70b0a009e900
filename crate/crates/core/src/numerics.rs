//! Dense kernels: row-major matrices, sample covariance, cyclic Jacobi
//! eigendecomposition, spectral pseudoinverse and Cholesky.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::{Error, Result};

/// Eigenvalues at or below `tol_ratio * max|eigenvalue|` are treated as zero.
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Wraps row-major `data`. Fails on a length mismatch or a non-finite entry.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// An empty matrix with a fixed column count, grown with [`Matrix::push_row`].
    pub fn with_cols(cols: usize) -> Self {
        Self {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix entries must be finite".into()));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // rows of a zero-width matrix are empty slices, so no chunks_exact
        (0..self.rows).map(move |i| &self.data[i * self.cols..(i + 1) * self.cols])
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                got: other.data.len(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// Copy of the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in self.row_iter() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Matrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    /// First `k` rows.
    pub fn head(&self, k: usize) -> Matrix {
        Matrix {
            rows: k,
            cols: self.cols,
            data: self.data[..k * self.cols].to_vec(),
        }
    }

    /// Largest |a_ij - a_ji| relative to the Frobenius norm.
    pub fn relative_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / norm
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Inner product over the common prefix of `a` and `b`.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    // four independent accumulators; a single running sum serializes on the adds
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Divisor applied to centered cross-products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovDenominator {
    /// `k`: the maximum-likelihood estimate.
    Observations,
    /// `k - 1`: the unbiased estimate.
    Unbiased,
}

pub fn column_means(x: &Matrix) -> Vec<f64> {
    let mut means = vec![0.0; x.cols()];
    for r in x.row_iter() {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    let k = x.rows().max(1) as f64;
    means.iter_mut().for_each(|m| *m /= k);
    means
}

pub fn sample_cov(x: &Matrix, denominator: CovDenominator) -> Result<Matrix> {
    let k = x.rows();
    if k == 0 {
        return Err(Error::EmptyInput("sample covariance needs at least one row"));
    }
    let div = match denominator {
        CovDenominator::Observations => k as f64,
        CovDenominator::Unbiased if k == 1 => {
            return Err(Error::DegenerateInput(
                "unbiased covariance needs at least two rows",
            ))
        }
        CovDenominator::Unbiased => (k - 1) as f64,
    };
    let p = x.cols();
    let means = column_means(x);
    let mut cov = Matrix::zeros(p, p);
    let mut centered = vec![0.0; p];
    for r in x.row_iter() {
        for ((c, v), m) in centered.iter_mut().zip(r).zip(&means) {
            *c = v - m;
        }
        for a in 0..p {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            let row = &mut cov.data[a * p..(a + 1) * p];
            for b in a..p {
                row[b] += ca * centered[b];
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / div;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order and
/// eigenvectors stored as the matching columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl SpectralDecomposition {
    /// `V diag(eigenvalues) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut out = Matrix::zeros(n, n);
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            if lambda == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * lambda;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)];
                }
            }
        }
        out
    }
}

/// Cyclic Jacobi. Sweeps until the off-diagonal Frobenius norm falls to
/// `1e-12 * ||A||_F`.
pub fn symmetric_eigen(a: &Matrix) -> Result<SpectralDecomposition> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.cols(),
        });
    }
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let norm = a.frobenius_norm();
    let target = JACOBI_TOL * norm;

    let off_norm = |m: &Matrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m[(i, j)] * m[(i, j)];
            }
        }
        libm::sqrt(s)
    };

    let mut sweeps = 0;
    while off_norm(&m) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                what: "Jacobi eigendecomposition",
                iterations: sweeps,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let eigenvectors = v.select_columns(&order);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    let asym = a.relative_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Moore-Penrose pseudoinverse of a symmetric matrix through its spectrum.
pub fn pinv(a: &Matrix, tol_ratio: f64) -> Result<Matrix> {
    check_symmetric(a)?;
    let spectral = symmetric_eigen(a)?;
    Ok(pinv_from_spectrum(&spectral, tol_ratio))
}

pub fn pinv_from_spectrum(spectral: &SpectralDecomposition, tol_ratio: f64) -> Matrix {
    let n = spectral.eigenvalues.len();
    let max_abs = spectral
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, l| m.max(l.abs()));
    let cutoff = tol_ratio * max_abs;
    let v = &spectral.eigenvectors;
    let mut out = Matrix::zeros(n, n);
    for (k, &lambda) in spectral.eigenvalues.iter().enumerate() {
        if lambda.abs() <= cutoff {
            continue;
        }
        let inv = 1.0 / lambda;
        for i in 0..n {
            let vik = v[(i, k)] * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += vik * v[(j, k)];
            }
        }
    }
    out
}

/// Lower-triangular `L` with `L L^T = A`.
pub fn chol_lower(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.cols(),
        });
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { column: j, pivot: d });
        }
        let djj = libm::sqrt(d);
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix with a nonzero diagonal.
pub fn lower_triangular_inverse(l: &Matrix) -> Matrix {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = 1.0 / l[(j, j)];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / l[(i, i)];
        }
    }
    inv
}

/// Cholesky-based inverse factor, accepted only when the spectrum provably
/// sits above the pseudoinverse cutoff, i.e. when the pseudoinverse and the
/// inverse coincide.
///
/// With `L L^T = A`, `||L^{-1}||_F^2 = tr(A^{-1}) >= 1 / lambda_min` and
/// `||A||_F >= lambda_max`, so `1 / ||L^{-1}||_F^2 > tol * ||A||_F` implies
/// `lambda_min > tol * lambda_max`.
pub fn certified_inverse_factor(a: &Matrix, tol_ratio: f64) -> Option<Matrix> {
    let l = chol_lower(a).ok()?;
    let linv = lower_triangular_inverse(&l);
    let trace_inv: f64 = linv.as_slice().iter().map(|v| v * v).sum();
    if !trace_inv.is_finite() {
        return None;
    }
    (1.0 / trace_inv > tol_ratio * a.frobenius_norm()).then_some(linv)
}

/// Applies a lower-triangular matrix to a vector.
pub fn lower_mul_vec(l: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..l.rows())
        .map(|i| dot(&l.row(i)[..=i], &v[..=i]))
        .collect()
}
