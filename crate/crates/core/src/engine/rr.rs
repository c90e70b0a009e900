//! Rerandomization: redraw balanced complete randomizations until the
//! Mahalanobis statistic of the full covariate vector clears a chi-square
//! quantile.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{CovariateSource, Method, OutcomeOracle, TrialConfig, TrialState};
use crate::numerics::{
    certified_inverse_factor, column_means, dot, lower_mul_vec, sample_cov, symmetric_eigen,
    CovDenominator, Matrix,
};
use crate::selection::SelectedSet;
use crate::{Arm, Error, Result};

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 10_000;

/// Regularized lower incomplete gamma `P(a, x)`.
fn lower_gamma_regularized(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefactor = a * libm::log(x) - x - libm::lgamma(a);
    if x < a + 1.0 {
        // series
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut denom = a;
        for _ in 0..GAMMA_MAX_ITER {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        (sum * libm::exp(log_prefactor)).min(1.0)
    } else {
        // Lentz continued fraction for Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        (1.0 - libm::exp(log_prefactor) * h).max(0.0)
    }
}

/// Chi-square CDF with `df` degrees of freedom.
pub fn chi2_cdf(df: f64, x: f64) -> f64 {
    lower_gamma_regularized(df / 2.0, x / 2.0)
}

/// Inverse chi-square CDF by bisection.
pub fn chi2_quantile(df: f64, prob: f64) -> Result<f64> {
    if !(df > 0.0) || !(prob > 0.0 && prob < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "chi-square quantile needs df > 0 and prob in (0, 1), got df = {df}, prob = {prob}"
        )));
    }
    let mut hi = df.max(1.0);
    while chi2_cdf(df, hi) < prob {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(df, mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Whitened, centered rows: `||zbar(1) - zbar(0)||^2` equals the quadratic
/// form in the pseudoinverse covariance.
fn whiten(x: &Matrix, tol_ratio: f64) -> Result<Vec<Vec<f64>>> {
    let means = column_means(x);
    let cov = sample_cov(x, CovDenominator::Unbiased)?;
    let centered = x
        .row_iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect::<Vec<f64>>());
    if let Some(linv) = certified_inverse_factor(&cov, tol_ratio) {
        return Ok(centered.map(|r| lower_mul_vec(&linv, &r)).collect());
    }
    // singular covariance: project on the retained eigenvectors
    let spectral = symmetric_eigen(&cov)?;
    let top = spectral.eigenvalues.first().copied().unwrap_or(0.0).abs();
    let basis: Vec<(f64, Vec<f64>)> = spectral
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| top > 0.0 && l.abs() > tol_ratio * top)
        .map(|(m, l)| (1.0 / libm::sqrt(*l), spectral.eigenvectors.column(m)))
        .collect();
    Ok(centered
        .map(|r| basis.iter().map(|(w, v)| w * dot(v, &r)).collect())
        .collect())
}

/// Rerandomization. All `n` rows are revealed first; assignments are drawn
/// as uniformly random `n/2`-subsets (one partial shuffle per draw) until
/// `(n1 n0 / n) d^T Sigma^{-1} d` falls below the chi-square quantile.
pub fn run_rr<S, O, R>(config: &TrialConfig, source: &mut S, oracle: &mut O, rng: &mut R) -> Result<TrialState>
where
    S: CovariateSource + ?Sized,
    O: OutcomeOracle + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    if config.method != Method::Rr {
        return Err(Error::Config(format!("{} is not rerandomization", config.method)));
    }
    let n = config.n;
    let mut x = Matrix::with_cols(config.p);
    for _ in 0..n {
        x.push_row(&source.next_row()?)?;
    }
    let threshold = chi2_quantile(config.p as f64, config.rr_accept_prob)?;
    let z = whiten(&x, config.pinv_tol)?;
    let width = z.first().map_or(0, Vec::len);
    let mut total = vec![0.0; width];
    for row in &z {
        total.iter_mut().zip(row).for_each(|(t, v)| *t += v);
    }

    let half = n / 2;
    let scale = (half * half) as f64 / n as f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut treated = vec![0.0; width];
    let mut accepted = None;
    for _ in 0..config.rr_max_draws {
        let (chosen, _) = order.partial_shuffle(rng, half);
        treated.iter_mut().for_each(|t| *t = 0.0);
        for &i in chosen.iter() {
            treated.iter_mut().zip(&z[i]).for_each(|(t, v)| *t += v);
        }
        // zbar1 - zbar0 = (2 S1 - S) / half
        let stat: f64 = treated
            .iter()
            .zip(&total)
            .map(|(s1, s)| {
                let d = (2.0 * s1 - s) / half as f64;
                d * d
            })
            .sum::<f64>()
            * scale;
        if stat < threshold {
            accepted = Some(chosen.to_vec());
            break;
        }
    }
    let treated_rows = accepted.ok_or(Error::AcceptanceFailure(config.rr_max_draws))?;

    let mut arms = vec![Arm::Control; n];
    for i in treated_rows {
        arms[i] = Arm::Treatment;
    }
    let mut state = TrialState::new(config.p);
    state.selected = SelectedSet::all(config.p);
    for (i, arm) in arms.into_iter().enumerate() {
        let y = oracle.outcome(x.row(i), arm);
        state.record(x.row(i), arm, y)?;
    }
    Ok(state)
}
