//! Invariant checks runnable from the command line. Each check reports the
//! worst deviation it saw next to its tolerance.

use arcs_core::balance::{mahalanobis_imb, ImbalanceState, MahalanobisForm, PhiSpec};
use arcs_core::engine::{biased_coin, Method, TrialConfig};
use arcs_core::numerics::{dot, pinv, Matrix, DEFAULT_PINV_TOL};
use arcs_core::rng::{stream, StreamPurpose};
use arcs_core::selection::{LassoDesign, LassoSolver, SelectedSet};
use arcs_core::simulate::{gen_gaussian_ar1, Example, Scenario};
use arcs_core::Arm;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::runner::run_study;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Worst observed deviation.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, worst: f64, tolerance: f64) -> Self {
        Self {
            name,
            worst,
            tolerance,
            passed: worst <= tolerance,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: worst {:.3e} (tolerance {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance
        )
    }
}

fn rng(seed: u64, k: u64) -> ChaCha8Rng {
    stream(seed, k, StreamPurpose::Design)
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    Matrix::new(rows, cols, data).expect("sizes match")
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// The four Penrose identities for symmetric matrices of deficient rank.
pub fn penrose(seed: u64, trials: usize) -> Result<Check> {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut r = rng(seed, t as u64);
        let k = r.random_range(2..9);
        let rank = r.random_range(1..=k);
        let b = uniform_matrix(k, rank, &mut r);
        let a = b.matmul(&b.transpose())?;
        let ap = pinv(&a, DEFAULT_PINV_TOL)?;
        let scale = 1.0 + a.as_slice().iter().map(|v| v.abs()).fold(0.0, f64::max);
        let aap = a.matmul(&ap)?;
        let apa = ap.matmul(&a)?;
        let pscale = 1.0 + ap.as_slice().iter().map(|v| v.abs()).fold(0.0, f64::max);
        worst = worst
            .max(max_abs_diff(&aap.matmul(&a)?, &a) / scale)
            .max(max_abs_diff(&apa.matmul(&ap)?, &ap) / pscale)
            .max(max_abs_diff(&aap, &aap.transpose()))
            .max(max_abs_diff(&apa, &apa.transpose()));
    }
    Ok(Check::at_most("pinv Penrose identities", worst, 1e-8))
}

/// Optimality conditions of the coordinate-descent lasso on its internal scale.
pub fn lasso_kkt(seed: u64, instances: usize) -> Result<Check> {
    let mut worst = 0.0f64;
    for t in 0..instances {
        let mut r = rng(seed, 1000 + t as u64);
        let n = r.random_range(20..60);
        let p = r.random_range(2..20);
        let x = gen_gaussian_ar1(n, p, 0.5, &mut r)?;
        let y: Vec<f64> = x
            .row_iter()
            .map(|row| 2.0 * row[0] - row[p - 1] + r.random::<f64>() - 0.5)
            .collect();
        let design = LassoDesign::new(&x, &y, true)?;
        let lambda = design.lambda_max() * r.random_range(0.01..0.9);
        let mut solver = LassoSolver::new(&design);
        solver.solve(lambda)?;
        let beta = solver.beta();
        let mut resid = design.y_centered().to_vec();
        for (j, b) in beta.iter().enumerate() {
            resid.iter_mut().zip(design.column(j)).for_each(|(ri, c)| *ri -= b * c);
        }
        for (j, b) in beta.iter().enumerate() {
            let grad = -2.0 * dot(design.column(j), &resid) / n as f64;
            let violation = if *b != 0.0 {
                (grad + lambda * b.signum()).abs()
            } else {
                (grad.abs() - lambda).max(0.0)
            };
            worst = worst.max(violation);
        }
    }
    Ok(Check::at_most("lasso KKT residuals", worst, 1e-6))
}

fn random_history(r: &mut ChaCha8Rng) -> (Matrix, Vec<Arm>, SelectedSet) {
    let n = r.random_range(5..60);
    let p = r.random_range(1..7);
    let x = uniform_matrix(n, p, r);
    let arms = (0..n).map(|_| Arm::from_bit(r.random())).collect();
    let mut chosen: Vec<usize> = (0..p).filter(|_| r.random_bool(0.6)).collect();
    if chosen.is_empty() {
        chosen.push(0);
    }
    (x, arms, SelectedSet::from_indices(chosen))
}

fn random_weights(r: &mut ChaCha8Rng) -> PhiSpec {
    let raw = [r.random::<f64>() + 0.01, r.random::<f64>() + 0.01, r.random::<f64>() + 0.01];
    let total: f64 = raw.iter().sum();
    let w2 = 1.0 - raw[0] / total - raw[1] / total;
    PhiSpec::cov(raw[0] / total, raw[1] / total, w2.max(0.0)).expect("valid weights")
}

/// Running imbalance vector against a direct sum over the history.
pub fn incremental_lambda(seed: u64, trials: usize) -> Result<Check> {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut r = rng(seed, 2000 + t as u64);
        let (x, arms, selected) = random_history(&mut r);
        let spec = random_weights(&mut r);
        let mut state = ImbalanceState::new(spec, selected.clone())?;
        let mut phi = Vec::new();
        for (row, arm) in x.row_iter().zip(&arms) {
            state.phi_into(row, &mut phi);
            state.update(*arm, &phi)?;
        }
        let [w0, w1, w2] = spec.weights();
        let s = selected.len();
        let mut direct = vec![0.0; 1 + s + s * s];
        for (row, arm) in x.row_iter().zip(&arms) {
            let z = selected.restrict(row);
            let sign = arm.sign();
            direct[0] += sign * w0.sqrt();
            for a in 0..s {
                direct[1 + a] += sign * w1.sqrt() * z[a];
                for b in 0..s {
                    direct[1 + s + a * s + b] += sign * w2.sqrt() * z[a] * z[b];
                }
            }
        }
        let scale = 1.0 + direct.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let gap = state
            .lambda()
            .iter()
            .zip(&direct)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(gap / scale);
    }
    Ok(Check::at_most("incremental imbalance vs recompute", worst, 1e-9))
}

/// `imb_delta(phi) = ||Lambda + phi||^2 - ||Lambda - phi||^2`.
pub fn imb_delta_identity(seed: u64, trials: usize) -> Result<Check> {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut r = rng(seed, 3000 + t as u64);
        let (x, arms, selected) = random_history(&mut r);
        let spec = random_weights(&mut r);
        let state = ImbalanceState::from_history(spec, selected, x.row_iter().zip(arms.iter().copied()))?;
        let mut probe = state.clone();
        let mut phi = Vec::new();
        let row: Vec<f64> = (0..x.cols()).map(|_| r.random::<f64>() * 4.0 - 2.0).collect();
        probe.phi_into(&row, &mut phi);
        let plus: Vec<f64> = state.lambda().iter().zip(&phi).map(|(l, v)| l + v).collect();
        let minus: Vec<f64> = state.lambda().iter().zip(&phi).map(|(l, v)| l - v).collect();
        let expanded = dot(&plus, &plus) - dot(&minus, &minus);
        let scale = 1.0 + state.imbalance() + dot(&phi, &phi);
        worst = worst.max((state.imb_delta(&phi)? - expanded).abs() / scale);
    }
    Ok(Check::at_most("imbalance difference expansion", worst, 1e-9))
}

/// The Mahalanobis criterion under `x -> A x + b` with `A` invertible.
pub fn affine_invariance(seed: u64, trials: usize) -> Result<Check> {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut r = rng(seed, 4000 + t as u64);
        let p = r.random_range(1..6);
        let n = r.random_range(2 * p + 4..40);
        let x = gen_gaussian_ar1(n, p, 0.3, &mut r)?;
        let mut a = uniform_matrix(p, p, &mut r);
        for j in 0..p {
            a.row_mut(j)[j] += 3.0; // diagonally dominant, hence invertible
        }
        let shift: Vec<f64> = (0..p).map(|_| r.random::<f64>() * 10.0).collect();
        let mut moved = x.matmul(&a.transpose())?;
        for i in 0..n {
            moved.row_mut(i).iter_mut().zip(&shift).for_each(|(v, s)| *v += s);
        }
        let mut arms: Vec<Arm> = (0..n).map(|i| Arm::from_bit(i % 2 == 0)).collect();
        for i in (1..n).rev() {
            arms.swap(i, r.random_range(0..=i));
        }
        let before = mahalanobis_imb(&x, &arms, DEFAULT_PINV_TOL)?;
        let after = mahalanobis_imb(&moved, &arms, DEFAULT_PINV_TOL)?;
        let via_form = MahalanobisForm::new(&moved, DEFAULT_PINV_TOL)?.value(&arms)?;
        let scale = before.abs().max(1e-12);
        worst = worst.max((before - after).abs() / scale).max((before - via_form).abs() / scale);
    }
    Ok(Check::at_most("Mahalanobis affine invariance (relative)", worst, 1e-6))
}

/// Share of coin tosses landing on the preferred arm, against `rho`.
pub fn coin_frequency(seed: u64, events: usize, rho: f64) -> Result<Check> {
    let mut r = rng(seed, 5000);
    let mut preferred = 0usize;
    for i in 0..events {
        let delta = if i % 2 == 0 { 1.0 } else { -1.0 };
        let arm = biased_coin(delta, rho, &mut r)?;
        let better = if delta < 0.0 { Arm::Treatment } else { Arm::Control };
        preferred += usize::from(arm == better);
    }
    let freq = preferred as f64 / events as f64;
    Ok(Check::at_most("biased coin frequency", (freq - rho).abs(), 0.03))
}

/// Bitwise equality of every replication metric between 1 and `workers` threads.
pub fn worker_determinism(seed: u64, workers: usize) -> Result<Check> {
    let scenario = Scenario::example(Example::Ex1a, 10)?;
    let mut mismatches = 0usize;
    for method in [Method::Cr, Method::ArcsCov, Method::Arm] {
        let mut config = TrialConfig::new(method, 60, 10);
        config.seed = seed;
        let one = run_study(&config, &scenario, "1a", 8, 1)?;
        let many = run_study(&config, &scenario, "1a", 8, workers)?;
        for (a, b) in one.records.iter().zip(&many.records) {
            let same = match (a, b) {
                (Ok(a), Ok(b)) => {
                    let bits = |m: &arcs_core::balance::RunMetrics| {
                        let mut v = vec![m.imb_m, m.dncm, m.dnc, m.imb_phi, m.tau_hat];
                        v.extend(&m.tpr);
                        v.extend(&m.fpr);
                        v.into_iter().map(f64::to_bits).collect::<Vec<u64>>()
                    };
                    bits(a) == bits(b)
                }
                (Err(a), Err(b)) => a == b,
                _ => false,
            };
            mismatches += usize::from(!same);
        }
    }
    Ok(Check::at_most("bit-identical results across worker counts", mismatches as f64, 0.0))
}

/// Every check with its default size.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        penrose(seed, 100)?,
        lasso_kkt(seed, 50)?,
        incremental_lambda(seed, 100)?,
        imb_delta_identity(seed, 100)?,
        affine_invariance(seed, 100)?,
        coin_frequency(seed, 10_000, 0.85)?,
        worker_determinism(seed, 8)?,
    ])
}
