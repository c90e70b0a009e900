//! Solvers and procedures checked against independent reference computations.

use arcs_core::balance::PhiSpec;
use arcs_core::engine::{chi2_quantile, run_trial, Method, RowCursor, TrialConfig};
use arcs_core::numerics::Matrix;
use arcs_core::selection::{
    cv_lasso, fold_assignment, lasso_fit, AdditiveDesign, AdditiveSolver, CvSettings, LassoDesign, LassoSolver,
};
use arcs_core::simulate::{
    calibrate_pseudo_trial, gen_gaussian_ar1, gen_mixed, least_squares, CalibrationForm, CalibrationSpec, DataTable,
};
use arcs_core::Arm;
use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn normal_matrix(rows: usize, cols: usize, rng: &mut StdRng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Largest eigenvalue of `(1/n) Z^T Z` for the columns `z`, by power iteration.
fn top_curvature(z: &[Vec<f64>], n: usize) -> f64 {
    let p = z.len();
    let mut v = vec![1.0; p];
    let mut est = 0.0;
    for _ in 0..500 {
        let zv: Vec<f64> = (0..n).map(|i| (0..p).map(|j| z[j][i] * v[j]).sum()).collect();
        let w: Vec<f64> = (0..p).map(|j| z[j].iter().zip(&zv).map(|(a, b)| a * b).sum::<f64>() / n as f64).collect();
        est = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / est).collect();
    }
    est
}

fn residual(z: &[Vec<f64>], coef: &[f64], y: &[f64]) -> Vec<f64> {
    let mut r = y.to_vec();
    for (c, b) in z.iter().zip(coef) {
        r.iter_mut().zip(c).for_each(|(ri, ci)| *ri -= b * ci);
    }
    r
}

/// Proximal gradient on `(1/n)||y - Z b||^2 + lambda ||b||_1`.
fn lasso_proximal_gradient(z: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let n = y.len();
    let step = 1.0 / (2.0 * top_curvature(z, n) * 1.01);
    let mut b = vec![0.0; z.len()];
    for _ in 0..1_000_000 {
        let r = residual(z, &b, y);
        let mut change = 0.0f64;
        for (j, bj) in b.iter_mut().enumerate() {
            let grad = -2.0 * z[j].iter().zip(&r).map(|(a, c)| a * c).sum::<f64>() / n as f64;
            let v = *bj - step * grad;
            let next = v.signum() * (v.abs() - step * lambda).max(0.0);
            change = change.max((next - *bj).abs());
            *bj = next;
        }
        if change < 1e-14 {
            break;
        }
    }
    b
}

#[test]
fn lasso_matches_proximal_gradient() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(25..60);
        let p = rng.random_range(2..9);
        let x = normal_matrix(n, p, &mut rng);
        let y: Vec<f64> = x
            .row_iter()
            .map(|r| 1.5 * r[0] - 2.0 * r[p - 1] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let design = LassoDesign::new(&x, &y, true).unwrap();
        let lambda = design.lambda_max() * rng.random_range(0.02..0.8);
        let mut solver = LassoSolver::new(&design);
        solver.solve(lambda).unwrap();
        let z: Vec<Vec<f64>> = (0..p).map(|j| design.column(j).to_vec()).collect();
        let reference = lasso_proximal_gradient(&z, design.y_centered(), lambda);
        for (a, b) in solver.beta().iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-6, "coordinate descent {a} vs proximal gradient {b}");
        }
    }
}

/// Block proximal gradient on `(1/n)||y - sum Q_j t_j||^2 + lambda sqrt(d) sum ||t_j||`.
fn group_proximal_gradient(design: &AdditiveDesign, lambda: f64) -> Vec<Vec<f64>> {
    let n = design.n();
    let sizes: Vec<usize> = (0..design.groups()).map(|j| design.block(j).len()).collect();
    let columns: Vec<Vec<f64>> = (0..design.groups()).flat_map(|j| design.block(j).to_vec()).collect();
    let step = 1.0 / (2.0 * top_curvature(&columns, n) * 1.01);
    let weight = (design.degree() as f64).sqrt();
    let mut flat = vec![0.0; columns.len()];
    for _ in 0..1_000_000 {
        let r = residual(&columns, &flat, design.y_centered());
        let mut change = 0.0f64;
        let mut start = 0;
        for &size in &sizes {
            let v: Vec<f64> = (start..start + size)
                .map(|k| {
                    let grad = -2.0 * columns[k].iter().zip(&r).map(|(a, c)| a * c).sum::<f64>() / n as f64;
                    flat[k] - step * grad
                })
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let shrink = if norm > 0.0 { (1.0 - step * lambda * weight / norm).max(0.0) } else { 0.0 };
            for (k, vk) in (start..start + size).zip(&v) {
                change = change.max((shrink * vk - flat[k]).abs());
                flat[k] = shrink * vk;
            }
            start += size;
        }
        if change < 1e-14 {
            break;
        }
    }
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            let block = flat[start..start + s].to_vec();
            start += s;
            block
        })
        .collect()
}

#[test]
fn group_lasso_matches_proximal_gradient() {
    let mut rng = StdRng::seed_from_u64(12);
    for _ in 0..20 {
        let n = rng.random_range(40..80);
        let p = rng.random_range(2..5);
        let x = normal_matrix(n, p, &mut rng);
        let y: Vec<f64> = x
            .row_iter()
            .map(|r| r[0] * r[0] - r[1] + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let design = AdditiveDesign::new(&x, &y, 3).unwrap();
        let lambda = design.lambda_max() * rng.random_range(0.05..0.7);
        let mut solver = AdditiveSolver::new(&design);
        solver.solve(lambda).unwrap();
        let reference = group_proximal_gradient(&design, lambda);
        for (a, b) in solver.theta().iter().zip(&reference) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() <= 1e-6, "block coordinate descent {u} vs proximal gradient {v}");
            }
        }
        let gap = design.objective(solver.theta(), lambda) - design.objective(&reference, lambda);
        assert!(gap <= 1e-9, "objective gap {gap}");
    }
}

#[test]
fn cross_validation_matches_exhaustive_refits() {
    let mut rng = StdRng::seed_from_u64(13);
    for _ in 0..5 {
        let n = rng.random_range(30..50);
        let p = 6;
        let x = normal_matrix(n, p, &mut rng);
        let y: Vec<f64> = x
            .row_iter()
            .map(|r| 2.0 * r[0] + r[2] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let settings = CvSettings {
            grid_size: 15,
            early_stop: false,
            tol: 1e-12,
            ..CvSettings::default()
        };
        let seed: u64 = rng.random();
        let (outcome, _) = cv_lasso(&x, &y, &settings, true, &mut StdRng::seed_from_u64(seed)).unwrap();
        let folds = fold_assignment(n, settings.folds, &mut StdRng::seed_from_u64(seed));
        assert_eq!(outcome.grid.len(), 15);
        for (k, &lambda) in outcome.grid.iter().enumerate() {
            let mut sse = 0.0;
            for f in 0..settings.folds {
                let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
                let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                let fit = lasso_fit(&x.select_rows(&train), &y_train, lambda, true).unwrap();
                for i in (0..n).filter(|&i| folds[i] == f) {
                    let pred = fit.intercept + x.row(i).iter().zip(&fit.coefficients).map(|(a, b)| a * b).sum::<f64>();
                    sse += (y[i] - pred) * (y[i] - pred);
                }
            }
            let expected = sse / n as f64;
            let got = outcome.mean_errors[k];
            assert!((got - expected).abs() <= 1e-6 * expected, "grid {k}: {got} vs {expected}");
        }
        let best = outcome.mean_errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let at_chosen = outcome.mean_errors[outcome.grid.iter().position(|&l| l == outcome.lambda).unwrap()];
        assert_eq!(at_chosen, best);
    }
}

#[test]
fn folds_are_balanced() {
    let mut rng = StdRng::seed_from_u64(14);
    for n in [5, 17, 40, 101] {
        let folds = fold_assignment(n, 5, &mut rng);
        let counts: Vec<usize> = (0..5).map(|f| folds.iter().filter(|&&g| g == f).count()).collect();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }
}

#[test]
fn chi_square_quantiles_agree_with_statrs() {
    for df in 1..=30 {
        let reference = ChiSquared::new(df as f64).unwrap();
        for prob in [0.001, 0.01, 0.1, 0.5, 0.9, 0.999] {
            let q = chi2_quantile(df as f64, prob).unwrap();
            let expected = reference.inverse_cdf(prob);
            assert!((q - expected).abs() <= 1e-6 * (1.0 + expected), "df {df} prob {prob}: {q} vs {expected}");
        }
    }
}

#[test]
fn ar1_covariance_matches_target() {
    let mut rng = StdRng::seed_from_u64(15);
    let x = gen_gaussian_ar1(40_000, 4, 0.5, &mut rng).unwrap();
    let n = x.rows() as f64;
    for a in 0..4 {
        for b in 0..4 {
            let cov = x.row_iter().map(|r| r[a] * r[b]).sum::<f64>() / n;
            let target = 0.5f64.powi((a as i32 - b as i32).abs());
            assert!((cov - target).abs() < 0.03, "entry ({a}, {b}): {cov} vs {target}");
        }
    }
}

#[test]
fn mixed_covariates_have_gaussian_head_and_one_hot_tail() {
    let mut rng = StdRng::seed_from_u64(16);
    let p = 10;
    let x = gen_mixed(20_000, p, &mut rng).unwrap();
    let n = x.rows() as f64;
    for row in x.row_iter() {
        let tail = &row[p - 4..];
        assert!(tail.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(tail.iter().sum::<f64>(), 1.0);
    }
    let c01 = x.row_iter().map(|r| r[0] * r[1]).sum::<f64>() / n;
    let c00 = x.row_iter().map(|r| r[0] * r[0]).sum::<f64>() / n;
    assert!((c01 - 0.5).abs() < 0.04 && (c00 - 1.0).abs() < 0.04);
}

/// Solves the normal equations by Gaussian elimination with partial pivoting.
fn normal_equations(columns: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let m = columns.len();
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row: Vec<f64> =
                (0..m).map(|j| columns[i].iter().zip(&columns[j]).map(|(u, v)| u * v).sum()).collect();
            row.push(columns[i].iter().zip(y).map(|(u, v)| u * v).sum());
            row
        })
        .collect();
    for k in 0..m {
        let pivot = (k..m).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, pivot);
        for i in k + 1..m {
            let f = a[i][k] / a[k][k];
            for j in k..=m {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    let mut beta = vec![0.0; m];
    for k in (0..m).rev() {
        let tail: f64 = (k + 1..m).map(|j| a[k][j] * beta[j]).sum();
        beta[k] = (a[k][m] - tail) / a[k][k];
    }
    beta
}

#[test]
fn least_squares_matches_normal_equations() {
    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..20 {
        let n = rng.random_range(20..60);
        let m = rng.random_range(1..6);
        let columns: Vec<Vec<f64>> =
            (0..m).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let names: Vec<String> = (0..m).map(|j| format!("c{j}")).collect();
        let beta = least_squares(&columns, &names, &y).unwrap();
        for (a, b) in beta.iter().zip(normal_equations(&columns, &y)) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }
}

fn calibration_table(quadratic: bool) -> DataTable {
    let mut rng = StdRng::seed_from_u64(18);
    let headers = ["y", "T", "A", "B", "C"].map(String::from).to_vec();
    let mut values = Matrix::with_cols(5);
    for i in 0..60 {
        let t = (i % 2) as f64;
        let a = f64::from(u8::from(rng.random_bool(0.4)));
        let b: f64 = 20.0 + 4.0 * rng.sample::<f64, _>(StandardNormal);
        let c: f64 = rng.sample(StandardNormal);
        let mut y = 2.0 + 1.5 * t - 0.7 * a + 0.3 * b;
        if quadratic {
            y += -0.4 * a * b + 0.05 * b * b;
        }
        values.push_row(&[y, t, a, b, c]).unwrap();
    }
    DataTable::new(headers, values).unwrap()
}

#[test]
fn calibration_recovers_exact_models() {
    let spec = |form| CalibrationSpec {
        outcome: "y".into(),
        model_columns: vec!["A".into(), "B".into()],
        arm: Some("T".into()),
        form,
    };
    let linear = calibrate_pseudo_trial(&calibration_table(false), &spec(CalibrationForm::Linear)).unwrap();
    assert_eq!(linear.term_names, ["(intercept)", "T", "A", "B"]);
    for (a, b) in linear.coefficients.iter().zip([2.0, 1.5, -0.7, 0.3]) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
    assert_eq!(linear.model.mu, [linear.coefficients[0], linear.coefficients[0] + linear.coefficients[1]]);
    assert_eq!(linear.covariate_names, ["A", "B", "C"]);

    let quad = calibrate_pseudo_trial(&calibration_table(true), &spec(CalibrationForm::Quadratic)).unwrap();
    assert_eq!(quad.term_names, ["(intercept)", "T", "A", "B", "A*B", "B^2"]);
    for (a, b) in quad.coefficients.iter().zip([2.0, 1.5, -0.7, 0.3, -0.4, 0.05]) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
    assert_eq!(quad.model.noise_sd, 1.0);
}

#[test]
fn calibration_rejects_collinear_and_missing_columns() {
    let mut table = calibration_table(false);
    table.headers[4] = "D".into();
    let copy_b: Vec<f64> = table.values.column(3);
    for (i, v) in copy_b.iter().enumerate() {
        table.values.row_mut(i)[4] = 2.0 * v;
    }
    let spec = CalibrationSpec {
        outcome: "y".into(),
        model_columns: vec!["B".into(), "D".into()],
        arm: Some("T".into()),
        form: CalibrationForm::Linear,
    };
    let err = calibrate_pseudo_trial(&table, &spec).unwrap_err().to_string();
    assert!(err.contains('D'), "{err}");
    let missing = CalibrationSpec { outcome: "nope".into(), ..spec };
    assert!(calibrate_pseudo_trial(&table, &missing).unwrap_err().to_string().contains("nope"));
}

/// Replays a fixed list of uniforms through `random::<f64>()`.
struct Scripted(Vec<f64>, usize);

impl RngCore for Scripted {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let u = self.0[self.1];
        self.1 += 1;
        ((u * (1u64 << 53) as f64) as u64) << 11
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}

#[test]
fn sequential_design_follows_hand_trace() {
    // one covariate, equal weights; running imbalance c (count, sum x, sum x^2), c = 1/sqrt(3)
    let x = Matrix::from_rows(&[[1.0], [2.0], [-1.0], [0.5], [-2.0], [-3.0]]).unwrap();
    let uniforms = vec![0.25, 0.9, 0.125, 0.5, 0.3125, 0.75];
    // x=1: tie, u < 1/2 -> T; Lambda = c(1, 1, 1)
    // x=2: <Lambda, phi> = 7/3 > 0 prefers C, u >= 0.85 -> T; c(2, 3, 5)
    // x=-1: 4/3 > 0 prefers C -> C; c(1, 4, 4)
    // x=1/2: 4/3 > 0 -> C; c(0, 3.5, 3.75)
    // x=-2: 8/3 > 0 -> C; c(-1, 5.5, -0.25)
    // x=-3: -79/12 < 0 prefers T, u < 0.85 -> T; c(0, 2.5, 8.75)
    let expected = [Arm::Treatment, Arm::Treatment, Arm::Control, Arm::Control, Arm::Control, Arm::Treatment];
    let mut config = TrialConfig::new(Method::Cov, 6, 1);
    config.phi = PhiSpec::cov(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0).unwrap();
    let mut rng = Scripted(uniforms, 0);
    let mut oracle = |_: &[f64], arm: Arm| arm.index() as f64;
    let state = run_trial(&config, &mut RowCursor::new(&x), &mut oracle, &mut rng).unwrap();
    assert_eq!(state.assignments, expected);
    assert_eq!(rng.1, 6);
    let imb = state.imbalance.unwrap().imbalance();
    assert!((imb - (2.5 * 2.5 + 8.75 * 8.75) / 3.0).abs() < 1e-12, "{imb}");
}
