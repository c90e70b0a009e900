use arcs::runner::{replicate_with, run_study};
use arcs_core::balance::RunMetrics;
use arcs_core::engine::{Method, TrialConfig};
use arcs_core::simulate::{run_replication, summarize, Example, Scenario};
use arcs_core::Error;

fn metrics(rep: u64) -> RunMetrics {
    let v = rep as f64;
    RunMetrics {
        imb_m: v,
        dncm: 2.0 * v,
        dnc: 3.0 * v,
        imb_phi: 4.0 * v,
        tau_hat: 1.0 + 0.01 * v,
        tpr: vec![0.5, 1.0],
        fpr: vec![0.25, 0.0],
        wall_seconds: 0.0,
    }
}

fn strip(records: &[arcs_core::Result<RunMetrics>]) -> Vec<Option<Vec<u64>>> {
    records
        .iter()
        .map(|r| {
            r.as_ref().ok().map(|m| {
                [m.imb_m, m.dncm, m.dnc, m.imb_phi, m.tau_hat].iter().chain(&m.tpr).chain(&m.fpr).map(|v| v.to_bits()).collect()
            })
        })
        .collect()
}

#[test]
fn poisoned_replication_leaves_the_rest_intact() {
    let clean = replicate_with(200, 4, |rep| Ok(metrics(rep))).unwrap();
    let poisoned = replicate_with(200, 4, |rep| match rep {
        17 => Err(Error::Replications("injected".into())),
        _ => Ok(metrics(rep)),
    })
    .unwrap();
    assert!(poisoned[17].is_err());
    let (a, b) = (strip(&clean), strip(&poisoned));
    for rep in (0..200).filter(|&r| r != 17) {
        assert_eq!(a[rep], b[rep]);
    }
    let config = TrialConfig::new(Method::Cr, 120, 10);
    let summary = summarize(&config, "1a", &poisoned).unwrap();
    assert_eq!((summary.reps, summary.failures), (199, 1));
    let expected = (0..200u64).filter(|&r| r != 17).map(|r| r as f64).sum::<f64>() / 199.0;
    assert!((summary.imb_m - expected).abs() < 1e-12);
}

#[test]
fn panics_are_contained() {
    let records = replicate_with(10, 2, |rep| {
        if rep == 4 {
            panic!("boom");
        }
        Ok(metrics(rep))
    })
    .unwrap();
    assert!(records[4].as_ref().unwrap_err().to_string().contains("replication 4"));
    assert_eq!(records.iter().filter(|r| r.is_ok()).count(), 9);
}

#[test]
fn too_many_failures_fail_the_summary() {
    let records = replicate_with(100, 2, |rep| {
        if rep < 2 {
            Err(Error::Replications("injected".into()))
        } else {
            Ok(metrics(rep))
        }
    })
    .unwrap();
    let config = TrialConfig::new(Method::Cr, 120, 10);
    let err = summarize(&config, "1a", &records).unwrap_err().to_string();
    assert!(err.contains("2 of 100"), "{err}");
}

#[test]
fn single_replication_summary_is_that_replication() {
    let scenario = Scenario::example(Example::Ex1a, 10).unwrap();
    let config = TrialConfig::new(Method::ArcsCov, 60, 10);
    let study = run_study(&config, &scenario, "1a", 1, 1).unwrap();
    let summary = study.summary().unwrap();
    let (_, direct) = run_replication(&config, &scenario, 0).unwrap();
    assert_eq!(summary.tau_sd_scaled, 0.0);
    assert_eq!(summary.tau_mean, direct.tau_hat);
    assert_eq!(summary.imb_m, direct.imb_m);
    assert_eq!(summary.dncm, direct.dncm);
    assert_eq!(summary.tpr_by_batch, direct.tpr);
    assert!(summary.wall_mean > 0.0);
}

#[test]
fn worker_count_does_not_change_results() {
    let scenario = Scenario::example(Example::Ex2, 20).unwrap();
    for method in [Method::Cr, Method::Arm, Method::ArcsM, Method::ArcsCov] {
        let config = TrialConfig::new(method, 60, 20);
        let one = run_study(&config, &scenario, "2", 16, 1).unwrap();
        let eight = run_study(&config, &scenario, "2", 16, 8).unwrap();
        assert_eq!(strip(&one.records), strip(&eight.records), "{method}");
        let (a, b) = (one.summary().unwrap(), eight.summary().unwrap());
        assert_eq!(a.tau_mean.to_bits(), b.tau_mean.to_bits());
        assert_eq!(a.imb_phi.to_bits(), b.imb_phi.to_bits());
    }
}
