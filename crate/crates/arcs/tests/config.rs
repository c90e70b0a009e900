use arcs::config::{ExperimentSpec, RawSpec};
use arcs_core::engine::Method;
use arcs_core::simulate::{CalibrationForm, Example};
use proptest::prelude::*;

fn flags(example: &str, methods: &[&str]) -> RawSpec {
    RawSpec {
        example: Some(example.into()),
        methods: Some(methods.iter().map(|m| m.to_string()).collect()),
        ..RawSpec::default()
    }
}

#[test]
fn empty_file_plus_flags_gives_defaults() {
    let spec = ExperimentSpec::resolve(RawSpec::default().overlay(flags("1a", &["cr"]))).unwrap();
    assert_eq!(spec.example, Example::Ex1a);
    assert_eq!(spec.methods, [Method::Cr]);
    assert_eq!((spec.n, spec.p, spec.n0, spec.batch), (120, 10, 30, 10));
    assert_eq!(spec.rho, 0.85);
    assert_eq!(spec.weights, [1.0 / 3.0; 3]);
    assert_eq!((spec.reps, spec.seed, spec.threads), (200, 42, None));
    assert_eq!(spec.form, CalibrationForm::Linear);
    let config = spec.trial_config(Method::ArcsCov);
    assert_eq!(config.selection.cv.folds, 5);
    assert_eq!(config.n0, 30);
}

#[test]
fn flags_override_file_values() {
    let file = RawSpec::from_json(r#"{"example": "1b", "methods": ["arm"], "reps": 7, "N": 6, "seed": 1}"#).unwrap();
    let over = RawSpec {
        reps: Some(9),
        methods: Some(vec!["arcs-m".into(), "cov".into()]),
        ..RawSpec::default()
    };
    let spec = ExperimentSpec::resolve(file.overlay(over)).unwrap();
    assert_eq!(spec.example, Example::Ex1b);
    assert_eq!(spec.reps, 9);
    assert_eq!(spec.batch, 6);
    assert_eq!(spec.seed, 1);
    assert_eq!(spec.methods, [Method::ArcsM, Method::Cov]);
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let err = RawSpec::from_json(r#"{"example": "1a", "batch": 10}"#).unwrap_err().to_string();
    assert!(err.contains("batch"), "{err}");
}

#[test]
fn divisibility_error_names_every_size() {
    let raw = RawSpec {
        n: Some(121),
        batch: Some(10),
        ..flags("1a", &["arcs-cov"])
    };
    let err = ExperimentSpec::resolve(raw).unwrap_err().to_string();
    for needle in ["n = 121", "N0 = 30", "N = 10"] {
        assert!(err.contains(needle), "{err}");
    }
}

#[test]
fn invalid_values_name_their_key() {
    let cases = [
        (RawSpec { weights: Some([0.5, 0.6, 0.1]), ..flags("1a", &["cov"]) }, "weights"),
        (RawSpec { reps: Some(0), ..flags("1a", &["cr"]) }, "reps"),
        (RawSpec { form: Some("cubic".into()), ..flags("1a", &["cr"]) }, "form"),
        (flags("5", &["cr"]), "example"),
        (flags("1a", &[]), "methods"),
        (flags("1a", &["cr", "bogus"]), "methods"),
        (RawSpec { rho: Some(0.4), ..flags("1a", &["cov"]) }, "rho"),
    ];
    for (raw, key) in cases {
        let err = ExperimentSpec::resolve(raw).unwrap_err().to_string();
        assert!(err.contains(key), "expected `{key}` in: {err}");
    }
}

#[test]
fn rerandomization_is_refused_with_more_covariates_than_patients() {
    let err = ExperimentSpec::resolve(RawSpec { p: Some(150), ..flags("1a", &["rr"]) }).unwrap_err().to_string();
    assert!(err.contains("p < n"), "{err}");
}

#[test]
fn calibrated_example_pairs_its_remaining_patients() {
    let spec = ExperimentSpec::resolve(flags("calibrated", &["arcs-m"])).unwrap();
    assert_eq!((spec.n, spec.p, spec.batch), (376, 57, 2));
    assert_eq!(spec.covariates, ["RACE", "HAMD24"]);
    assert_eq!(spec.arm.as_deref(), Some("TREAT"));
}

fn valid_raw() -> impl Strategy<Value = RawSpec> {
    let examples = prop::sample::select(vec!["1a", "1b", "2", "3", "4"]);
    let methods = prop::sample::subsequence(
        vec!["cr", "arm", "cov", "arcs-m", "arcs-cov", "arcs-m-add", "arcs-cov-add"],
        1..4,
    );
    let sizes = (prop::sample::select(vec![10usize, 20, 30]), prop::sample::select(vec![2usize, 4, 10]), 1usize..20);
    (
        examples,
        methods,
        prop::option::of(sizes),
        prop::option::of(10usize..60),
        prop::option::of(0.55f64..0.95),
        prop::option::of((0.05f64..1.0, 0.05f64..1.0)),
        prop::option::of(1usize..1000),
        prop::option::of(any::<u64>()),
        prop::option::of(1usize..16),
        prop::option::of(prop::sample::select(vec!["linear", "quadratic"])),
    )
        .prop_map(|(example, methods, sizes, p, rho, w, reps, seed, threads, form)| {
            let (n0, batch, n) = match sizes {
                Some((n0, batch, k)) => (Some(n0), Some(batch), Some(n0 + k * batch)),
                None => (None, None, None),
            };
            let weights = w.map(|(a, b)| {
                let t = a + b + 1.0;
                [a / t, b / t, 1.0 - a / t - b / t]
            });
            RawSpec {
                example: Some(example.into()),
                methods: Some(methods.into_iter().map(String::from).collect()),
                n,
                p,
                n0,
                batch,
                rho,
                weights,
                reps,
                seed,
                threads,
                form: form.map(String::from),
                ..RawSpec::default()
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn serialize_parse_round_trips(raw in valid_raw()) {
        let Ok(spec) = ExperimentSpec::resolve(raw.clone()) else {
            return Ok(());
        };
        let json = spec.to_json();
        prop_assert_eq!(&ExperimentSpec::parse(&json).unwrap(), &spec);
        // serialization is the input with its gaps filled
        let full = RawSpec::from_json(&json).unwrap();
        prop_assert_eq!(&full, &spec.to_raw());
        prop_assert_eq!(&raw.clone().overlay(RawSpec::default()), &raw);
        let kept = RawSpec { ..full.clone() }.overlay(raw.clone());
        prop_assert_eq!(&kept, &full);
    }
}
