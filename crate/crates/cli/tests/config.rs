//! Config parsing, validation and round-trips.

use proptest::prelude::*;
use spade_cli::config::{parse_config, ConfigError, ExperimentConfig, ScenarioPreset, ThresholdSpec};
use spade_core::scene::ObjectSpec;
use spade_core::{PsfKind, Receiver};

#[test]
fn minimal_config_gets_documented_defaults() {
    let cfg = parse_config("[scenario]\npreset = \"reference\"\n").unwrap();
    assert_eq!(cfg.scenario.gamma, 0.25);
    assert_eq!(cfg.scenario.photons_per_step, 500.0);
    assert_eq!(cfg.scenario.psf, PsfKind::Gaussian);
    assert!((cfg.threshold() - 25000f64.ln()).abs() < 1e-12);
    assert_eq!(cfg.detector.change_time, 25);
    assert_eq!(cfg.detector.n_trials, 2000);
    assert_eq!(cfg.detector.master_seed, 24301);
    assert_eq!(cfg.entropy_sweep.gammas, [0.05, 0.07, 0.1, 0.14, 0.2]);
    assert_eq!(cfg.threshold_sweep.thresholds, [5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
    let g = &cfg.latency_ensemble.gammas;
    assert_eq!(g.len(), 13);
    assert_eq!(g[0], 0.125);
    assert!((g[12] - 1.0).abs() < 1e-15);
    for w in g.windows(2) {
        assert!((w[1] / w[0] - 2f64.powf(0.25)).abs() < 1e-12);
    }
    assert_eq!(cfg.latency_ensemble.receivers, [Receiver::TriSpade, Receiver::DirectImaging]);
}

#[test]
fn negative_gamma_is_rejected_with_path() {
    let err = parse_config("[scenario]\ngamma = -1.0\n").unwrap_err();
    match &err {
        ConfigError::Invalid { path, .. } => assert_eq!(path, "scenario.gamma"),
        other => panic!("unexpected {other:?}"),
    }
    let err = parse_config("[scenario]\nphotons_per_step = 0.0\n").unwrap_err();
    assert!(err.to_string().contains("scenario.photons_per_step"));
    let err = parse_config("[detector]\nthreshold = { pfa = 2.0, window = 25 }\n").unwrap_err();
    assert!(err.to_string().contains("detector.threshold"));
}

#[test]
fn unknown_keys_are_rejected() {
    for doc in [
        "gama = 0.3\n",
        "[scenario]\ngama = 0.3\n",
        "[detector]\nn_trial = 5\n",
        "[scenario.reference]\npre_sid = 0.3\n",
        "[output]\ndir = \"x\"\n",
    ] {
        let err = parse_config(doc).unwrap_err();
        assert!(matches!(err, ConfigError::Syntax(_)), "{doc}: {err}");
        assert!(err.to_string().contains("unknown field"), "{doc}: {err}");
    }
}

#[test]
fn syntax_errors_report_the_line() {
    let err = parse_config("[scenario]\ngamma = 0.2\npsf = \n").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn custom_objects_parse() {
    let doc = r#"
[scenario]
preset = "custom"
psf = "airy"
gamma = 0.1

[scenario.pre]
kind = "squares"
squares = [{ center = [0.0, 0.0], side = 0.5 }]

[scenario.post]
kind = "points"
points = [[-0.2, 0.0, 1.0], [0.2, 0.0, 1.0]]
"#;
    let cfg = parse_config(doc).unwrap();
    assert_eq!(cfg.scenario.preset, ScenarioPreset::Custom);
    assert!(matches!(cfg.scenario.post, Some(ObjectSpec::Points { .. })));
    let (pre, post) = cfg.scenario.objects().unwrap();
    assert!((pre.moments().mx2 - 0.25 / 12.0).abs() < 1e-12);
    assert!((post.moments().mx2 - 0.04).abs() < 1e-12);

    let doc = r#"
[scenario]
preset = "custom"
[scenario.pre]
kind = "polygon"
vertices = [[-0.3, -0.3], [0.3, -0.3], [0.0, 0.3]]
resolution = 64
[scenario.post]
kind = "raster"
extent = 1.0
weights = [[0.0, 1.0], [1.0, 0.0]]
"#;
    parse_config(doc).unwrap();
}

#[test]
fn objects_outside_the_unit_box_are_rejected() {
    let doc = r#"
[scenario]
preset = "custom"
[scenario.pre]
kind = "points"
points = [[-0.9, 0.0, 1.0], [0.9, 0.0, 1.0]]
[scenario.post]
kind = "points"
points = [[0.0, 0.0, 1.0]]
"#;
    let err = parse_config(doc).unwrap_err();
    assert!(err.to_string().contains("scenario.pre"), "{err}");
}

#[test]
fn explicit_objects_need_custom_preset() {
    let doc = "[scenario.pre]\nkind = \"points\"\npoints = [[0.0, 0.0, 1.0]]\n";
    let err = parse_config(doc).unwrap_err();
    assert!(err.to_string().contains("scenario.preset"), "{err}");
}

#[test]
fn default_config_round_trips() {
    let cfg = ExperimentConfig::default();
    assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
}

fn threshold_strategy() -> impl Strategy<Value = ThresholdSpec> {
    prop_oneof![
        (0.1..30.0f64).prop_map(ThresholdSpec::Value),
        (1e-6..0.5f64, 1u64..1000).prop_map(|(pfa, window)| ThresholdSpec::FalseAlarm { pfa, window }),
    ]
}

fn point_spec() -> impl Strategy<Value = ObjectSpec> {
    prop::collection::vec((-0.2..0.2f64, -0.2..0.2f64, 0.1..2.0f64), 1..6)
        .prop_map(|p| ObjectSpec::Points {
            points: p.into_iter().map(|(x, y, w)| [x, y, w]).collect(),
        })
}

prop_compose! {
    fn config_strategy()(
        gamma in 1e-3..2.0f64,
        photons in 1.0..1e4f64,
        airy in any::<bool>(),
        custom in prop::option::of((point_spec(), point_spec())),
        threshold in threshold_strategy(),
        change_time in 0u64..100,
        n_trials in 1usize..5000,
        seed in any::<u64>(),
        gammas in prop::collection::vec(1e-3..1.0f64, 1..6),
        thresholds in prop::collection::vec(0.5..15.0f64, 1..6),
        trispade in any::<bool>(),
        window_trials in 0usize..1000,
        direct_trials in 1usize..1000,
    ) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.gamma = gamma;
        cfg.scenario.photons_per_step = photons;
        cfg.scenario.psf = if airy { PsfKind::Airy } else { PsfKind::Gaussian };
        if let Some((a, b)) = custom {
            cfg.scenario.preset = ScenarioPreset::Custom;
            cfg.scenario.pre = Some(a);
            cfg.scenario.post = Some(b);
        }
        cfg.detector.threshold = threshold;
        cfg.detector.change_time = change_time;
        cfg.detector.n_trials = n_trials;
        cfg.detector.master_seed = seed;
        cfg.entropy_sweep.gammas = gammas.clone();
        cfg.latency_ensemble.gammas = gammas;
        cfg.threshold_sweep.thresholds = thresholds;
        cfg.threshold_sweep.receiver = if trispade { Receiver::TriSpade } else { Receiver::DirectImaging };
        cfg.threshold_sweep.window_trials = window_trials;
        cfg.latency_ensemble.direct_trials = direct_trials;
        cfg
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accepted_configs_round_trip(cfg in config_strategy()) {
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
    }
}
