use merge_cbf::sim::{
    classify_curve, run_episode, run_episode_trial, trial_config, CurveShape, ScenarioConfig,
};

fn validity() -> ScenarioConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/validity.toml");
    ScenarioConfig::from_toml_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn trace_has_one_record_per_step_plus_the_initial_state() {
    let cfg = validity();
    let t = run_episode(&cfg).unwrap();
    assert_eq!(t.records.len(), cfg.scenario.horizon_steps + 1);
    assert!(t.records[0].control.is_some());
    assert!(t.records.last().unwrap().control.is_none());
}

#[test]
fn same_seed_same_trace() {
    let cfg = validity();
    assert_eq!(run_episode_trial(&cfg, 3).unwrap(), run_episode_trial(&cfg, 3).unwrap());
}

#[test]
fn different_trials_draw_different_noise() {
    let cfg = validity();
    let a = run_episode_trial(&cfg, 0).unwrap();
    let b = run_episode_trial(&cfg, 1).unwrap();
    assert_ne!(a.records[10].ego.x, b.records[10].ego.x);
}

#[test]
fn sampled_trials_are_reproducible_and_inside_the_regimes() {
    let cfg = validity();
    let ranges = cfg.validity.clone().unwrap();
    for trial in 0..20 {
        let a = trial_config(&cfg, trial, &ranges).unwrap();
        let b = trial_config(&cfg, trial, &ranges).unwrap();
        assert_eq!(a, b);
        let ok = ranges.regimes.iter().any(|r| {
            (r.ego_init_arc_m[0]..=r.ego_init_arc_m[1]).contains(&a.ego.init_arc_m)
                && (r.ego_init_speed_mps[0]..=r.ego_init_speed_mps[1]).contains(&a.ego.init_speed_mps)
        });
        assert!(ok, "trial {trial}");
        assert!((ranges.alpha_nominal[0]..=ranges.alpha_nominal[1]).contains(&a.controller.alpha_nominal));
    }
}

#[test]
fn curve_classes() {
    let approaching: Vec<f64> = (0..50).map(|k| 9.0 + 20.0 * (-0.1 * k as f64).exp()).collect();
    assert_eq!(classify_curve(&approaching, 8.0), CurveShape::Approaching);
    let diverging: Vec<f64> = (0..50).map(|k| 9.0 + (k as f64 - 20.0).abs()).collect();
    assert_eq!(classify_curve(&diverging, 8.0), CurveShape::Diverging);
    let violating = [20.0, 10.0, 7.5, 12.0];
    assert_eq!(classify_curve(&violating, 8.0), CurveShape::Violating);
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = validity();
    let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(cfg, back);
}

#[test]
fn invalid_configs_are_rejected() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/validity.toml")).unwrap();
    for (from, to) in [
        ("eta = 0.99", "eta = 1.5"),
        ("dt_s = 0.05", "dt_s = -0.05"),
        ("r_safe_m = 8.0", "r_safe_m = 0.0"),
        ("[scenario]", "[scenario]\nbogus = 1"),
    ] {
        assert!(text.contains(from), "{from}");
        let bad = text.replacen(from, to, 1);
        assert!(ScenarioConfig::from_toml_str(&bad).is_err(), "{to}");
    }
}
