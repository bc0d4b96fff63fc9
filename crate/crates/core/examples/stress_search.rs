//! Deterministic search for a two-merger scenario in which the fixed-α
//! controller runs out of feasible controls and loses separation while the
//! adaptive controller keeps a feasible set and `r_safe` throughout.
//!
//! Usage: stress_search <base.toml> [candidates] [write <k> <out.toml>]
//!
//! Candidates are keyed by index, so any hit can be regenerated with `write`.

use merge_cbf::sim::{run_fixed_alpha_comparison, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn candidate(base: &ScenarioConfig, k: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(k);
    let mut c = base.clone();
    c.validity = None;
    c.controller.alpha_nominal = rng.random_range(0.1..3.0);
    c.controller.alpha_initial = None;
    c.controller.u_nominal_mps2 = rng.random_range(0.0..2.0);
    c.ego.init_arc_m = rng.random_range(0.0..250.0);
    c.ego.init_speed_mps = rng.random_range(15.0..30.0);
    c.merging[0].init_speed_mps = rng.random_range(15.0..30.0);
    let mut second = c.merging[0].clone();
    if rng.random_bool(0.5) {
        second.init_arc_m = rng.random_range(10.0..120.0);
    } else {
        second.lane = c.ego.lane.clone();
        second.init_arc_m = c.ego.init_arc_m + rng.random_range(10.0..120.0);
    }
    second.init_speed_mps = rng.random_range(15.0..30.0);
    c.merging.truncate(1);
    c.merging.push(second);
    c
}

/// `(fixed min distance, adaptive min distance, fixed fallbacks)` for a hit.
fn score(c: &ScenarioConfig) -> Option<(f64, f64, usize)> {
    c.validate().ok()?;
    let cmp = run_fixed_alpha_comparison(c).ok()?;
    let r = c.controller.r_safe_m;
    let fixed_fallbacks = cmp.fixed.fallback_steps().len();
    let fixed_bad = fixed_fallbacks > 0 && cmp.fixed.summary.min_distance < r;
    let adaptive_ok = cmp.adaptive.fallback_steps().is_empty() && cmp.adaptive.summary.min_distance >= r;
    (fixed_bad && adaptive_ok).then_some((cmp.fixed.summary.min_distance, cmp.adaptive.summary.min_distance, fixed_fallbacks))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let Some(path) = args.get(1) else {
        eprintln!("usage: stress_search <base.toml> [candidates] [write <k> <out.toml>]");
        std::process::exit(2);
    };
    let base = ScenarioConfig::from_toml_str(&std::fs::read_to_string(path).expect("readable base config"))
        .expect("valid base config");
    if let (Some("write"), Some(k), Some(out)) = (args.get(2).map(String::as_str), args.get(3), args.get(4)) {
        let c = candidate(&base, k.parse().expect("candidate index"));
        std::fs::write(out, c.to_toml_string()).expect("writable output");
        return;
    }
    let n: u64 = args.get(2).map_or(20_000, |s| s.parse().expect("candidate count"));
    let hits: Vec<(u64, (f64, f64, usize))> = (0..n)
        .into_par_iter()
        .filter_map(|k| score(&candidate(&base, k)).map(|s| (k, s)))
        .collect();
    println!("{} hits out of {n}", hits.len());
    for (k, (fixed, adaptive, fallbacks)) in hits.iter().take(20) {
        println!("k={k} fixed_min={fixed:.3} adaptive_min={adaptive:.3} fixed_fallbacks={fallbacks}");
    }
}
