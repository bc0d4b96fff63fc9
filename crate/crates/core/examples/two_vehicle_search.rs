//! Deterministic search for a two-vehicle merge in which a small nominal α
//! yields to more traffic than a large one.
//!
//! Usage: two_vehicle_search <base.toml> <case 1|2> [candidates] [write <k> <out.toml>]
//!
//! Case 1 starts the ego 2 m/s faster than the first merger, case 2 starts it
//! 2 m/s slower. A hit yields between/front (case 1) or behind/between
//! (case 2) at α = 1 and α = 15, collision-free.

use merge_cbf::sim::{run_episode, MergeOutcome, Relative, ScenarioConfig, VehicleConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
struct Params {
    m1_arc: f64,
    m1_speed: f64,
    gap: f64,
    m2_speed: f64,
    ego_arc: f64,
    u_nominal: f64,
}

fn params(k: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(k);
    Params {
        m1_arc: rng.random_range(0.0..120.0),
        m1_speed: rng.random_range(16.0..26.0),
        gap: rng.random_range(10.0..60.0),
        m2_speed: rng.random_range(16.0..30.0),
        ego_arc: rng.random_range(50.0..250.0),
        u_nominal: rng.random_range(0.0..2.0),
    }
}

fn build(base: &ScenarioConfig, p: &Params, dv: f64, alpha: f64) -> ScenarioConfig {
    let mut c = base.clone();
    c.validity = None;
    c.controller.r_safe_m = 5.0;
    c.controller.alpha_nominal = alpha;
    c.controller.alpha_initial = None;
    c.controller.u_nominal_mps2 = p.u_nominal;
    c.ego.init_arc_m = p.ego_arc;
    c.ego.init_speed_mps = p.m1_speed + dv;
    let m1 = VehicleConfig {
        init_arc_m: p.m1_arc,
        init_speed_mps: p.m1_speed,
        ..c.merging[0].clone()
    };
    let m2 = VehicleConfig {
        init_arc_m: p.m1_arc + p.gap,
        init_speed_mps: p.m2_speed,
        ..m1.clone()
    };
    c.merging = vec![m1, m2];
    c
}

/// Relative positions of (m1, m2) at the ego's merge crossing, or None on a
/// collision or an unfinished merge.
fn outcome(c: &ScenarioConfig) -> Option<(Relative, Relative, f64)> {
    c.validate().ok()?;
    let t = run_episode(c).ok()?;
    if t.summary.collision {
        return None;
    }
    match &t.summary.outcome {
        MergeOutcome::Completed { vehicles, .. } => Some((vehicles[0], vehicles[1], t.summary.min_distance)),
        _ => None,
    }
}

fn check(base: &ScenarioConfig, p: &Params, case: usize) -> Option<[f64; 2]> {
    use Relative::*;
    let expect = match case {
        1 => [(2.0, 1.0, (Behind, Ahead)), (2.0, 15.0, (Behind, Behind))],
        _ => [(-2.0, 1.0, (Ahead, Ahead)), (-2.0, 15.0, (Behind, Ahead))],
    };
    let mut mins = [0.0; 2];
    for (i, (dv, alpha, want)) in expect.into_iter().enumerate() {
        let (r1, r2, min) = outcome(&build(base, p, dv, alpha))?;
        if (r1, r2) != want {
            return None;
        }
        mins[i] = min;
    }
    Some(mins)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let (Some(path), Some(case)) = (args.get(1), args.get(2).and_then(|c| c.parse::<usize>().ok())) else {
        eprintln!("usage: two_vehicle_search <base.toml> <case 1|2> [candidates] [write <k> <out.toml>]");
        std::process::exit(2);
    };
    let base = ScenarioConfig::from_toml_str(&std::fs::read_to_string(path).expect("readable base config"))
        .expect("valid base config");
    let dv = if case == 1 { 2.0 } else { -2.0 };
    if let (Some("write"), Some(k), Some(out)) = (args.get(3).map(String::as_str), args.get(4), args.get(5)) {
        let p = params(k.parse().expect("candidate index"));
        std::fs::write(out, build(&base, &p, dv, 1.0).to_toml_string()).expect("writable output");
        println!("{p:?}");
        return;
    }
    let n: u64 = args.get(3).map_or(20_000, |s| s.parse().expect("candidate count"));
    let mut hits: Vec<(u64, [f64; 2])> = (0..n)
        .into_par_iter()
        .filter_map(|k| check(&base, &params(k), case).map(|m| (k, m)))
        .collect();
    println!("{} hits out of {n}", hits.len());
    hits.sort_by(|a, b| b.1[0].min(b.1[1]).total_cmp(&a.1[0].min(a.1[1])));
    for (k, m) in hits.iter().take(10) {
        println!("k={k} mins={m:.3?} {:?}", params(*k));
    }
}
