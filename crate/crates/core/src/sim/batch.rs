use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::controller::{feasible_interval, Tracked};
use crate::cbf::{build_constraint, PairGeometry};
use crate::dynamics::{noise_seed, step_expected, VehicleState};
use crate::vec2::Vec2;

use super::config::{ConfigError, ScenarioConfig, ValidityRanges};
use super::episode::{follow_lane, run_episode_trial, CurveShape, MergeOutcome, SimulationTrace};

/// Stream tag separating initial-condition draws from motion noise.
const SAMPLING_STREAM: u64 = 0x5a4d_504c;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("n_trials must be at least 1")]
    NoTrials,
    #[error(
        "trial {trial}: all {attempts} draws rejected ({counts}); widen or move the \
         validity regimes or validity.alpha_nominal = {alpha:?}"
    )]
    SamplingExhausted {
        trial: usize,
        attempts: usize,
        counts: RejectionCounts,
        alpha: [f64; 2],
    },
}

/// Why sampled initial conditions were discarded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RejectionCounts {
    /// Some pair starts at or inside `r_safe`.
    pub too_close: usize,
    /// The control set is already empty at the first step.
    pub empty_start: usize,
    /// No constant acceleration avoids a violation over the horizon.
    pub unreachable: usize,
}

impl RejectionCounts {
    fn add(&mut self, o: &RejectionCounts) {
        self.too_close += o.too_close;
        self.empty_start += o.empty_start;
        self.unreachable += o.unreachable;
    }
}

impl std::fmt::Display for RejectionCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "too close: {}, empty first-step set: {}, unavoidable: {}",
            self.too_close, self.empty_start, self.unreachable
        )
    }
}

/// Brute-force check over a grid of constant accelerations: returns the first
/// one whose noise-free rollout keeps every pair at least `r_safe` apart for
/// the whole horizon.
pub fn constant_control_escape(cfg: &ScenarioConfig, grid_points: usize) -> Option<f64> {
    let params = cfg.step_params();
    let r_safe = cfg.controller.r_safe_m;
    let cb = cfg.controller.bounds();
    let ego_noise = cfg.ego.noise().ok()?;
    let merge_noise: Vec<_> = cfg.merging.iter().map(|m| m.noise().ok()).collect::<Option<_>>()?;
    let n = grid_points.max(2);
    (0..n).map(|k| cb.u_min + (cb.u_max - cb.u_min) * k as f64 / (n - 1) as f64).find(|&u| {
        let mut ego = cfg.ego.initial_state();
        let mut ego_arc = cfg.ego.init_arc_m;
        let mut merges: Vec<(VehicleState, f64)> = cfg
            .merging
            .iter()
            .map(|m| (m.initial_state(), m.init_arc_m))
            .collect();
        for _ in 0..=cfg.scenario.horizon_steps {
            if merges.iter().any(|(m, _)| (ego.x - m.x).norm() < r_safe) {
                return false;
            }
            let theta = cfg.ego.lane.heading_at(ego_arc);
            let raw = step_expected(&ego, Vec2::from_angle(theta) * u, &ego_noise, &params);
            (ego, ego_arc) = follow_lane(&cfg.ego.lane, ego_arc, raw);
            for (i, (m, arc)) in merges.iter_mut().enumerate() {
                let raw = step_expected(m, Vec2::ZERO, &merge_noise[i], &params);
                (*m, *arc) = follow_lane(&cfg.merging[i].lane, *arc, raw);
            }
        }
        true
    })
}

fn first_step_feasible(cfg: &ScenarioConfig) -> bool {
    let ego = Tracked {
        state: cfg.ego.initial_state(),
        noise: cfg.ego.noise().expect("validated"),
    };
    let theta = cfg.ego.lane.heading_at(cfg.ego.init_arc_m);
    let safety = cfg.controller.safety(cfg.controller.initial_alpha());
    let constraints: Vec<_> = cfg
        .merging
        .iter()
        .map(|m| {
            let g = PairGeometry::between(&ego.state, &ego.noise, &m.initial_state(), &m.noise().expect("validated"));
            build_constraint(&g, &safety, cfg.scenario.dt_s, theta, cfg.controller.coefficient_mode)
        })
        .collect();
    feasible_interval(&constraints, &cfg.controller.bounds()).is_some()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trial: usize,
    /// Name of the sampling regime the start was drawn from.
    pub regime: String,
    /// Draws consumed before an admissible start was found.
    pub attempts: usize,
    pub ego_init_arc_m: f64,
    pub ego_init_speed_mps: f64,
    pub alpha_nominal: f64,
    pub min_distance: f64,
    pub collision: bool,
    pub fallback_count: usize,
    pub violation_count: usize,
    pub outcome: MergeOutcome,
    pub curves: Vec<CurveShape>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    pub r_safe: f64,
    pub trials: Vec<TrialSummary>,
    pub rejected: RejectionCounts,
}

impl BatchReport {
    pub fn collision_rate(&self) -> f64 {
        let n = self.trials.len();
        self.trials.iter().filter(|t| t.collision).count() as f64 / n as f64
    }

    pub fn fallback_total(&self) -> usize {
        self.trials.iter().map(|t| t.fallback_count).sum()
    }

    pub fn min_distance(&self) -> f64 {
        self.trials.iter().map(|t| t.min_distance).fold(f64::INFINITY, f64::min)
    }

    /// Counts of per-trial minimum distances in bins of `width` starting at
    /// the largest multiple of `width` not above the smallest value.
    pub fn min_distance_histogram(&self, width: f64) -> Vec<(f64, f64, usize)> {
        let finite: Vec<f64> = self
            .trials
            .iter()
            .map(|t| t.min_distance)
            .filter(|d| d.is_finite())
            .collect();
        if finite.is_empty() {
            return Vec::new();
        }
        let lo = (finite.iter().copied().fold(f64::INFINITY, f64::min) / width).floor() * width;
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = (((hi - lo) / width).floor() as usize) + 1;
        let mut counts = vec![0usize; bins];
        for d in finite {
            let k = (((d - lo) / width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(k, c)| (lo + k as f64 * width, lo + (k + 1) as f64 * width, c))
            .collect()
    }
}

struct Draw {
    regime: usize,
    arc: f64,
    speed: f64,
    alpha: f64,
}

fn draw(seed: u64, trial: usize, attempt: usize, r: &ValidityRanges) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(seed, trial as u64, attempt as u64, SAMPLING_STREAM));
    let regime = rng.random_range(0..r.regimes.len());
    let mut uniform = |[lo, hi]: [f64; 2]| lo + (hi - lo) * rng.random::<f64>();
    let arc = uniform(r.regimes[regime].ego_init_arc_m);
    let speed = uniform(r.regimes[regime].ego_init_speed_mps);
    Draw {
        regime,
        arc,
        speed,
        alpha: uniform(r.alpha_nominal),
    }
}

/// Escape-grid resolution used when screening random starts.
const ESCAPE_GRID: usize = 33;

/// Samples an admissible start for `trial` and returns its configuration.
fn sample_trial(
    base: &ScenarioConfig,
    trial: usize,
    ranges: &ValidityRanges,
) -> Result<(ScenarioConfig, usize, usize, RejectionCounts), BatchError> {
    let mut counts = RejectionCounts::default();
    for attempt in 0..ranges.max_attempts_per_trial {
        let d = draw(base.scenario.seed, trial, attempt, ranges);
        let mut cfg = base.clone();
        cfg.ego.init_arc_m = d.arc;
        cfg.ego.init_speed_mps = d.speed;
        cfg.controller.alpha_nominal = d.alpha;
        cfg.controller.alpha_initial = None;
        cfg.controller.adaptive = true;
        cfg.scenario.allow_initial_violation = false;
        cfg.validity = None;

        let ego = cfg.ego.initial_state();
        let too_close = cfg
            .merging
            .iter()
            .any(|m| (ego.x - m.initial_state().x).norm() <= cfg.controller.r_safe_m);
        if too_close {
            counts.too_close += 1;
        } else if !first_step_feasible(&cfg) {
            counts.empty_start += 1;
        } else if constant_control_escape(&cfg, ESCAPE_GRID).is_none() {
            counts.unreachable += 1;
        } else {
            return Ok((cfg, d.regime, attempt + 1, counts));
        }
    }
    Err(BatchError::SamplingExhausted {
        trial,
        attempts: ranges.max_attempts_per_trial,
        counts,
        alpha: ranges.alpha_nominal,
    })
}

/// Runs `n_trials` randomized adaptive-mode episodes.
///
/// Trials run in parallel; every draw is keyed by `(seed, trial)` so the
/// report does not depend on scheduling.
pub fn run_validity_batch(
    base: &ScenarioConfig,
    n_trials: usize,
    ranges: &ValidityRanges,
) -> Result<BatchReport, BatchError> {
    if n_trials == 0 {
        return Err(BatchError::NoTrials);
    }
    base.validate()?;
    ranges.validate()?;
    let results: Vec<Result<(TrialSummary, RejectionCounts), BatchError>> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let (cfg, regime, attempts, counts) = sample_trial(base, trial, ranges)?;
            let trace = run_episode_trial(&cfg, trial as u64)?;
            let regime = ranges.regimes[regime].name.clone();
            Ok((summarize_trial(trial, regime, attempts, &cfg, &trace), counts))
        })
        .collect();
    let mut trials = Vec::with_capacity(n_trials);
    let mut rejected = RejectionCounts::default();
    for r in results {
        let (summary, counts) = r?;
        rejected.add(&counts);
        trials.push(summary);
    }
    Ok(BatchReport {
        r_safe: base.controller.r_safe_m,
        trials,
        rejected,
    })
}

/// Re-creates the configuration a batch used for `trial`.
pub fn trial_config(base: &ScenarioConfig, trial: usize, ranges: &ValidityRanges) -> Result<ScenarioConfig, BatchError> {
    sample_trial(base, trial, ranges).map(|(cfg, ..)| cfg)
}

fn summarize_trial(
    trial: usize,
    regime: String,
    attempts: usize,
    cfg: &ScenarioConfig,
    trace: &SimulationTrace,
) -> TrialSummary {
    let s = &trace.summary;
    TrialSummary {
        trial,
        regime,
        attempts,
        ego_init_arc_m: cfg.ego.init_arc_m,
        ego_init_speed_mps: cfg.ego.init_speed_mps,
        alpha_nominal: cfg.controller.alpha_nominal,
        min_distance: s.min_distance,
        collision: s.collision,
        fallback_count: s.fallback_count,
        violation_count: s.violation_count,
        outcome: s.outcome.clone(),
        curves: s.curves.clone(),
    }
}
