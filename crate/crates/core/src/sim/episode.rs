use serde::{Deserialize, Serialize};

use crate::controller::{step_with_model, ControlDecision, ForwardModel, Interval, Status, Tracked};
use crate::dynamics::{noise_seed, step_expected, step_stochastic, NoiseModel, StepParams, VehicleState};
use crate::feasibility::Activation;
use crate::geometry::{project_control, LanePath};
use crate::vec2::Vec2;

use super::config::{ConfigError, ScenarioConfig};

/// Re-aligns the velocity with the lane when the vehicle moves onto a
/// segment with a different heading, keeping the signed along-lane speed.
/// Returns the new state and its arc length.
pub fn follow_lane(lane: &LanePath, prev_arc: f64, s: VehicleState) -> (VehicleState, f64) {
    let arc = lane.project(s.x);
    let before = lane.heading_at(prev_arc);
    let after = lane.heading_at(arc);
    if before == after {
        return (s, arc);
    }
    let speed = s.v.dot(Vec2::from_angle(before));
    (VehicleState::new(s.x, Vec2::from_angle(after) * speed), arc)
}

/// Look-ahead that keeps every vehicle on its lane.
pub struct LaneModel<'a> {
    pub params: StepParams,
    pub ego_lane: &'a LanePath,
    pub ego_arc: f64,
    pub merge_lanes: &'a [LanePath],
    pub merge_arcs: &'a [f64],
}

impl ForwardModel for LaneModel<'_> {
    fn predict_ego(&self, ego: &Tracked, u: Vec2) -> (VehicleState, f64) {
        let raw = step_expected(&ego.state, u, &ego.noise, &self.params);
        let (next, arc) = follow_lane(self.ego_lane, self.ego_arc, raw);
        (next, self.ego_lane.heading_at(arc))
    }

    fn predict_merge(&self, index: usize, m: &Tracked) -> VehicleState {
        let raw = step_expected(&m.state, Vec2::ZERO, &m.noise, &self.params);
        follow_lane(&self.merge_lanes[index], self.merge_arcs[index], raw).0
    }
}

/// Controller output applied between one record and the next.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRecord {
    pub u: f64,
    pub theta: f64,
    pub alpha_used: f64,
    pub alpha_next: f64,
    pub interval: Option<Interval>,
    pub status: Status,
    pub fallback: bool,
    pub safety_violated: bool,
    pub activations: Vec<Activation>,
    /// Look-ahead α_feasible per pair (NaN where undefined).
    pub alpha_feasible_next: Vec<f64>,
}

impl ControlRecord {
    fn from_decision(d: &ControlDecision, theta: f64) -> Self {
        Self {
            u: d.u,
            theta,
            alpha_used: d.alpha_used,
            alpha_next: d.alpha_next,
            interval: d.feasible_interval,
            status: d.status,
            fallback: d.fallback,
            safety_violated: d.safety_violated,
            activations: d.pairs.iter().map(|p| p.activation).collect(),
            alpha_feasible_next: d
                .pairs
                .iter()
                .map(|p| p.next.map_or(f64::NAN, |n| n.alpha_feasible))
                .collect(),
        }
    }
}

/// Snapshot of all vehicles at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub ego: VehicleState,
    pub ego_arc: f64,
    pub merges: Vec<VehicleState>,
    pub merge_arcs: Vec<f64>,
    pub distances: Vec<f64>,
    pub h: Vec<f64>,
    /// `None` on the final record, which has no control applied after it.
    pub control: Option<ControlRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relative {
    Ahead,
    Behind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Slot {
    Front,
    Between,
    Behind,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Front => "front",
            Slot::Between => "between",
            Slot::Behind => "behind",
        }
    }
}

/// Where the ego ended up relative to the merging vehicles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeOutcome {
    Completed {
        /// Step at which the ego reached its merge point.
        step: usize,
        /// Position of each merging vehicle relative to the ego.
        vehicles: Vec<Relative>,
        slot: Slot,
    },
    /// The ego never reached the merge point within the horizon.
    Incomplete,
}

impl MergeOutcome {
    pub fn slot(&self) -> Option<Slot> {
        match self {
            MergeOutcome::Completed { slot, .. } => Some(*slot),
            MergeOutcome::Incomplete => None,
        }
    }

    pub fn label(&self) -> &'static str {
        self.slot().map_or("incomplete", Slot::as_str)
    }
}

/// Shape of a pairwise distance curve over an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveShape {
    /// Settles toward a floor at or above `r_safe` (ego ends up behind).
    Approaching,
    /// Grows again after its minimum (ego ends up ahead or the gap opens).
    Diverging,
    /// Dips below `r_safe`.
    Violating,
}

impl CurveShape {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveShape::Approaching => "approaching",
            CurveShape::Diverging => "diverging",
            CurveShape::Violating => "violating",
        }
    }
}

/// Gap growth over the final steps that counts as diverging.
const DIVERGENCE_GAIN_M: f64 = 0.5;

pub fn classify_curve(distances: &[f64], r_safe: f64) -> CurveShape {
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    if min < r_safe {
        return CurveShape::Violating;
    }
    let n = distances.len();
    let last = distances[n - 1];
    let rising = n >= 2 && last > distances[n - 2];
    if rising && last > min + DIVERGENCE_GAIN_M {
        CurveShape::Diverging
    } else {
        CurveShape::Approaching
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub min_distance: f64,
    pub min_distance_step: usize,
    pub collision: bool,
    pub fallback_count: usize,
    pub violation_count: usize,
    pub outcome: MergeOutcome,
    pub curves: Vec<CurveShape>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub records: Vec<StepRecord>,
    pub summary: TraceSummary,
}

impl SimulationTrace {
    pub fn controls(&self) -> impl Iterator<Item = &ControlRecord> {
        self.records.iter().filter_map(|r| r.control.as_ref())
    }

    /// Distance series for merging vehicle `i`.
    pub fn distance_series(&self, i: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.distances[i]).collect()
    }

    /// Steps whose control interval was empty.
    pub fn fallback_steps(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.control.as_ref().is_some_and(|c| c.fallback))
            .map(|r| r.t)
            .collect()
    }
}

/// Orders vehicles by progress past their merge points at the first step the
/// ego reaches its own merge point.
pub fn classify_merge_outcome(records: &[StepRecord], ego_lane: &LanePath, merge_lanes: &[LanePath]) -> MergeOutcome {
    let ego_merge = ego_lane.merge_arc_length();
    let Some(rec) = records.iter().find(|r| r.ego_arc >= ego_merge) else {
        return MergeOutcome::Incomplete;
    };
    let ego_progress = rec.ego_arc - ego_merge;
    let vehicles: Vec<Relative> = rec
        .merge_arcs
        .iter()
        .zip(merge_lanes)
        .map(|(arc, lane)| {
            if arc - lane.merge_arc_length() > ego_progress {
                Relative::Ahead
            } else {
                Relative::Behind
            }
        })
        .collect();
    let ahead = vehicles.iter().filter(|v| **v == Relative::Ahead).count();
    let slot = if ahead == 0 {
        Slot::Front
    } else if ahead == vehicles.len() {
        Slot::Behind
    } else {
        Slot::Between
    };
    MergeOutcome::Completed {
        step: rec.t,
        vehicles,
        slot,
    }
}

fn snapshot(
    t: usize,
    ego: VehicleState,
    ego_arc: f64,
    merges: &[VehicleState],
    merge_arcs: &[f64],
    r_safe: f64,
) -> StepRecord {
    let distances: Vec<f64> = merges.iter().map(|m| (ego.x - m.x).norm()).collect();
    let h = distances.iter().map(|d| d * d - r_safe * r_safe).collect();
    StepRecord {
        t,
        ego,
        ego_arc,
        merges: merges.to_vec(),
        merge_arcs: merge_arcs.to_vec(),
        distances,
        h,
        control: None,
    }
}

/// Runs one episode; `trial` keys the noise draws together with the seed.
pub fn run_episode_trial(cfg: &ScenarioConfig, trial: u64) -> Result<SimulationTrace, ConfigError> {
    cfg.validate()?;
    let params = cfg.step_params();
    let seed = cfg.scenario.seed;
    let ctrl = &cfg.controller;
    let r_safe = ctrl.r_safe_m;

    let ego_noise = cfg.ego.noise().expect("validated");
    let merge_noise: Vec<NoiseModel> = cfg.merging.iter().map(|m| m.noise().expect("validated")).collect();
    let merge_lanes: Vec<LanePath> = cfg.merging.iter().map(|m| m.lane.clone()).collect();

    let mut ego = cfg.ego.initial_state();
    let mut ego_arc = cfg.ego.init_arc_m;
    let mut merges: Vec<VehicleState> = cfg.merging.iter().map(|m| m.initial_state()).collect();
    let mut merge_arcs: Vec<f64> = cfg.merging.iter().map(|m| m.init_arc_m).collect();
    let mut alpha = ctrl.initial_alpha();

    let mut records = Vec::with_capacity(cfg.scenario.horizon_steps + 1);
    for t in 0..cfg.scenario.horizon_steps {
        let mut rec = snapshot(t, ego, ego_arc, &merges, &merge_arcs, r_safe);
        let theta = cfg.ego.lane.heading_at(ego_arc);
        let ego_tracked = Tracked {
            state: ego,
            noise: ego_noise,
        };
        let tracked: Vec<Tracked> = merges
            .iter()
            .zip(&merge_noise)
            .map(|(s, n)| Tracked { state: *s, noise: *n })
            .collect();
        let model = LaneModel {
            params,
            ego_lane: &cfg.ego.lane,
            ego_arc,
            merge_lanes: &merge_lanes,
            merge_arcs: &merge_arcs,
        };
        let decision = step_with_model(&ego_tracked, &tracked, ctrl, params.dt, theta, alpha, &model);
        rec.control = Some(ControlRecord::from_decision(&decision, theta));
        records.push(rec);
        alpha = decision.alpha_next;

        let u = project_control(theta, decision.u);
        let raw = step_stochastic(&ego, u, &ego_noise, &params, noise_seed(seed, trial, t as u64, 0));
        (ego, ego_arc) = follow_lane(&cfg.ego.lane, ego_arc, raw);
        for (i, m) in merges.iter_mut().enumerate() {
            let key = noise_seed(seed, trial, t as u64, i as u64 + 1);
            let raw = step_stochastic(m, Vec2::ZERO, &merge_noise[i], &params, key);
            (*m, merge_arcs[i]) = follow_lane(&merge_lanes[i], merge_arcs[i], raw);
        }
    }
    records.push(snapshot(cfg.scenario.horizon_steps, ego, ego_arc, &merges, &merge_arcs, r_safe));

    let summary = summarize(&records, cfg, &merge_lanes);
    Ok(SimulationTrace { records, summary })
}

/// Runs one episode with trial index 0.
pub fn run_episode(cfg: &ScenarioConfig) -> Result<SimulationTrace, ConfigError> {
    run_episode_trial(cfg, 0)
}

fn summarize(records: &[StepRecord], cfg: &ScenarioConfig, merge_lanes: &[LanePath]) -> TraceSummary {
    let r_safe = cfg.controller.r_safe_m;
    let mut min_distance = f64::INFINITY;
    let mut min_distance_step = 0;
    for r in records {
        for &d in &r.distances {
            if d < min_distance {
                min_distance = d;
                min_distance_step = r.t;
            }
        }
    }
    let controls = records.iter().filter_map(|r| r.control.as_ref());
    let fallback_count = controls.clone().filter(|c| c.fallback).count();
    let violation_count = records
        .iter()
        .filter(|r| r.distances.iter().any(|&d| d < r_safe))
        .count();
    let curves = (0..cfg.merging.len())
        .map(|i| {
            let series: Vec<f64> = records.iter().map(|r| r.distances[i]).collect();
            classify_curve(&series, r_safe)
        })
        .collect();
    TraceSummary {
        min_distance,
        min_distance_step,
        collision: min_distance < r_safe,
        fallback_count,
        violation_count,
        outcome: classify_merge_outcome(records, &cfg.ego.lane, merge_lanes),
        curves,
    }
}
