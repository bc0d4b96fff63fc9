//! Bi-level safe controller.
//!
//! Each step filters the nominal acceleration through every pairwise barrier
//! constraint at the current α, then looks one step ahead with the expected
//! dynamics and raises α for the next step just enough to keep the control
//! set non-empty there.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbf::{build_constraint, CoefficientMode, ConstraintCoeffs, PairGeometry, SafetyParams};
use crate::dynamics::{step_expected, Discretization, NoiseModel, StepParams, VehicleState};
use crate::feasibility::{
    adapt_alpha, bounds_for_pair, half_line_activation, Activation, ControlBounds, FeasibilityBounds,
};
use crate::geometry::project_control;
use crate::vec2::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("no control satisfies every constraint inside the control box")]
    Infeasible,
    #[error("invalid controller configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub alpha_nominal: f64,
    pub u_nominal_mps2: f64,
    pub u_min_mps2: f64,
    pub u_max_mps2: f64,
    pub r_safe_m: f64,
    pub eta: f64,
    #[serde(default)]
    pub coefficient_mode: CoefficientMode,
    /// `false` keeps α fixed at the nominal value.
    #[serde(default = "default_true")]
    pub adaptive: bool,
    /// α used on the very first step; defaults to `alpha_nominal`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_initial: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        ControlBounds::new(self.u_min_mps2, self.u_max_mps2)
            .map_err(|e| ControlError::Config(e.to_string()))?;
        SafetyParams::new(self.r_safe_m, self.eta, self.alpha_nominal)
            .map_err(|e| ControlError::Config(e.to_string()))?;
        if !self.u_nominal_mps2.is_finite() {
            return Err(ControlError::Config("u_nominal_mps2 must be finite".into()));
        }
        if let Some(a) = self.alpha_initial {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(ControlError::Config(format!(
                    "alpha_initial must be non-negative, got {a}"
                )));
            }
        }
        Ok(())
    }

    /// Non-fatal configuration issues.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.u_min_mps2..=self.u_max_mps2).contains(&self.u_nominal_mps2) {
            out.push(format!(
                "u_nominal_mps2 = {} lies outside [{}, {}]; it will always be clipped",
                self.u_nominal_mps2, self.u_min_mps2, self.u_max_mps2
            ));
        }
        out
    }

    pub fn bounds(&self) -> ControlBounds {
        ControlBounds {
            u_min: self.u_min_mps2,
            u_max: self.u_max_mps2,
        }
    }

    pub fn safety(&self, alpha: f64) -> SafetyParams {
        SafetyParams {
            r_safe: self.r_safe_m,
            eta: self.eta,
            alpha,
        }
    }

    pub fn initial_alpha(&self) -> f64 {
        self.alpha_initial.unwrap_or(self.alpha_nominal)
    }
}

/// A vehicle as observed by the controller: true state plus noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tracked {
    pub state: VehicleState,
    pub noise: NoiseModel,
}

/// Expected one-step propagation used for the look-ahead.
pub trait ForwardModel {
    /// Ego state after applying planar acceleration `u`, and the ego heading there.
    fn predict_ego(&self, ego: &Tracked, u: Vec2) -> (VehicleState, f64);
    /// State of merging vehicle `index` after one step with zero control.
    fn predict_merge(&self, index: usize, m: &Tracked) -> VehicleState;
}

/// Straight-line propagation with a constant ego heading.
#[derive(Debug, Clone, Copy)]
pub struct StraightLine {
    pub params: StepParams,
    pub theta: f64,
}

impl ForwardModel for StraightLine {
    fn predict_ego(&self, ego: &Tracked, u: Vec2) -> (VehicleState, f64) {
        (step_expected(&ego.state, u, &ego.noise, &self.params), self.theta)
    }

    fn predict_merge(&self, _index: usize, m: &Tracked) -> VehicleState {
        step_expected(&m.state, Vec2::ZERO, &m.noise, &self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, u: f64) -> bool {
        (self.lo..=self.hi).contains(&u)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Nominal,
    Filtered,
    InfeasibleFallback,
    SafetyViolated,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Nominal => "nominal",
            Status::Filtered => "filtered",
            Status::InfeasibleFallback => "infeasible-fallback",
            Status::SafetyViolated => "safety-violated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDiagnostics {
    pub distance: f64,
    pub h: f64,
    pub constraint: ConstraintCoeffs,
    pub activation: Activation,
    /// Look-ahead bounds at t+1; `None` when `h` there is numerically zero.
    pub next: Option<FeasibilityBounds>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub u: f64,
    pub alpha_used: f64,
    /// α to use on the next call.
    pub alpha_next: f64,
    pub feasible_interval: Option<Interval>,
    pub status: Status,
    /// The control set was empty and the least-violating box endpoint was used.
    pub fallback: bool,
    /// Some pair is already inside `r_safe`.
    pub safety_violated: bool,
    pub pairs: Vec<PairDiagnostics>,
}

/// Intersection of the control box with every half-line `a u ≤ b`.
pub fn feasible_interval(constraints: &[ConstraintCoeffs], cb: &ControlBounds) -> Option<Interval> {
    let mut lo = cb.u_min;
    let mut hi = cb.u_max;
    for c in constraints {
        if c.a > 0.0 {
            hi = hi.min(c.b / c.a);
        } else if c.a < 0.0 {
            lo = lo.max(c.b / c.a);
        } else if c.b < 0.0 {
            return None;
        }
    }
    (lo <= hi).then_some(Interval { lo, hi })
}

/// Minimizer of `(u − ū)²` over the interval.
pub fn solve_qp(interval: Option<Interval>, u_nominal: f64) -> Result<f64, ControlError> {
    let iv = interval.ok_or(ControlError::Infeasible)?;
    Ok(u_nominal.clamp(iv.lo, iv.hi))
}

/// Box endpoint with the smallest worst-case violation; ties go to the
/// endpoint nearer the nominal control.
pub fn least_infeasible(constraints: &[ConstraintCoeffs], cb: &ControlBounds, u_nominal: f64) -> f64 {
    let worst = |u: f64| {
        constraints
            .iter()
            .map(|c| c.violation(u))
            .fold(0.0, f64::max)
    };
    let (lo, hi) = (worst(cb.u_min), worst(cb.u_max));
    if lo < hi {
        cb.u_min
    } else if hi < lo {
        cb.u_max
    } else if (u_nominal - cb.u_min).abs() <= (u_nominal - cb.u_max).abs() {
        cb.u_min
    } else {
        cb.u_max
    }
}

/// One controller step with a straight-line look-ahead at heading `theta`.
pub fn step(
    ego: &Tracked,
    merges: &[Tracked],
    cfg: &ControllerConfig,
    dt: f64,
    theta: f64,
    alpha_prev: f64,
) -> ControlDecision {
    let params = StepParams {
        dt,
        scheme: Discretization::default(),
    };
    step_with_model(ego, merges, cfg, dt, theta, alpha_prev, &StraightLine { params, theta })
}

/// One controller step using `model` for the t+1 look-ahead.
pub fn step_with_model(
    ego: &Tracked,
    merges: &[Tracked],
    cfg: &ControllerConfig,
    dt: f64,
    theta: f64,
    alpha_prev: f64,
    model: &dyn ForwardModel,
) -> ControlDecision {
    let cb = cfg.bounds();
    let safety = cfg.safety(alpha_prev);
    let mode = cfg.coefficient_mode;

    let geoms: Vec<PairGeometry> = merges
        .iter()
        .map(|m| PairGeometry::between(&ego.state, &ego.noise, &m.state, &m.noise))
        .collect();
    let constraints: Vec<ConstraintCoeffs> = geoms
        .iter()
        .map(|g| build_constraint(g, &safety, dt, theta, mode))
        .collect();
    let safety_violated = geoms.iter().any(|g| g.h(cfg.r_safe_m) < 0.0);

    let interval = feasible_interval(&constraints, &cb);
    let (u, fallback) = match solve_qp(interval, cfg.u_nominal_mps2) {
        Ok(u) => (u, false),
        Err(_) => (least_infeasible(&constraints, &cb, cfg.u_nominal_mps2), true),
    };

    // Look-ahead: expected states at t+1 under the chosen control.
    let (ego_next, theta_next) = model.predict_ego(ego, project_control(theta, u));
    let ego_next = Tracked {
        state: ego_next,
        noise: ego.noise,
    };
    let next: Vec<Option<FeasibilityBounds>> = merges
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let m_next = Tracked {
                state: model.predict_merge(i, m),
                noise: m.noise,
            };
            let g = PairGeometry::between(&ego_next.state, &ego_next.noise, &m_next.state, &m_next.noise);
            bounds_for_pair(&g, cfg.r_safe_m, cfg.eta, dt, theta_next, &cb, mode).ok()
        })
        .collect();

    let alpha_next = if cfg.adaptive {
        let fbs: Vec<FeasibilityBounds> = next.iter().flatten().copied().collect();
        adapt_alpha(cfg.alpha_nominal, &fbs)
    } else {
        cfg.alpha_nominal
    };

    let status = if safety_violated {
        Status::SafetyViolated
    } else if fallback {
        Status::InfeasibleFallback
    } else if u == cfg.u_nominal_mps2 {
        Status::Nominal
    } else {
        Status::Filtered
    };

    let pairs = geoms
        .iter()
        .zip(&constraints)
        .zip(next)
        .map(|((g, c), next)| PairDiagnostics {
            distance: g.dx.norm(),
            h: g.h(cfg.r_safe_m),
            constraint: *c,
            activation: half_line_activation(c.a, c.b, &cb),
            next,
        })
        .collect();

    ControlDecision {
        u,
        alpha_used: alpha_prev,
        alpha_next,
        feasible_interval: interval,
        status,
        fallback,
        safety_violated,
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(adaptive: bool, alpha: f64) -> ControllerConfig {
        ControllerConfig {
            alpha_nominal: alpha,
            u_nominal_mps2: 1.0,
            u_min_mps2: -5.0,
            u_max_mps2: 3.0,
            r_safe_m: 8.0,
            eta: 0.99,
            coefficient_mode: CoefficientMode::DerivationExact,
            adaptive,
            alpha_initial: None,
        }
    }

    fn tracked(x: f64, v: f64) -> Tracked {
        Tracked {
            state: VehicleState::new(Vec2::new(x, 0.0), Vec2::new(v, 0.0)),
            noise: NoiseModel::zero(),
        }
    }

    fn cb() -> ControlBounds {
        ControlBounds::new(-5.0, 3.0).unwrap()
    }

    #[test]
    fn interval_examples() {
        assert_eq!(feasible_interval(&[], &cb()), Some(Interval { lo: -5.0, hi: 3.0 }));
        let c = ConstraintCoeffs { a: -2.0, b: 16.0 };
        assert_eq!(feasible_interval(&[c], &cb()), Some(Interval { lo: -5.0, hi: 3.0 }));
        let c = ConstraintCoeffs { a: -2.0, b: -8.0 };
        assert_eq!(feasible_interval(&[c], &cb()), None);
        let c = ConstraintCoeffs { a: 0.0, b: -1.0 };
        assert_eq!(feasible_interval(&[c], &cb()), None);
    }

    #[test]
    fn qp_examples() {
        let iv = Some(Interval { lo: -5.0, hi: 3.0 });
        assert_eq!(solve_qp(iv, 2.0), Ok(2.0));
        assert_eq!(solve_qp(iv, 5.0), Ok(3.0));
        assert_eq!(solve_qp(Some(Interval { lo: -8.0, hi: 3.0 }), -9.0), Ok(-8.0));
        assert_eq!(solve_qp(None, 0.0), Err(ControlError::Infeasible));
    }

    #[test]
    fn no_merging_vehicles_is_nominal() {
        let c = cfg(true, 2.0);
        let d = step(&tracked(0.0, 20.0), &[], &c, 0.1, 0.0, 2.0);
        assert_eq!(d.status, Status::Nominal);
        assert_eq!(d.u, 1.0);
        assert_eq!(d.alpha_next, 2.0);
        assert!(d.pairs.is_empty());
    }

    #[test]
    fn distant_pair_leaves_nominal_untouched() {
        let c = cfg(true, 1.0);
        let d = step(&tracked(0.0, 20.0), &[tracked(200.0, 25.0)], &c, 0.1, 0.0, 1.0);
        assert_eq!(d.status, Status::Nominal);
        assert_eq!(d.u, 1.0);
        assert_eq!(d.pairs[0].activation, Activation::Inactive);
        assert_eq!(d.alpha_next, 1.0);
    }

    #[test]
    fn adaptive_raises_alpha_when_next_step_needs_it() {
        // Ego 10 m ahead of a vehicle closing at 6 m/s.
        let ego = tracked(10.0, 20.0);
        let m = tracked(0.0, 26.0);
        let adaptive = step(&ego, &[m], &cfg(true, 1.0), 0.1, 0.0, 1.0);
        let needed = adaptive.pairs[0].next.unwrap().alpha_feasible;
        assert!(needed > 1.0);
        assert!(adaptive.alpha_next >= needed);
        assert!(adaptive.alpha_next - needed < 1e-8 * needed.max(1.0));

        let fixed = step(&ego, &[m], &cfg(false, 1.0), 0.1, 0.0, 1.0);
        assert_eq!(fixed.alpha_next, 1.0);
    }

    #[test]
    fn fallback_picks_least_violating_endpoint() {
        // Ego 9 m ahead, closing at 10 m/s: the barrier demands more than U_max.
        let d = step(&tracked(9.0, 10.0), &[tracked(0.0, 20.0)], &cfg(false, 1.0), 0.1, 0.0, 1.0);
        assert!(d.fallback);
        assert_eq!(d.status, Status::InfeasibleFallback);
        assert_eq!(d.u, 3.0);
        assert!(d.feasible_interval.is_none());
    }

    #[test]
    fn filtered_control_sits_on_boundary() {
        // Ego 10 m behind a slower vehicle: upper bound below ū.
        let d = step(&tracked(0.0, 22.0), &[tracked(10.0, 20.0)], &cfg(false, 1.0), 0.1, 0.0, 1.0);
        assert_eq!(d.status, Status::Filtered);
        let iv = d.feasible_interval.unwrap();
        assert_eq!(d.u, iv.hi);
        assert!(iv.hi < 1.0);
    }

    #[test]
    fn violated_pair_is_flagged() {
        let d = step(&tracked(0.0, 20.0), &[tracked(5.0, 20.0)], &cfg(true, 1.0), 0.1, 0.0, 1.0);
        assert!(d.safety_violated);
        assert_eq!(d.status, Status::SafetyViolated);
        assert!(cb().contains(d.u));
    }

    #[test]
    fn config_checks() {
        let mut c = cfg(true, 1.0);
        assert!(c.validate().is_ok());
        assert!(c.warnings().is_empty());
        c.u_nominal_mps2 = 4.0;
        assert_eq!(c.warnings().len(), 1);
        c.eta = 1.0;
        assert!(c.validate().is_err());
    }
}
