use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControlError, ControllerConfig};
use crate::dynamics::{Discretization, ModelError, NoiseModel, StepParams, VehicleState};
use crate::geometry::LanePath;
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("controller: {0}")]
    Controller(#[from] ControlError),
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub dt_s: f64,
    pub horizon_steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub discretization: Discretization,
    /// Permit starting configurations already inside `r_safe`.
    #[serde(default)]
    pub allow_initial_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub lane: LanePath,
    pub init_arc_m: f64,
    pub init_speed_mps: f64,
    #[serde(default)]
    pub noise_mean_mps: Vec2,
    #[serde(default)]
    pub noise_cov_m2ps2: [[f64; 2]; 2],
}

impl VehicleConfig {
    pub fn noise(&self) -> Result<NoiseModel, ModelError> {
        NoiseModel::from_rows(self.noise_mean_mps, self.noise_cov_m2ps2)
    }

    /// State on the lane at the configured arc length, moving along the lane.
    pub fn initial_state(&self) -> VehicleState {
        let pose = self.lane.pose_extended(self.init_arc_m);
        VehicleState::new(pose.position, Vec2::from_angle(pose.theta) * self.init_speed_mps)
    }
}

/// One box of initial conditions for the randomized validity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub name: String,
    pub ego_init_arc_m: [f64; 2],
    pub ego_init_speed_mps: [f64; 2],
}

/// Sampling ranges for the randomized validity test. Each trial picks one
/// regime uniformly, then draws the ego start and ᾱ uniformly inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidityRanges {
    pub alpha_nominal: [f64; 2],
    pub regimes: Vec<Regime>,
    #[serde(default = "default_attempts")]
    pub max_attempts_per_trial: usize,
}

fn default_attempts() -> usize {
    200
}

fn check_range(name: &str, [lo, hi]: [f64; 2]) -> Result<(), ConfigError> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(ConfigError::invalid(name, format!("range [{lo}, {hi}] is degenerate")));
    }
    Ok(())
}

impl ValidityRanges {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_range("validity.alpha_nominal", self.alpha_nominal)?;
        if self.alpha_nominal[0] < 0.0 {
            return Err(ConfigError::invalid("validity.alpha_nominal", "alpha must be non-negative"));
        }
        if self.regimes.is_empty() {
            return Err(ConfigError::invalid("validity.regimes", "at least one regime is required"));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            check_range(&format!("validity.regimes[{i}].ego_init_arc_m"), r.ego_init_arc_m)?;
            check_range(&format!("validity.regimes[{i}].ego_init_speed_mps"), r.ego_init_speed_mps)?;
        }
        if self.max_attempts_per_trial == 0 {
            return Err(ConfigError::invalid("validity.max_attempts_per_trial", "must be at least 1"));
        }
        Ok(())
    }
}

/// Complete description of one merging scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: RunSettings,
    pub controller: ControllerConfig,
    pub ego: VehicleConfig,
    #[serde(default)]
    pub merging: Vec<VehicleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity: Option<ValidityRanges>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn step_params(&self) -> StepParams {
        StepParams {
            dt: self.scenario.dt_s,
            scheme: self.scenario.discretization,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        if !(s.dt_s > 0.0 && s.dt_s.is_finite()) {
            return Err(ConfigError::invalid("scenario.dt_s", "must be positive"));
        }
        if s.horizon_steps == 0 {
            return Err(ConfigError::invalid("scenario.horizon_steps", "must be at least 1"));
        }
        self.controller.validate()?;
        let vehicles = std::iter::once(("ego".to_string(), &self.ego)).chain(
            self.merging
                .iter()
                .enumerate()
                .map(|(i, m)| (format!("merging[{i}]"), m)),
        );
        for (name, v) in vehicles {
            v.noise()
                .map_err(|e| ConfigError::invalid(format!("{name}.noise"), e.to_string()))?;
            if !(v.init_arc_m.is_finite() && v.init_speed_mps.is_finite()) {
                return Err(ConfigError::invalid(name, "initial arc length and speed must be finite"));
            }
        }
        if !s.allow_initial_violation {
            let ego = self.ego.initial_state();
            for (i, m) in self.merging.iter().enumerate() {
                let d = (ego.x - m.initial_state().x).norm();
                if d < self.controller.r_safe_m {
                    return Err(ConfigError::invalid(
                        format!("merging[{i}]"),
                        format!(
                            "starts {d:.3} m from the ego, inside r_safe_m = {}; set \
                             scenario.allow_initial_violation to run it anyway",
                            self.controller.r_safe_m
                        ),
                    ));
                }
            }
        }
        if let Some(r) = &self.validity {
            r.validate()?;
        }
        Ok(())
    }
}
