use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ScenarioConfig};
use super::episode::{run_episode, SimulationTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZoneKind {
    /// Steps where the fixed-α run had an empty control set.
    FixedInfeasible,
    /// Steps where the adaptive run used α above the nominal value.
    AdaptiveRaised,
}

impl ZoneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ZoneKind::FixedInfeasible => "fixed-infeasible",
            ZoneKind::AdaptiveRaised => "adaptive-raised",
        }
    }
}

/// Inclusive range of steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub kind: ZoneKind,
    pub start: usize,
    pub end: usize,
}

/// Collapses sorted step indices into maximal runs of consecutive steps.
pub fn zones_from_steps(kind: ZoneKind, steps: &[usize]) -> Vec<Zone> {
    let mut out: Vec<Zone> = Vec::new();
    for &t in steps {
        match out.last_mut() {
            Some(z) if z.end + 1 == t => z.end = t,
            _ => out.push(Zone { kind, start: t, end: t }),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub adaptive: SimulationTrace,
    pub fixed: SimulationTrace,
    pub zones: Vec<Zone>,
}

impl Comparison {
    pub fn zones_of(&self, kind: ZoneKind) -> impl Iterator<Item = &Zone> {
        self.zones.iter().filter(move |z| z.kind == kind)
    }
}

/// Steps at which the run used α strictly above `alpha_nominal`.
pub fn raised_alpha_steps(trace: &SimulationTrace, alpha_nominal: f64) -> Vec<usize> {
    trace
        .records
        .iter()
        .filter(|r| r.control.as_ref().is_some_and(|c| c.alpha_used > alpha_nominal))
        .map(|r| r.t)
        .collect()
}

/// Runs the scenario twice on the same seed: with the adaptive α update and
/// with α pinned to its nominal value.
pub fn run_fixed_alpha_comparison(cfg: &ScenarioConfig) -> Result<Comparison, ConfigError> {
    let mut adaptive_cfg = cfg.clone();
    adaptive_cfg.controller.adaptive = true;
    let mut fixed_cfg = cfg.clone();
    fixed_cfg.controller.adaptive = false;
    let adaptive = run_episode(&adaptive_cfg)?;
    let fixed = run_episode(&fixed_cfg)?;
    let mut zones = zones_from_steps(ZoneKind::FixedInfeasible, &fixed.fallback_steps());
    zones.extend(zones_from_steps(
        ZoneKind::AdaptiveRaised,
        &raised_alpha_steps(&adaptive, cfg.controller.alpha_nominal),
    ));
    Ok(Comparison { adaptive, fixed, zones })
}

/// Runs the scenario once per nominal α; the initial α follows the nominal.
pub fn run_alpha_sweep(cfg: &ScenarioConfig, alphas: &[f64]) -> Result<Vec<(f64, SimulationTrace)>, ConfigError> {
    alphas
        .iter()
        .map(|&alpha| {
            let mut c = cfg.clone();
            c.controller.alpha_nominal = alpha;
            c.controller.alpha_initial = None;
            run_episode(&c).map(|t| (alpha, t))
        })
        .collect()
}

/// First step whose applied control differs from the nominal acceleration.
pub fn first_deviation_step(trace: &SimulationTrace, u_nominal: f64) -> Option<usize> {
    trace
        .records
        .iter()
        .find(|r| r.control.as_ref().is_some_and(|c| c.u != u_nominal))
        .map(|r| r.t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zones_merge_consecutive_steps() {
        let z = zones_from_steps(ZoneKind::FixedInfeasible, &[3, 4, 5, 9, 11, 12]);
        let spans: Vec<(usize, usize)> = z.iter().map(|z| (z.start, z.end)).collect();
        assert_eq!(spans, vec![(3, 5), (9, 9), (11, 12)]);
        assert!(zones_from_steps(ZoneKind::AdaptiveRaised, &[]).is_empty());
    }
}
