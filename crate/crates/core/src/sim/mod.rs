//! Ramp-merging episodes, randomized validity batches, and the comparison
//! experiments built on top of them.

mod batch;
mod config;
mod episode;
mod experiments;

pub use batch::{
    constant_control_escape, run_validity_batch, trial_config, BatchError, BatchReport, RejectionCounts,
    TrialSummary,
};
pub use config::{ConfigError, Regime, RunSettings, ScenarioConfig, ValidityRanges, VehicleConfig};
pub use episode::{
    classify_curve, classify_merge_outcome, follow_lane, run_episode, run_episode_trial, ControlRecord,
    CurveShape, LaneModel, MergeOutcome, Relative, SimulationTrace, Slot, StepRecord, TraceSummary,
};
pub use experiments::{
    first_deviation_step, raised_alpha_steps, run_alpha_sweep, run_fixed_alpha_comparison, zones_from_steps,
    Comparison, Zone, ZoneKind,
};
