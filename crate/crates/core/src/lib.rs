//! Chance-constrained control barrier functions with an adaptive barrier
//! parameter, applied to an ego vehicle merging with ramp traffic.
//!
//! The crate is organized bottom-up: [`geometry`] and [`dynamics`] model the
//! road and the vehicles, [`cbf`] turns the pairwise distance barrier into a
//! linear constraint on the ego acceleration, [`feasibility`] computes the
//! α thresholds that keep that constraint satisfiable, [`controller`] solves
//! the per-step problem, and [`sim`] rolls out episodes and experiments.

pub mod cbf;
pub mod controller;
pub mod dynamics;
pub mod feasibility;
pub mod geometry;
pub mod sim;
pub mod vec2;

pub use vec2::{Sym2, Vec2};
