//! Stochastic double-integrator vehicle model.
//!
//! Each vehicle carries a planar position `x` and velocity `v`. Control `u`
//! enters the velocity channel; Gaussian motion noise `ε ~ N(ε̂, Σ)` enters the
//! position channel. One call advances the state by one time unit `dt`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec2::{Sym2, Vec2};

/// Tolerance for symmetry and positive semi-definiteness of covariances.
pub const COV_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("noise covariance is not symmetric (off-diagonals {0} vs {1})")]
    AsymmetricCovariance(f64, f64),
    #[error("noise covariance is not positive semi-definite (min eigenvalue {0})")]
    NotPsd(f64),
    #[error("noise parameters must be finite")]
    NonFinite,
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub x: Vec2,
    pub v: Vec2,
}

impl VehicleState {
    pub fn new(x: Vec2, v: Vec2) -> Self {
        Self { x, v }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite()
    }
}

/// Gaussian motion noise `N(mean, cov)` in m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    mean: Vec2,
    cov: Sym2,
}

impl NoiseModel {
    pub fn new(mean: Vec2, cov: Sym2) -> Result<Self, ModelError> {
        if !mean.is_finite() || !cov.is_finite() {
            return Err(ModelError::NonFinite);
        }
        let (lo, _) = cov.eigenvalues();
        if lo < -COV_TOL {
            return Err(ModelError::NotPsd(lo));
        }
        Ok(Self { mean, cov })
    }

    /// Builds from a full 2×2 matrix, checking symmetry.
    pub fn from_rows(mean: Vec2, rows: [[f64; 2]; 2]) -> Result<Self, ModelError> {
        let cov = Sym2::from_rows(rows, COV_TOL)
            .ok_or(ModelError::AsymmetricCovariance(rows[0][1], rows[1][0]))?;
        Self::new(mean, cov)
    }

    pub fn zero() -> Self {
        Self {
            mean: Vec2::ZERO,
            cov: Sym2::ZERO,
        }
    }

    pub fn mean(&self) -> Vec2 {
        self.mean
    }

    pub fn cov(&self) -> Sym2 {
        self.cov
    }

    /// Draws one sample as `mean + L z` with `L Lᵀ = cov`, `z ~ N(0, I)`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let (l11, l21, l22) = self.cov.cholesky();
        self.mean + Vec2::new(l11 * z1, l21 * z1 + l22 * z2)
    }
}

/// How the continuous dynamics are discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// `v' = v + u dt`, then `x' = x + (v' + ε) dt`. The position update sees
    /// this step's control, which is what the barrier constraint models.
    #[default]
    SemiImplicit,
    /// `x' = x + (v + ε) dt`, `v' = v + u dt`.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub dt: f64,
    pub scheme: Discretization,
}

impl StepParams {
    pub fn new(dt: f64, scheme: Discretization) -> Result<Self, ModelError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ModelError::BadTimeStep(dt));
        }
        Ok(Self { dt, scheme })
    }
}

fn advance(s: &VehicleState, u: Vec2, eps: Vec2, p: &StepParams) -> VehicleState {
    let v_next = s.v + u * p.dt;
    let carry = match p.scheme {
        Discretization::SemiImplicit => v_next,
        Discretization::Explicit => s.v,
    };
    VehicleState {
        x: s.x + (carry + eps) * p.dt,
        v: v_next,
    }
}

/// Advances one step with a noise sample drawn from `rng_seed`.
pub fn step_stochastic(
    s: &VehicleState,
    u: Vec2,
    noise: &NoiseModel,
    p: &StepParams,
    rng_seed: u64,
) -> VehicleState {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    advance(s, u, noise.sample(&mut rng), p)
}

/// Advances one step with the noise replaced by its mean.
pub fn step_expected(s: &VehicleState, u: Vec2, noise: &NoiseModel, p: &StepParams) -> VehicleState {
    advance(s, u, noise.mean(), p)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-draw seed keyed by `(seed, trial, step, vehicle)`. Draws do not depend
/// on the order in which trials or vehicles are simulated.
pub fn noise_seed(seed: u64, trial: u64, step: u64, vehicle: u64) -> u64 {
    let mut h = splitmix64(seed);
    for k in [trial, step, vehicle] {
        h = splitmix64(h ^ k);
    }
    h
}
