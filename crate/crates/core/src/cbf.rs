//! Pairwise distance barrier and its chance-constrained reduction.
//!
//! For an ego vehicle `e` and a merging vehicle `m` the safety function is
//! `h = ‖x_e − x_m‖² − r_safe²`. Requiring `Pr(ḣ + αh ≥ 0) ≥ η` under Gaussian
//! motion noise reduces to one deterministic half-line on the ego's scalar
//! along-lane acceleration, `a · u ≤ b`.

#![allow(clippy::excessive_precision)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{noise_seed, NoiseModel, VehicleState};
use crate::geometry::{project_control, reduce_constraint};
use crate::vec2::{Sym2, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbfError {
    #[error("probability {0} is outside the open interval (0, 1)")]
    Domain(f64),
    #[error("r_safe must be positive, got {0}")]
    BadSafeDistance(f64),
    #[error("confidence eta must lie in (0, 1), got {0}")]
    BadConfidence(f64),
    #[error("alpha must be non-negative, got {0}")]
    BadAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyParams {
    pub r_safe: f64,
    pub eta: f64,
    pub alpha: f64,
}

impl SafetyParams {
    pub fn new(r_safe: f64, eta: f64, alpha: f64) -> Result<Self, CbfError> {
        if !(r_safe > 0.0 && r_safe.is_finite()) {
            return Err(CbfError::BadSafeDistance(r_safe));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(CbfError::BadConfidence(eta));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(CbfError::BadAlpha(alpha));
        }
        Ok(Self { r_safe, eta, alpha })
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }
}

/// Scale applied to the standard-deviation term of the chance constraint.
///
/// With `c = −2Δx` the deviation of `cᵀΔε` is `2√(ΔxᵀΔΣΔx)`, so the exact
/// reduction carries a factor of two. `PaperLiteral` drops it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientMode {
    #[default]
    DerivationExact,
    PaperLiteral,
}

impl CoefficientMode {
    pub fn kappa(self) -> f64 {
        match self {
            CoefficientMode::DerivationExact => 2.0,
            CoefficientMode::PaperLiteral => 1.0,
        }
    }
}

/// Relative kinematics of an ego/merging pair (ego minus merging vehicle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairGeometry {
    pub dx: Vec2,
    pub dv: Vec2,
    pub d_eps_mean: Vec2,
    pub d_eps_cov: Sym2,
}

impl PairGeometry {
    /// Relative geometry of two vehicles with independent noise; covariances add.
    pub fn between(
        ego: &VehicleState,
        ego_noise: &NoiseModel,
        other: &VehicleState,
        other_noise: &NoiseModel,
    ) -> Self {
        Self {
            dx: ego.x - other.x,
            dv: ego.v - other.v,
            d_eps_mean: ego_noise.mean() - other_noise.mean(),
            d_eps_cov: ego_noise.cov() + other_noise.cov(),
        }
    }

    pub fn deterministic(dx: Vec2, dv: Vec2) -> Self {
        Self {
            dx,
            dv,
            d_eps_mean: Vec2::ZERO,
            d_eps_cov: Sym2::ZERO,
        }
    }

    pub fn h(&self, r_safe: f64) -> f64 {
        self.dx.norm_squared() - r_safe * r_safe
    }

    /// `√(Δxᵀ ΔΣ Δx)`, clamped at zero against rounding.
    pub fn deviation(&self) -> f64 {
        self.d_eps_cov.quad_form(self.dx).max(0.0).sqrt()
    }
}

/// Half-line `a · u ≤ b` on the scalar ego acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintCoeffs {
    pub a: f64,
    pub b: f64,
}

impl ConstraintCoeffs {
    pub fn satisfied_by(&self, u: f64) -> bool {
        self.a * u <= self.b
    }

    /// Amount by which `u` violates the constraint, zero when satisfied.
    pub fn violation(&self, u: f64) -> f64 {
        (self.a * u - self.b).max(0.0)
    }
}

pub fn safety_value(x_e: Vec2, x_m: Vec2, r_safe: f64) -> f64 {
    (x_e - x_m).norm_squared() - r_safe * r_safe
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn poly(coeffs: &[f64], r: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c)
}

// Wichura's AS 241 (PPND16) rational approximations.
const CENTRAL_NUM: [f64; 8] = [
    3.387_132_872_796_366_6,
    133.141_667_891_784_38,
    1_971.590_950_306_551_4,
    13_731.693_765_509_461,
    45_921.953_931_549_87,
    67_265.770_927_008_7,
    33_430.575_583_588_13,
    2_509.080_928_730_122_7,
];
const CENTRAL_DEN: [f64; 8] = [
    1.0,
    42.313_330_701_600_91,
    687.187_007_492_057_9,
    5_394.196_021_424_751,
    21_213.794_301_586_597,
    39_307.895_800_092_71,
    28_729.085_735_721_943,
    5_226.495_278_852_546,
];
const INTER_NUM: [f64; 8] = [
    1.423_437_110_749_683_6,
    4.630_337_846_156_545,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    0.241_780_725_177_450_6,
    0.022_723_844_989_269_184,
    7.745_450_142_783_414e-4,
];
const INTER_DEN: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    0.689_767_334_985_1,
    0.148_103_976_427_480_08,
    0.015_198_666_563_616_457,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_8e-9,
];
const TAIL_NUM: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    0.296_560_571_828_504_9,
    0.026_532_189_526_576_124,
    0.001_242_660_947_388_078_4,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const TAIL_DEN: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_9,
    0.136_929_880_922_735_8,
    0.014_875_361_290_850_615,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_8e-15,
];

fn quantile_rational(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&CENTRAL_NUM, r) / poly(&CENTRAL_DEN, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&INTER_NUM, r) / poly(&INTER_DEN, r)
    } else {
        let r = r - 5.0;
        poly(&TAIL_NUM, r) / poly(&TAIL_DEN, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Inverse standard normal CDF `Φ⁻¹(p)` for `p ∈ (0, 1)`.
///
/// Rational approximation followed by one Halley step against the erfc-based
/// CDF. The residual is taken in whichever tail keeps it well conditioned.
pub fn inv_norm_cdf(p: f64) -> Result<f64, CbfError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(CbfError::Domain(p));
    }
    let x = quantile_rational(p);
    let residual = if x <= 0.0 {
        norm_cdf(x) - p
    } else {
        (1.0 - p) - 0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
    };
    let pdf = norm_pdf(x);
    if pdf == 0.0 {
        return Ok(x);
    }
    let u = residual / pdf;
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Chance-constraint penalty `κ Φ⁻¹(η) √(ΔxᵀΔΣΔx)`.
pub fn chance_penalty(g: &PairGeometry, eta: f64, mode: CoefficientMode) -> f64 {
    let dev = g.deviation();
    if dev == 0.0 {
        return 0.0;
    }
    let z = inv_norm_cdf(eta).expect("eta validated by SafetyParams");
    mode.kappa() * z * dev
}

/// The α-independent part of the bound, `T` in `b = αh − T`:
/// `T = −2Δxᵀ(Δv + Δε̂) + κ Φ⁻¹(η) √(ΔxᵀΔΣΔx)`.
pub fn threat_term(g: &PairGeometry, eta: f64, mode: CoefficientMode) -> f64 {
    -2.0 * g.dx.dot(g.dv + g.d_eps_mean) + chance_penalty(g, eta, mode)
}

/// Unreduced 1×2 row `−2Δxᵀ dt` acting on the planar ego acceleration.
pub fn constraint_row(g: &PairGeometry, dt: f64) -> Vec2 {
    g.dx * (-2.0 * dt)
}

/// Deterministic constraint `a u ≤ b` guaranteeing the chance condition.
pub fn build_constraint(
    g: &PairGeometry,
    params: &SafetyParams,
    dt: f64,
    theta: f64,
    mode: CoefficientMode,
) -> ConstraintCoeffs {
    let a = reduce_constraint(constraint_row(g, dt), theta);
    let b = params.alpha * g.h(params.r_safe) - threat_term(g, params.eta, mode);
    ConstraintCoeffs { a, b }
}

/// Monte Carlo estimate of `Pr(ḣ + αh ≥ 0)` for a fixed scalar control,
/// sampling the relative noise `Δε ~ N(Δε̂, ΔΣ)`.
///
/// The event checked is `2Δxᵀ Δε ≥ −2Δxᵀ(Δv + u dt) − αh` with `u` rotated into
/// the plane by `theta`. Samples are drawn in fixed-size blocks, each keyed by
/// its block index, so the result does not depend on thread scheduling.
pub fn check_chance_satisfaction(
    g: &PairGeometry,
    params: &SafetyParams,
    dt: f64,
    u_e: f64,
    theta: f64,
    n_samples: usize,
    seed: u64,
) -> f64 {
    const BLOCK: usize = 4096;
    assert!(n_samples >= 1, "n_samples must be at least 1");
    let noise = NoiseModel::new(g.d_eps_mean, g.d_eps_cov).expect("pair covariance is PSD");
    let u_vec = project_control(theta, u_e);
    let rhs = -2.0 * g.dx.dot(g.dv + u_vec * dt) - params.alpha * g.h(params.r_safe);
    let blocks = n_samples.div_ceil(BLOCK);
    let hits: usize = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let len = BLOCK.min(n_samples - blk * BLOCK);
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed(seed, blk as u64, 0, 0));
            (0..len)
                .filter(|_| 2.0 * g.dx.dot(noise.sample(&mut rng)) >= rhs)
                .count()
        })
        .sum();
    hits as f64 / n_samples as f64
}
