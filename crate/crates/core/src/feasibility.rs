//! Boundary values of α at which a pairwise barrier constraint activates or
//! empties the boxed control set, and the adaptive α update.
//!
//! With `b(α) = αh − T` the constraint `a u ≤ b(α)` moves monotonically with α.
//! For `a ≥ 0` it is an upper bound `u ≤ b/a`; the set `[U_min, U_max]` stays
//! non-empty while `α ≥ M U_min + N` and is untouched once `α ≥ M U_max + N`,
//! where `M = a/h` and `N = T/h`. For `a < 0` the roles of the endpoints swap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbf::{constraint_row, threat_term, CoefficientMode, PairGeometry};
use crate::geometry::reduce_constraint;

/// |h| below which the α machinery is bypassed.
pub const SINGULAR_H: f64 = 1e-9;

/// Relative slack added above a binding α_feasible.
pub const STRICT_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("safety value h = {0:e} is too close to zero to divide by")]
    Singular(f64),
    #[error("control bounds need u_min < u_max, got [{0}, {1}]")]
    EmptyBox(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub u_min: f64,
    pub u_max: f64,
}

impl ControlBounds {
    pub fn new(u_min: f64, u_max: f64) -> Result<Self, FeasibilityError> {
        if !u_min.is_finite() || !u_max.is_finite() || u_min >= u_max {
            return Err(FeasibilityError::EmptyBox(u_min, u_max));
        }
        Ok(Self { u_min, u_max })
    }

    pub fn contains(&self, u: f64) -> bool {
        (self.u_min..=self.u_max).contains(&u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseSign {
    /// `a ≥ 0`: the constraint caps the acceleration.
    NonNegative,
    /// `a < 0`: the constraint floors the acceleration.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Inactive,
    Active,
    Infeasible,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Inactive => "inactive",
            Activation::Active => "active",
            Activation::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityBounds {
    pub m_coef: f64,
    pub n_coef: f64,
    pub t_term: f64,
    pub alpha_feasible: f64,
    pub alpha_active: f64,
    pub case_sign: CaseSign,
    /// Reduced scalar constraint coefficient.
    pub a: f64,
    pub h: f64,
    pub bounds: ControlBounds,
}

impl FeasibilityBounds {
    /// `h < 0`: the pair is already inside `r_safe`. Dividing by a negative `h`
    /// flips the inequalities, so `alpha_feasible` and `alpha_active` become
    /// upper limits on α rather than lower ones.
    pub fn safety_violated(&self) -> bool {
        self.h < 0.0
    }

    /// Constraint bound `b(α) = αh − T`.
    pub fn b_at(&self, alpha: f64) -> f64 {
        alpha * self.h - self.t_term
    }
}

/// Boundary values of α for one pair, evaluated on the given geometry.
pub fn bounds_for_pair(
    g: &PairGeometry,
    r_safe: f64,
    eta: f64,
    dt: f64,
    theta: f64,
    cb: &ControlBounds,
    mode: CoefficientMode,
) -> Result<FeasibilityBounds, FeasibilityError> {
    let h = g.h(r_safe);
    if h.abs() < SINGULAR_H {
        return Err(FeasibilityError::Singular(h));
    }
    let a = reduce_constraint(constraint_row(g, dt), theta);
    let t_term = threat_term(g, eta, mode);
    let m_coef = a / h;
    let n_coef = t_term / h;
    let at_min = m_coef * cb.u_min + n_coef;
    let at_max = m_coef * cb.u_max + n_coef;
    let (case_sign, alpha_feasible, alpha_active) = if a >= 0.0 {
        (CaseSign::NonNegative, at_min, at_max)
    } else {
        (CaseSign::Negative, at_max, at_min)
    };
    Ok(FeasibilityBounds {
        m_coef,
        n_coef,
        t_term,
        alpha_feasible,
        alpha_active,
        case_sign,
        a,
        h,
        bounds: *cb,
    })
}

/// Where the half-line `a u ≤ b` sits relative to the control box.
pub fn half_line_activation(a: f64, b: f64, cb: &ControlBounds) -> Activation {
    let ControlBounds { u_min, u_max } = *cb;
    if a == 0.0 {
        return if b >= 0.0 {
            Activation::Inactive
        } else {
            Activation::Infeasible
        };
    }
    let k = b / a;
    if a > 0.0 {
        if k >= u_max {
            Activation::Inactive
        } else if k < u_min {
            Activation::Infeasible
        } else {
            Activation::Active
        }
    } else if k <= u_min {
        Activation::Inactive
    } else if k > u_max {
        Activation::Infeasible
    } else {
        Activation::Active
    }
}

/// Activation of the pair's constraint at a given α.
pub fn classify(alpha: f64, fb: &FeasibilityBounds) -> Activation {
    half_line_activation(fb.a, fb.b_at(alpha), &fb.bounds)
}

/// α at which an upper-bounding pair `i` (`a > 0`) and a lower-bounding pair
/// `j` (`a < 0`) start to admit a common control. Both must have `h > 0`.
pub fn crossing_alpha(cap: &FeasibilityBounds, floor: &FeasibilityBounds) -> f64 {
    let slope = cap.h / cap.a - floor.h / floor.a;
    let offset = cap.t_term / cap.a - floor.t_term / floor.a;
    offset / slope
}

/// Smallest α at which every pair with `h > 0` is compatible with the box and
/// with every other such pair.
///
/// Each constraint only loosens as α grows, so the joint set is non-empty
/// from this value on. Pairs already inside `r_safe` only bound α from above
/// and are left out.
pub fn joint_alpha_feasible(fbs: &[FeasibilityBounds]) -> f64 {
    let live: Vec<&FeasibilityBounds> = fbs.iter().filter(|fb| !fb.safety_violated()).collect();
    let mut needed = live.iter().map(|fb| fb.alpha_feasible).fold(f64::NEG_INFINITY, f64::max);
    for cap in live.iter().filter(|fb| fb.a > 0.0) {
        for floor in live.iter().filter(|fb| fb.a < 0.0) {
            needed = needed.max(crossing_alpha(cap, floor));
        }
    }
    needed
}

/// Smallest-deviation α that is no lower than the nominal value and keeps
/// the joint constraint set non-empty inside the control box.
///
/// When the requirement binds, a relative slack of [`STRICT_MARGIN`] keeps
/// the resulting interval from collapsing to a single point.
pub fn adapt_alpha(alpha_nominal: f64, fbs: &[FeasibilityBounds]) -> f64 {
    let needed = joint_alpha_feasible(fbs);
    if needed >= alpha_nominal {
        needed + STRICT_MARGIN * needed.abs().max(1.0)
    } else {
        alpha_nominal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec2::{Sym2, Vec2};

    fn cb() -> ControlBounds {
        ControlBounds::new(-5.0, 3.0).unwrap()
    }

    fn closing() -> PairGeometry {
        PairGeometry::deterministic(Vec2::new(10.0, 0.0), Vec2::new(-1.0, 0.0))
    }

    fn bounds(g: &PairGeometry) -> FeasibilityBounds {
        bounds_for_pair(g, 8.0, 0.99, 0.1, 0.0, &cb(), CoefficientMode::DerivationExact).unwrap()
    }

    #[test]
    fn closing_pair_bounds() {
        let fb = bounds(&closing());
        assert_eq!(fb.case_sign, CaseSign::Negative);
        assert!((fb.h - 36.0).abs() < 1e-12);
        assert!((fb.m_coef + 2.0 / 36.0).abs() < 1e-12);
        assert!((fb.t_term - 20.0).abs() < 1e-12);
        assert!((fb.n_coef - 20.0 / 36.0).abs() < 1e-12);
        assert!((fb.alpha_feasible - 7.0 / 18.0).abs() < 1e-12);
        assert!((fb.alpha_active - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn opening_pair_feasible_for_any_alpha() {
        let g = PairGeometry::deterministic(Vec2::new(10.0, 0.0), Vec2::new(1.0, 0.0));
        let fb = bounds(&g);
        assert!((fb.alpha_feasible + 26.0 / 36.0).abs() < 1e-12);
        assert_eq!(classify(0.0, &fb), Activation::Inactive);
    }

    #[test]
    fn chance_term_raises_both_bounds() {
        let mut g = closing();
        let base = bounds(&g);
        g.d_eps_cov = Sym2::diag(0.2, 0.1);
        let noisy = bounds(&g);
        assert!(noisy.alpha_feasible > base.alpha_feasible);
        assert!(noisy.alpha_active > base.alpha_active);
    }

    #[test]
    fn classification_regions() {
        let fb = bounds(&closing());
        assert_eq!(classify(1.0, &fb), Activation::Inactive);
        assert_eq!(classify(0.6, &fb), Activation::Active);
        assert_eq!(classify(0.3, &fb), Activation::Infeasible);
    }

    #[test]
    fn singular_h_is_an_error() {
        let g = PairGeometry::deterministic(Vec2::new(8.0, 0.0), Vec2::new(-1.0, 0.0));
        assert!(matches!(
            bounds_for_pair(&g, 8.0, 0.99, 0.1, 0.0, &cb(), CoefficientMode::DerivationExact),
            Err(FeasibilityError::Singular(_))
        ));
    }

    #[test]
    fn violated_pair_inverts_alpha_limits() {
        let g = PairGeometry::deterministic(Vec2::new(6.0, 0.0), Vec2::new(-1.0, 0.0));
        let fb = bounds(&g);
        assert!(fb.safety_violated());
        // Feasible only for α at or below the (now upper) limit.
        assert_ne!(classify(fb.alpha_feasible - 1e-6, &fb), Activation::Infeasible);
        assert_eq!(classify(fb.alpha_feasible + 1e-6, &fb), Activation::Infeasible);
    }

    #[test]
    fn perpendicular_pair_uses_sign_of_b() {
        // Δx orthogonal to the heading: a = 0, feasibility depends on b only.
        let g = PairGeometry::deterministic(Vec2::new(0.0, 10.0), Vec2::new(0.0, -1.0));
        let fb = bounds(&g);
        assert_eq!(fb.a, 0.0);
        assert!((fb.alpha_feasible - fb.n_coef).abs() < 1e-15);
        assert_eq!(classify(fb.alpha_feasible + 1e-6, &fb), Activation::Inactive);
        assert_eq!(classify(fb.alpha_feasible - 1e-6, &fb), Activation::Infeasible);
    }

    #[test]
    fn adapt_examples() {
        let mut lo = bounds(&closing());
        let mut hi = lo;
        lo.alpha_feasible = 0.4;
        hi.alpha_feasible = 2.0;
        assert_eq!(adapt_alpha(5.0, &[lo, hi]), 5.0);
        hi.alpha_feasible = 7.0;
        let a = adapt_alpha(1.0, &[lo, hi]);
        assert!(a > 7.0 && a - 7.0 < 1e-8);
        assert_eq!(adapt_alpha(1.0, &[bounds(&closing())]), 1.0);
    }

    #[test]
    fn opposing_pairs_need_a_common_control() {
        // Leader 10 m ahead closing, follower 10 m behind closing.
        let ahead = bounds(&PairGeometry::deterministic(Vec2::new(-10.0, 0.0), Vec2::new(2.0, 0.0)));
        let behind = bounds(&PairGeometry::deterministic(Vec2::new(10.0, 0.0), Vec2::new(-2.0, 0.0)));
        assert!(ahead.a > 0.0 && behind.a < 0.0);
        let alpha = joint_alpha_feasible(&[ahead, behind]);
        assert!(alpha > ahead.alpha_feasible.max(behind.alpha_feasible));
        let cap = |al: f64| ahead.b_at(al) / ahead.a;
        let floor = |al: f64| behind.b_at(al) / behind.a;
        assert!((cap(alpha) - floor(alpha)).abs() < 1e-9);
        assert!(cap(alpha + 1e-6) > floor(alpha + 1e-6));
        assert!(cap(alpha - 1e-6) < floor(alpha - 1e-6));
    }

    #[test]
    fn box_validation() {
        assert!(ControlBounds::new(3.0, -5.0).is_err());
        assert!(ControlBounds::new(1.0, 1.0).is_err());
    }
}
