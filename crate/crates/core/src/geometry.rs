//! Lane geometry: piecewise-linear paths parameterized by arc length, and the
//! heading rotation that maps a scalar along-lane acceleration to the plane.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec2::Vec2;

/// Distance below which a point counts as lying on a segment.
pub const ON_PATH_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("lane path needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoints {index} and {} coincide", index + 1)]
    RepeatedWaypoint { index: usize },
    #[error("waypoint {index} is not finite")]
    NonFiniteWaypoint { index: usize },
    #[error("merge point ({x}, {y}) is {distance:.3e} m from the path")]
    MergePointOffPath { x: f64, y: f64, distance: f64 },
    #[error("arc length {s} is outside the valid interval [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
}

/// Position and tangent heading at an arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec2,
    pub theta: f64,
}

/// Raw form of a lane as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSpec {
    pub waypoints_m: Vec<Vec2>,
    pub merge_point_m: Vec2,
}

/// A polyline lane with a marked merge point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LaneSpec", into = "LaneSpec")]
pub struct LanePath {
    waypoints: Vec<Vec2>,
    merge_point: Vec2,
    /// Cumulative arc length at each waypoint; `cum[0] == 0`.
    cum: Vec<f64>,
    merge_arc: f64,
}

impl LanePath {
    pub fn new(waypoints: Vec<Vec2>, merge_point: Vec2) -> Result<Self, GeometryError> {
        if waypoints.len() < 2 {
            return Err(GeometryError::TooFewWaypoints(waypoints.len()));
        }
        let mut cum = Vec::with_capacity(waypoints.len());
        cum.push(0.0);
        for (index, w) in waypoints.iter().enumerate() {
            if !w.is_finite() {
                return Err(GeometryError::NonFiniteWaypoint { index });
            }
            if index + 1 < waypoints.len() {
                let seg = (waypoints[index + 1] - *w).norm();
                if seg <= 0.0 {
                    return Err(GeometryError::RepeatedWaypoint { index });
                }
                cum.push(cum[index] + seg);
            }
        }
        let mut path = Self {
            waypoints,
            merge_point,
            cum,
            merge_arc: 0.0,
        };
        let (merge_arc, distance) = path.closest_on_polyline(merge_point);
        if distance > ON_PATH_TOL {
            return Err(GeometryError::MergePointOffPath {
                x: merge_point.x,
                y: merge_point.y,
                distance,
            });
        }
        path.merge_arc = merge_arc;
        Ok(path)
    }

    /// Two-segment lane: a straight approach ending at `merge_point`, then a
    /// straight continuation of length `exit_length` along `exit_heading`.
    pub fn approach_and_exit(
        start: Vec2,
        merge_point: Vec2,
        exit_heading: f64,
        exit_length: f64,
    ) -> Result<Self, GeometryError> {
        let end = merge_point + Vec2::from_angle(exit_heading) * exit_length;
        Self::new(vec![start, merge_point, end], merge_point)
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn merge_point(&self) -> Vec2 {
        self.merge_point
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().expect("at least two waypoints")
    }

    /// Arc length of the merge point along this lane.
    pub fn merge_arc_length(&self) -> f64 {
        self.merge_arc
    }

    fn segment_count(&self) -> usize {
        self.waypoints.len() - 1
    }

    fn segment_heading(&self, i: usize) -> f64 {
        (self.waypoints[i + 1] - self.waypoints[i]).angle()
    }

    /// Index of the segment containing `s`; vertices belong to the segment
    /// that starts there, and the path end belongs to the last segment.
    fn segment_index(&self, s: f64) -> usize {
        let n = self.segment_count();
        // First cum strictly greater than s, minus one.
        let idx = self.cum.partition_point(|&c| c <= s);
        idx.saturating_sub(1).min(n - 1)
    }

    /// Position and heading at arc length `s`, for `0 ≤ s ≤ length`.
    pub fn pose_at(&self, s: f64) -> Result<Pose, GeometryError> {
        let length = self.length();
        if !(0.0..=length).contains(&s) {
            return Err(GeometryError::OutOfRange { s, length });
        }
        Ok(self.pose_extended(s))
    }

    /// Like [`pose_at`](Self::pose_at) but total: arc lengths before the start
    /// or past the end extrapolate along the first or last segment.
    pub fn pose_extended(&self, s: f64) -> Pose {
        let i = self.segment_index(s.max(0.0));
        let theta = self.segment_heading(i);
        let position = self.waypoints[i] + Vec2::from_angle(theta) * (s - self.cum[i]);
        Pose { position, theta }
    }

    /// Tangent heading at arc length `s` (extended beyond the ends).
    pub fn heading_at(&self, s: f64) -> f64 {
        self.segment_heading(self.segment_index(s.max(0.0)))
    }

    /// Arc length of the closest point to `p`, allowing extrapolation past
    /// either end of the polyline.
    pub fn project(&self, p: Vec2) -> f64 {
        let n = self.segment_count();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..n {
            let a = self.waypoints[i];
            let seg = self.waypoints[i + 1] - a;
            let len = self.cum[i + 1] - self.cum[i];
            let mut t = (p - a).dot(seg) / len;
            if i > 0 {
                t = t.max(0.0);
            }
            if i + 1 < n {
                t = t.min(len);
            }
            let q = a + seg * (t / len);
            let d = (p - q).norm_squared();
            if d < best.0 {
                best = (d, self.cum[i] + t);
            }
        }
        best.1
    }

    /// Closest point restricted to the polyline itself: `(arc, distance)`.
    fn closest_on_polyline(&self, p: Vec2) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for i in 0..self.segment_count() {
            let a = self.waypoints[i];
            let seg = self.waypoints[i + 1] - a;
            let len = self.cum[i + 1] - self.cum[i];
            let t = ((p - a).dot(seg) / len).clamp(0.0, len);
            let d = (p - (a + seg * (t / len))).norm();
            if d < best.1 {
                best = (self.cum[i] + t, d);
            }
        }
        best
    }
}

impl TryFrom<LaneSpec> for LanePath {
    type Error = GeometryError;
    fn try_from(spec: LaneSpec) -> Result<Self, Self::Error> {
        LanePath::new(spec.waypoints_m, spec.merge_point_m)
    }
}

impl From<LanePath> for LaneSpec {
    fn from(p: LanePath) -> Self {
        LaneSpec {
            waypoints_m: p.waypoints,
            merge_point_m: p.merge_point,
        }
    }
}

/// Rotation by the lane heading, `R_θ ∈ SO(2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingRotation {
    pub theta: f64,
}

impl HeadingRotation {
    pub fn new(theta: f64) -> Self {
        Self { theta }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.theta.sin_cos();
        [[c, -s], [s, c]]
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        let [[a, b], [c, d]] = self.matrix();
        Vec2::new(a * v.x + b * v.y, c * v.x + d * v.y)
    }
}

/// Planar acceleration `R_θ (a, 0)ᵀ` for a scalar along-lane acceleration.
pub fn project_control(theta: f64, a: f64) -> Vec2 {
    HeadingRotation::new(theta).apply(Vec2::new(a, 0.0))
}

/// Scalar coefficient of a 1×2 constraint row once the control is restricted
/// to the lane direction: `row · R_θ · (1, 0)ᵀ`.
pub fn reduce_constraint(row: Vec2, theta: f64) -> f64 {
    row.dot(HeadingRotation::new(theta).apply(Vec2::new(1.0, 0.0)))
}
