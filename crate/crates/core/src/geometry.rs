//! Curbside coordinate frames.
//!
//! A curbside frame has its origin at an intersection corner and its axes
//! along the two curbs meeting there. Points are expressed by their
//! contravariant components `(x', y')`, i.e. the coefficients with
//! `p - origin = x'·e1 + y'·e2`. For a skewed corner (`alpha != π/2`) these
//! differ from orthogonal projections onto the curbs.
//!
//! The map from a local orthogonal frame into the curbside frame is affine.
//! It factors into a rigid map onto a helper frame (origin at the corner,
//! x-axis along `e1`) followed by the shear/scale
//!
//! ```text
//! | 1  -1/tan α |
//! | 0   1/sin α |
//! ```
//!
//! [`CurbsideFrame::to_curbside`] solves the 2×2 basis system directly;
//! [`CurbsideFrame::transform`] builds the same map as an explicit
//! [`AffineMap2D`]. The two routes are checked against each other in tests.

use nalgebra::{Matrix2, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Shortest curb direction accepted by [`CurbsideFrame::from_curbs`].
pub const MIN_DIRECTION_NORM: f64 = 1e-9;
/// Smallest `|sin α|` accepted; below this the curbs are treated as parallel.
pub const MIN_SIN_ALPHA: f64 = 1e-6;

/// `|cos α|` below this is snapped to an exact right angle.
pub const RIGHT_ANGLE_TOLERANCE: f64 = 1e-12;

/// Intersection corner plus the two curb directions.
///
/// Immutable once built; all constructors validate the invariants
/// `|e1| = |e2| = 1` and `0 < alpha < π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameConfig", into = "FrameConfig")]
pub struct CurbsideFrame {
    origin: Point2<f64>,
    e1: Vector2<f64>,
    e2: Vector2<f64>,
    alpha: f64,
}

/// On-disk form of a frame: `{"origin":[x,y], "curb1":[dx,dy], "curb2":[dx,dy]}`.
///
/// Angles are derived on load and never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub origin: [f64; 2],
    pub curb1: [f64; 2],
    pub curb2: [f64; 2],
}

impl TryFrom<FrameConfig> for CurbsideFrame {
    type Error = Error;

    fn try_from(cfg: FrameConfig) -> Result<Self> {
        CurbsideFrame::from_curbs(
            Point2::from(cfg.origin),
            Vector2::from(cfg.curb1),
            Vector2::from(cfg.curb2),
        )
    }
}

impl From<CurbsideFrame> for FrameConfig {
    fn from(frame: CurbsideFrame) -> Self {
        FrameConfig {
            origin: [frame.origin.x, frame.origin.y],
            curb1: [frame.e1.x, frame.e1.y],
            curb2: [frame.e2.x, frame.e2.y],
        }
    }
}

impl CurbsideFrame {
    /// Builds a frame from a corner point and two (not necessarily unit) curb directions.
    pub fn from_curbs(origin: Point2<f64>, dir1: Vector2<f64>, dir2: Vector2<f64>) -> Result<Self> {
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(Error::DegenerateFrame("non-finite origin".into()));
        }
        let n1 = dir1.norm();
        let n2 = dir2.norm();
        if !(n1.is_finite() && n2.is_finite()) {
            return Err(Error::DegenerateFrame("non-finite curb direction".into()));
        }
        if n1 < MIN_DIRECTION_NORM || n2 < MIN_DIRECTION_NORM {
            return Err(Error::DegenerateFrame(format!(
                "curb direction norm below {MIN_DIRECTION_NORM:e}"
            )));
        }
        let e1 = dir1 / n1;
        let e2 = dir2 / n2;
        let sin_alpha = e1.perp(&e2).abs();
        if sin_alpha < MIN_SIN_ALPHA {
            return Err(Error::DegenerateFrame(
                "curbs are parallel or antiparallel".into(),
            ));
        }
        let cos_alpha = e1.dot(&e2);
        let alpha = if cos_alpha.abs() < RIGHT_ANGLE_TOLERANCE {
            std::f64::consts::FRAC_PI_2
        } else {
            cos_alpha.clamp(-1.0, 1.0).acos()
        };
        Ok(CurbsideFrame {
            origin,
            e1,
            e2,
            alpha,
        })
    }

    /// Frame at `origin` with the local x and y axes as curbs.
    pub fn axis_aligned(origin: Point2<f64>) -> Self {
        CurbsideFrame {
            origin,
            e1: Vector2::x(),
            e2: Vector2::y(),
            alpha: std::f64::consts::FRAC_PI_2,
        }
    }

    /// Frame with curb 1 at `heading` (radians, counter-clockwise from local +x)
    /// and curb 2 rotated a further `alpha` counter-clockwise.
    pub fn from_heading(origin: Point2<f64>, heading: f64, alpha: f64) -> Result<Self> {
        let dir1 = Vector2::new(heading.cos(), heading.sin());
        let dir2 = Vector2::new((heading + alpha).cos(), (heading + alpha).sin());
        Self::from_curbs(origin, dir1, dir2)
    }

    pub fn origin(&self) -> Point2<f64> {
        self.origin
    }

    pub fn e1(&self) -> Vector2<f64> {
        self.e1
    }

    pub fn e2(&self) -> Vector2<f64> {
        self.e2
    }

    /// Angle between the curbs, in `(0, π)`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// +1 when `e2` lies counter-clockwise of `e1`, -1 otherwise.
    fn handedness(&self) -> f64 {
        if self.e1.perp(&self.e2) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Contravariant components of a local-frame point.
    pub fn to_curbside(&self, p: Point2<f64>) -> Point2<f64> {
        let d = p - self.origin;
        let (a, b) = (self.e1, self.e2);
        let det = a.x * b.y - a.y * b.x;
        Point2::new((d.x * b.y - d.y * b.x) / det, (a.x * d.y - a.y * d.x) / det)
    }

    /// Local-frame point with the given contravariant components.
    pub fn from_curbside(&self, c: Point2<f64>) -> Point2<f64> {
        self.origin + self.e1 * c.x + self.e2 * c.y
    }

    /// Rigid map from the local frame onto the helper frame: corner at the
    /// origin, `e1` along +x and `e2` in the upper half plane.
    ///
    /// When `e2` is clockwise of `e1` the helper frame is mirrored, so this
    /// map is a reflection rather than a proper rotation.
    pub fn helper_map(&self) -> AffineMap2D {
        let normal = Vector2::new(-self.e1.y, self.e1.x) * self.handedness();
        let linear = Matrix2::new(self.e1.x, self.e1.y, normal.x, normal.y);
        let translation = -(linear * self.origin.coords);
        AffineMap2D {
            linear,
            translation,
        }
    }

    /// Shear/scale from helper-frame coordinates to contravariant components.
    pub fn skew_matrix(&self) -> Matrix2<f64> {
        if self.alpha == std::f64::consts::FRAC_PI_2 {
            return Matrix2::identity();
        }
        let (sin, cos) = self.alpha.sin_cos();
        Matrix2::new(1.0, -cos / sin, 0.0, 1.0 / sin)
    }

    /// The full local → curbside map: helper map first, then the skew.
    pub fn transform(&self) -> AffineMap2D {
        AffineMap2D {
            linear: self.skew_matrix(),
            translation: Vector2::zeros(),
        }
        .after(&self.helper_map())
    }

    /// Applies [`to_curbside`](Self::to_curbside) to every point, keeping timestamps.
    pub fn transform_trajectory(&self, traj: &Trajectory) -> Trajectory {
        traj.map_positions(|p| self.to_curbside(p))
    }

    /// Applies [`from_curbside`](Self::from_curbside) to every point, keeping timestamps.
    pub fn inverse_trajectory(&self, traj: &Trajectory) -> Trajectory {
        traj.map_positions(|c| self.from_curbside(c))
    }

    /// Expresses a local-frame displacement in contravariant components.
    pub fn vector_to_curbside(&self, v: Vector2<f64>) -> Vector2<f64> {
        self.to_curbside(self.origin + v) - Point2::origin()
    }
}

/// `p ↦ linear·p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap2D {
    pub linear: Matrix2<f64>,
    pub translation: Vector2<f64>,
}

impl AffineMap2D {
    pub fn identity() -> Self {
        AffineMap2D {
            linear: Matrix2::identity(),
            translation: Vector2::zeros(),
        }
    }

    pub fn apply(&self, p: Point2<f64>) -> Point2<f64> {
        Point2::from(self.linear * p.coords + self.translation)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &AffineMap2D) -> AffineMap2D {
        AffineMap2D {
            linear: self.linear * first.linear,
            translation: self.linear * first.translation + self.translation,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.linear.determinant()
    }

    pub fn inverse(&self) -> Option<AffineMap2D> {
        let inv = self.linear.try_inverse()?;
        Some(AffineMap2D {
            linear: inv,
            translation: -(inv * self.translation),
        })
    }
}
