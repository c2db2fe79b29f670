//! Planar vectors, poses and angle helpers.
//!
//! Angles are counter-clockwise positive with zero along world +x. Every
//! stored heading lives in the half-open interval (-π, π].

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Targets closer than this to the robot have no defined bearing.
pub const COINCIDENT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("angle is not finite: {0}")]
    InvalidAngle(f64),
    #[error("coordinate is not finite: ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("target coincides with the reference position")]
    DegenerateBearing,
}

/// A point or displacement in the world frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Checked constructor for values coming from outside the process
    /// (files, datagrams, FFI).
    pub fn try_new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(GeometryError::NonFinite(x, y))
        }
    }

    /// Unit vector pointing along `angle`.
    #[inline]
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Rotates counter-clockwise by `angle` about the origin.
    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Robot position and heading in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub position: Vec2,
    /// Radians, wrapped into (-π, π].
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            heading: wrap(heading),
        }
    }

    pub fn try_new(x: f64, y: f64, heading: f64) -> Result<Self, GeometryError> {
        let position = Vec2::try_new(x, y)?;
        Ok(Self {
            position,
            heading: wrap_angle(heading)?,
        })
    }
}

/// Wraps a finite angle into (-π, π].
pub fn wrap_angle(theta: f64) -> Result<f64, GeometryError> {
    if !theta.is_finite() {
        return Err(GeometryError::InvalidAngle(theta));
    }
    Ok(wrap(theta))
}

/// Unchecked [`wrap_angle`]; NaN propagates.
pub(crate) fn wrap(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let mut r = theta.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    // rem_euclid rounding can land a hair above -π; keep the single representative.
    if r <= -PI + 1e-12 {
        r = PI;
    }
    r
}

/// Relative heading change needed for `from` to face `to`.
pub fn bearing(from: &Pose2D, to: Vec2) -> Result<f64, GeometryError> {
    let delta = to - from.position;
    if delta.norm() < COINCIDENT_EPS {
        return Err(GeometryError::DegenerateBearing);
    }
    Ok(wrap(delta.angle() - from.heading))
}

#[inline]
pub fn distance(a: Vec2, b: Vec2) -> f64 {
    (b - a).norm()
}
