//! Geometry of the flat torus `[-1/2, 1/2)^2`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("non-finite coordinate ({0}, {1})")]
    NonFinite(f64, f64),
}

/// Planar vector: displacements, velocities and raw (unwrapped) points.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Rotation by -90 degrees, `(x, y) -> (y, -x)`.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Reduce a coordinate mod 1 into `[-1/2, 1/2)`.
///
/// Uses round-half-away-from-zero so that `wrap_coord(-v) == -wrap_coord(v)`
/// bitwise, except when the result lands on the `-1/2` boundary.
#[inline]
pub fn wrap_coord(v: f64) -> f64 {
    let r = v - v.round();
    if r >= 0.5 {
        r - 1.0
    } else if r < -0.5 {
        r + 1.0
    } else {
        r
    }
}

/// A point of the torus; both coordinates always lie in `[-1/2, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TorusPoint {
    x1: f64,
    x2: f64,
}

impl TorusPoint {
    pub const ORIGIN: TorusPoint = TorusPoint { x1: 0.0, x2: 0.0 };

    /// Wrap finite planar coordinates onto the torus.
    pub fn new(x1: f64, x2: f64) -> Result<Self, TorusError> {
        wrap(Vec2::new(x1, x2))
    }

    #[inline]
    pub fn x1(&self) -> f64 {
        self.x1
    }

    #[inline]
    pub fn x2(&self) -> f64 {
        self.x2
    }

    #[inline]
    pub fn as_vec(&self) -> Vec2 {
        Vec2::new(self.x1, self.x2)
    }

    /// Translate by `v` and wrap. Non-finite results are reported.
    pub fn translate(&self, v: Vec2) -> Result<TorusPoint, TorusError> {
        wrap(self.as_vec() + v)
    }

    #[inline]
    pub(crate) fn wrap_finite(v: Vec2) -> TorusPoint {
        TorusPoint {
            x1: wrap_coord(v.x),
            x2: wrap_coord(v.y),
        }
    }
}

/// Reduce each coordinate of a planar point mod 1 into `[-1/2, 1/2)`.
pub fn wrap(p: Vec2) -> Result<TorusPoint, TorusError> {
    if !p.is_finite() {
        return Err(TorusError::NonFinite(p.x, p.y));
    }
    Ok(TorusPoint::wrap_finite(p))
}

/// Minimal-image displacement `a - b`, componentwise in `[-1/2, 1/2)`.
#[inline]
pub fn torus_diff(a: TorusPoint, b: TorusPoint) -> Vec2 {
    Vec2::new(wrap_coord(a.x1 - b.x1), wrap_coord(a.x2 - b.x2))
}

/// Geodesic distance on the torus.
#[inline]
pub fn torus_distance(a: TorusPoint, b: TorusPoint) -> f64 {
    torus_diff(a, b).norm()
}
