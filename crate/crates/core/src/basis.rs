//! Integer lattice modes and the real Fourier basis `e_k` of the torus.
//!
//! `e_k(x) = sqrt(2) cos(2 pi k.x)` for `k` in the upper half-lattice
//! (`k1 > 0`, or `k1 = 0` and `k2 > 0`), `sqrt(2) sin(2 pi k.x)` for its
//! negative, and `e_0 = 1`. Together they form an orthonormal basis of
//! `L^2` of the torus.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::torus::{TorusPoint, Vec2};

const TWO_PI: f64 = 2.0 * PI;

/// A lattice vector `k` in `Z^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode {
    pub k1: i32,
    pub k2: i32,
}

impl Mode {
    pub const ZERO: Mode = Mode { k1: 0, k2: 0 };

    pub const fn new(k1: i32, k2: i32) -> Self {
        Mode { k1, k2 }
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.k1 == 0 && self.k2 == 0
    }

    #[inline]
    pub fn norm2(self) -> i64 {
        let (a, b) = (self.k1 as i64, self.k2 as i64);
        a * a + b * b
    }

    #[inline]
    pub fn norm(self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    /// Upper half-lattice membership: `k1 > 0`, or `k1 = 0` and `k2 > 0`.
    #[inline]
    pub fn is_upper(self) -> bool {
        self.k1 > 0 || (self.k1 == 0 && self.k2 > 0)
    }

    #[inline]
    pub fn negate(self) -> Mode {
        Mode::new(-self.k1, -self.k2)
    }

    /// `k_perp = (k2, -k1)`.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(self.k2 as f64, -(self.k1 as f64))
    }

    #[inline]
    pub fn as_vec(self) -> Vec2 {
        Vec2::new(self.k1 as f64, self.k2 as f64)
    }

    /// Phase `2 pi k.x`.
    #[inline]
    pub fn phase(self, x: TorusPoint) -> f64 {
        TWO_PI * (self.k1 as f64 * x.x1() + self.k2 as f64 * x.x2())
    }

    /// Column label fragment, e.g. `1_0` or `-1_2`.
    pub fn label(self) -> String {
        format!("{}_{}", self.k1, self.k2)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.k1, self.k2)
    }
}

/// All nonzero modes with `|k| <= radius`, in lexicographic `(k1, k2)` order.
pub fn modes_in_disk(radius: u32) -> Vec<Mode> {
    let r = radius as i32;
    let r2 = (radius as i64) * (radius as i64);
    let mut out = Vec::new();
    for k1 in -r..=r {
        for k2 in -r..=r {
            let m = Mode::new(k1, k2);
            if !m.is_zero() && m.norm2() <= r2 {
                out.push(m);
            }
        }
    }
    out
}

/// Real Fourier basis function `e_k(x)`.
#[inline]
pub fn basis(k: Mode, x: TorusPoint) -> f64 {
    if k.is_zero() {
        return 1.0;
    }
    let p = k.phase(x);
    if k.is_upper() {
        SQRT_2 * p.cos()
    } else {
        SQRT_2 * p.sin()
    }
}

/// Gradient of `e_k` at `x`.
#[inline]
pub fn basis_gradient(k: Mode, x: TorusPoint) -> Vec2 {
    if k.is_zero() {
        return Vec2::ZERO;
    }
    let p = k.phase(x);
    let c = if k.is_upper() {
        -TWO_PI * SQRT_2 * p.sin()
    } else {
        TWO_PI * SQRT_2 * p.cos()
    };
    k.as_vec() * c
}

/// Laplacian eigenvalue: `Delta e_k = -4 pi^2 |k|^2 e_k`.
#[inline]
pub fn laplacian_eigenvalue(k: Mode) -> f64 {
    -4.0 * PI * PI * k.norm2() as f64
}
