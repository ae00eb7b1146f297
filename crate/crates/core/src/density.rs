//! Initial vorticity densities `f0 = 1 + sum_k a_k e_k` (finite real Fourier series).

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{basis, Mode};
use crate::rng::uniform01;
use crate::sum::neumaier_sum;
use crate::torus::TorusPoint;

/// Grid used to check non-negativity and the declared minimum.
const CHECK_GRID: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("declared minimum {0} is negative")]
    NegativeMinimum(f64),
    #[error("the constant mode is fixed to 1; remove (0, 0) from the coefficient list")]
    ConstantMode,
    #[error("mode {0} listed twice")]
    DuplicateMode(Mode),
    #[error("coefficient of mode {0} is not finite")]
    NonFinite(Mode),
    #[error("density takes the negative value {0}")]
    Negative(f64),
    #[error("declared minimum {declared} exceeds the observed minimum {observed}")]
    MinimumTooHigh { declared: f64, observed: f64 },
}

/// Probability density `1 + sum_k a_k e_k` on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    coefficients: Vec<(Mode, f64)>,
    declared_min: f64,
}

impl DensitySpec {
    /// Validate and build. Coefficients are stored in lexicographic mode order.
    pub fn new(mut coefficients: Vec<(Mode, f64)>, declared_min: f64) -> Result<Self, DensityError> {
        if !(declared_min >= 0.0) {
            return Err(DensityError::NegativeMinimum(declared_min));
        }
        coefficients.sort_by_key(|c| c.0);
        for w in coefficients.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(DensityError::DuplicateMode(w[0].0));
            }
        }
        for &(k, a) in &coefficients {
            if k.is_zero() {
                return Err(DensityError::ConstantMode);
            }
            if !a.is_finite() {
                return Err(DensityError::NonFinite(k));
            }
        }
        coefficients.retain(|c| c.1 != 0.0);
        let spec = DensitySpec { coefficients, declared_min };
        let observed = spec.grid_minimum(CHECK_GRID);
        if observed < 0.0 {
            return Err(DensityError::Negative(observed));
        }
        if declared_min > observed + 1e-12 {
            return Err(DensityError::MinimumTooHigh { declared: declared_min, observed });
        }
        Ok(spec)
    }

    /// `f0 = 1`.
    pub fn uniform() -> Self {
        DensitySpec { coefficients: Vec::new(), declared_min: 1.0 }
    }

    pub fn coefficients(&self) -> &[(Mode, f64)] {
        &self.coefficients
    }

    pub fn declared_min(&self) -> f64 {
        self.declared_min
    }

    /// `<f0, e_k>`; 1 for `k = 0`.
    pub fn coefficient(&self, k: Mode) -> f64 {
        if k.is_zero() {
            return 1.0;
        }
        self.coefficients
            .binary_search_by_key(&k, |c| c.0)
            .map(|i| self.coefficients[i].1)
            .unwrap_or(0.0)
    }

    /// Largest `|k_i|` among the listed modes.
    pub fn max_component(&self) -> u32 {
        self.coefficients
            .iter()
            .map(|(k, _)| k.k1.unsigned_abs().max(k.k2.unsigned_abs()))
            .max()
            .unwrap_or(0)
    }

    #[inline]
    pub fn value(&self, x: TorusPoint) -> f64 {
        1.0 + self.coefficients.iter().map(|&(k, a)| a * basis(k, x)).sum::<f64>()
    }

    /// Upper bound `1 + sqrt(2) sum |a_k|` for rejection sampling.
    pub fn envelope(&self) -> f64 {
        1.0 + SQRT_2 * self.coefficients.iter().map(|c| c.1.abs()).sum::<f64>()
    }

    /// One draw by rejection against the uniform proposal.
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> TorusPoint {
        let env = self.envelope();
        loop {
            let x1 = uniform01(rng) - 0.5;
            let x2 = uniform01(rng) - 0.5;
            let p = TorusPoint::new(x1, x2).expect("finite");
            if uniform01(rng) * env < self.value(p) {
                return p;
            }
        }
    }

    /// Minimum over an `n x n` grid of cell corners.
    pub fn grid_minimum(&self, n: usize) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                let p = TorusPoint::new(i as f64 / n as f64 - 0.5, j as f64 / n as f64 - 0.5)
                    .expect("finite");
                m = m.min(self.value(p));
            }
        }
        m
    }

    /// Exact mass of each cell of the `b x b` partition of `[-1/2, 1/2)^2`,
    /// indexed `i1 * b + i2`.
    pub fn cell_probabilities(&self, b: usize) -> Vec<f64> {
        let edges: Vec<f64> = (0..=b).map(|i| i as f64 / b as f64 - 0.5).collect();
        let mut out = Vec::with_capacity(b * b);
        for i in 0..b {
            for j in 0..b {
                let (lo1, hi1, lo2, hi2) = (edges[i], edges[i + 1], edges[j], edges[j + 1]);
                let mut p = (hi1 - lo1) * (hi2 - lo2);
                for &(k, a) in &self.coefficients {
                    let z = exp_integral(k.k1, lo1, hi1) * exp_integral(k.k2, lo2, hi2);
                    let part = if k.is_upper() { z.re } else { z.im };
                    p += a * SQRT_2 * part;
                }
                out.push(p);
            }
        }
        out
    }

    /// `sum_c P_c log(P_c b^2)`: the entropy of `f0` seen through a `b x b`
    /// histogram. For `f0 (x) f0` on the `b^4` grid the pair estimator has
    /// the same target.
    pub fn binned_entropy(&self, b: usize) -> f64 {
        let vol_inv = (b * b) as f64;
        neumaier_sum(
            self.cell_probabilities(b)
                .into_iter()
                .filter(|&p| p > 0.0)
                .map(|p| p * (p * vol_inv).ln()),
        )
    }

    /// `int f0 log f0` by the midpoint rule on an `n x n` grid.
    pub fn entropy(&self, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut vals = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let p = TorusPoint::new((i as f64 + 0.5) * h - 0.5, (j as f64 + 0.5) * h - 0.5)
                    .expect("finite");
                let f = self.value(p);
                if f > 0.0 {
                    vals.push(f * f.ln());
                }
            }
        }
        neumaier_sum(vals) * h * h
    }
}

/// `int_lo^hi exp(2 pi i k x) dx`.
fn exp_integral(k: i32, lo: f64, hi: f64) -> Complex64 {
    if k == 0 {
        return Complex64::new(hi - lo, 0.0);
    }
    let w = 2.0 * PI * k as f64;
    let e = |x: f64| Complex64::from_polar(1.0, w * x);
    (e(hi) - e(lo)) / Complex64::new(0.0, w)
}
