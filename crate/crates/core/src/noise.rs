//! Environmental transport noise
//! `W(t, x) = eps sum_k theta_k sigma_k(x) W^k_t` with `sigma_k = (k_perp/|k|) e_k`.
//!
//! The coefficients `theta_k` are radial and supported on a finite disk; the
//! intensity `eps = 2 sqrt(nu) / |theta|` makes the one-point covariance
//! `eps^2 Q(0) = 2 nu I`. The same Brownian increments drive every particle.

use std::f64::consts::{PI, SQRT_2};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{basis, modes_in_disk, Mode};
use crate::rng::StreamKey;
use crate::sum::{neumaier_sum, Neumaier};
use crate::torus::{wrap_coord, TorusPoint, Vec2};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("noise cutoff must be at least 1")]
    ZeroCutoff,
    #[error("noise profile vanishes on every mode of the disk |k| <= {0}")]
    EmptyProfile(u32),
    #[error("noise coefficient for mode {0} is not finite")]
    NonFiniteCoefficient(Mode),
    #[error("noise coefficients are not radial: |{0}| = |{1}| but theta differs")]
    NotRadial(Mode, Mode),
    #[error("viscosity must be finite and non-negative, got {0}")]
    InvalidViscosity(f64),
    #[error("time step must be finite and non-negative, got {0}")]
    InvalidTimeStep(f64),
    #[error("sigma_k is undefined for k = 0")]
    ZeroMode,
    #[error("the decay condition excludes the origin")]
    AtOrigin,
    #[error("increment was drawn for a different noise spectrum")]
    IncrementMismatch,
}

/// Radial profile `|k| -> theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `theta_k = 1/|k|` on the disk.
    #[default]
    InverseNorm,
    /// `theta_k = 1` on the disk.
    Constant,
    /// `theta_k = 1` on the outer shell `|k| = cutoff` only.
    SingleShell,
}

impl Profile {
    fn value(self, k: Mode, cutoff: u32) -> f64 {
        match self {
            Profile::InverseNorm => 1.0 / k.norm(),
            Profile::Constant => 1.0,
            Profile::SingleShell => {
                if k.norm2() == (cutoff as i64) * (cutoff as i64) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Radial noise coefficients on the disk `|k| <= cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSpec {
    cutoff: u32,
    profile: Option<Profile>,
    modes: Vec<Mode>,
    coeffs: Vec<f64>,
    slots: Vec<u64>,
    norm2: f64,
    fingerprint: u64,
}

/// Build the coefficients of a radial profile on `|k| <= cutoff`; only modes
/// with nonzero `theta` are kept.
pub fn make_theta(cutoff: u32, profile: Profile) -> Result<ThetaSpec, NoiseError> {
    if cutoff == 0 {
        return Err(NoiseError::ZeroCutoff);
    }
    let table = modes_in_disk(cutoff)
        .into_iter()
        .map(|k| (k, profile.value(k, cutoff)))
        .collect::<Vec<_>>();
    let mut spec = ThetaSpec::from_table(cutoff, table)?;
    spec.profile = Some(profile);
    Ok(spec)
}

impl ThetaSpec {
    /// Coefficients from an explicit `(k, theta_k)` table. The table must be
    /// radial; zero entries are dropped.
    pub fn from_table(cutoff: u32, mut table: Vec<(Mode, f64)>) -> Result<Self, NoiseError> {
        if cutoff == 0 {
            return Err(NoiseError::ZeroCutoff);
        }
        table.sort_by_key(|(k, _)| *k);
        table.dedup_by_key(|(k, _)| *k);
        for &(k, t) in &table {
            if k.is_zero() {
                return Err(NoiseError::ZeroMode);
            }
            if !t.is_finite() {
                return Err(NoiseError::NonFiniteCoefficient(k));
            }
        }
        if let Some((a, b)) = radial_violation(&table) {
            return Err(NoiseError::NotRadial(a, b));
        }
        table.retain(|&(k, t)| t != 0.0 && k.norm2() <= (cutoff as i64) * (cutoff as i64));
        if table.is_empty() {
            return Err(NoiseError::EmptyProfile(cutoff));
        }
        let modes: Vec<Mode> = table.iter().map(|p| p.0).collect();
        let coeffs: Vec<f64> = table.iter().map(|p| p.1).collect();
        let slots = random_slots(&modes);
        let norm2 = neumaier_sum(coeffs.iter().map(|t| t * t));
        let mut h = DefaultHasher::new();
        cutoff.hash(&mut h);
        for (k, t) in modes.iter().zip(&coeffs) {
            k.hash(&mut h);
            t.to_bits().hash(&mut h);
        }
        Ok(ThetaSpec {
            cutoff,
            profile: None,
            modes,
            coeffs,
            slots,
            norm2,
            fingerprint: h.finish(),
        })
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn profile(&self) -> Option<Profile> {
        self.profile
    }

    /// Active modes in lexicographic order.
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// `theta_k`, aligned with [`modes`](Self::modes).
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// `theta_k`, zero for inactive modes.
    pub fn theta(&self, k: Mode) -> f64 {
        self.modes
            .binary_search(&k)
            .map(|i| self.coeffs[i])
            .unwrap_or(0.0)
    }

    /// Position of each mode's normal variate within a step's random stream,
    /// aligned with [`modes`](Self::modes). See [`random_slot`].
    pub fn slots(&self) -> &[u64] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `|theta|^2_{l^2}`.
    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    /// Identifies the mode set and coefficients.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// `(k, theta_k)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (Mode, f64)> + '_ {
        self.modes.iter().copied().zip(self.coeffs.iter().copied())
    }
}

/// Rank of `k` among the nonzero lattice vectors ordered by `(|k|^2, k1, k2)`.
/// It does not depend on the cutoff, so spectra sharing a mode also share
/// its Brownian motion.
pub fn random_slot(k: Mode) -> u64 {
    let r2 = k.norm2();
    let r = (r2 as f64).sqrt().ceil() as i64;
    let mut below = 0u64;
    let mut before = 0u64;
    for a in -r..=r {
        let rest = r2 - a * a;
        if rest <= 0 {
            if rest == 0 && a < k.k1 as i64 {
                before += 1;
            }
            continue;
        }
        // b^2 < rest
        let mut s = ((rest - 1) as f64).sqrt() as i64;
        while s * s > rest - 1 {
            s -= 1;
        }
        while (s + 1) * (s + 1) <= rest - 1 {
            s += 1;
        }
        below += (2 * s + 1) as u64;
        let t = s + 1;
        if t * t == rest {
            // shell members (a, -t) and (a, t)
            for b in [-t, t] {
                if (a, b) < (k.k1 as i64, k.k2 as i64) {
                    before += 1;
                }
            }
        }
    }
    // the origin is counted in `below` for every nonzero k
    below - 1 + before
}

/// [`random_slot`] for many modes at once, by ranking the whole disk that
/// contains them.
fn random_slots(modes: &[Mode]) -> Vec<u64> {
    let key = |k: &Mode| (k.norm2(), k.k1, k.k2);
    let r2 = modes.iter().map(|k| k.norm2()).max().unwrap_or(0);
    let radius = (r2 as f64).sqrt().ceil() as u32;
    let mut disk: Vec<(i64, i32, i32)> = modes_in_disk(radius)
        .iter()
        .filter(|k| k.norm2() <= r2)
        .map(key)
        .collect();
    disk.sort_unstable();
    modes
        .iter()
        .map(|k| disk.binary_search(&key(k)).expect("mode lies in its own disk") as u64)
        .collect()
}

/// First pair of modes with equal `|k|` and different coefficients.
fn radial_violation(table: &[(Mode, f64)]) -> Option<(Mode, Mode)> {
    let mut by_shell: Vec<(i64, Mode, f64)> =
        table.iter().map(|&(k, t)| (k.norm2(), k, t)).collect();
    by_shell.sort_by_key(|e| (e.0, e.1));
    by_shell
        .windows(2)
        .find(|w| w[0].0 == w[1].0 && w[0].2 != w[1].2)
        .map(|w| (w[0].1, w[1].1))
}

/// Coefficients and intensity. `epsilon` is derived on every call.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    theta: Arc<ThetaSpec>,
    nu: f64,
}

impl NoiseSpec {
    pub fn new(theta: ThetaSpec, nu: f64) -> Result<Self, NoiseError> {
        Self::shared(Arc::new(theta), nu)
    }

    pub fn shared(theta: Arc<ThetaSpec>, nu: f64) -> Result<Self, NoiseError> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(NoiseError::InvalidViscosity(nu));
        }
        Ok(NoiseSpec { theta, nu })
    }

    pub fn theta(&self) -> &ThetaSpec {
        &self.theta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `eps = 2 sqrt(nu) / |theta|`.
    pub fn epsilon(&self) -> f64 {
        2.0 * self.nu.sqrt() / self.theta.norm2.sqrt()
    }
}

/// `sigma_k(x) = (k_perp / |k|) e_k(x)`.
pub fn sigma_eval(k: Mode, x: TorusPoint) -> Result<Vec2, NoiseError> {
    if k.is_zero() {
        return Err(NoiseError::ZeroMode);
    }
    Ok(k.perp() * (basis(k, x) / k.norm()))
}

/// Symmetric 2x2 matrix stored as `[[a, b], [b, d]]`.
pub type Mat2 = [[f64; 2]; 2];

/// Spectral norm of a symmetric 2x2 matrix.
pub fn sym_spectral_norm(m: &Mat2) -> f64 {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let rad = half_diff.hypot(m[0][1]);
    mean.abs() + rad
}

/// Largest absolute entry.
pub fn max_abs_entry(m: &Mat2) -> f64 {
    m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// `Q(x) = sum_k theta_k^2 (k_perp k_perp^T / |k|^2) cos(2 pi k.x)`.
pub fn covariance(theta: &ThetaSpec, x: Vec2) -> Mat2 {
    covariance_of(theta.iter(), x)
}

fn covariance_of(coeffs: impl Iterator<Item = (Mode, f64)>, x: Vec2) -> Mat2 {
    let (mut a, mut b, mut d) = (Neumaier::new(), Neumaier::new(), Neumaier::new());
    for (k, t) in coeffs {
        let p = k.perp();
        let w = t * t * (TWO_PI * (k.k1 as f64 * x.x + k.k2 as f64 * x.y)).cos()
            / k.norm2() as f64;
        a.add(w * p.x * p.x);
        b.add(w * p.x * p.y);
        d.add(w * p.y * p.y);
    }
    [[a.value(), b.value()], [b.value(), d.value()]]
}

/// Max-norm of `Q(0) - (|theta|^2 / 2) I`.
pub fn verify_isotropy(theta: &ThetaSpec) -> f64 {
    isotropy_residual(&theta.iter().collect::<Vec<_>>())
}

/// Isotropy residual of an arbitrary, possibly non-radial, coefficient table.
pub fn isotropy_residual(table: &[(Mode, f64)]) -> f64 {
    let q = covariance_of(table.iter().copied(), Vec2::ZERO);
    let half = 0.5 * neumaier_sum(table.iter().map(|(_, t)| t * t));
    (q[0][0] - half)
        .abs()
        .max((q[1][1] - half).abs())
        .max(q[0][1].abs())
}

/// One row of the decay table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub cutoff: u32,
    pub theta_norm2: f64,
    /// Spectral norm of `eps^2 Q(x)`.
    pub norm: f64,
    /// Largest entry of `eps^2 Q(x)` in absolute value.
    pub max_entry: f64,
}

/// `|eps^2 Q(x)|` for each spectrum, with `eps` from `nu`.
pub fn verify_decay_condition(
    thetas: &[ThetaSpec],
    x: Vec2,
    nu: f64,
) -> Result<Vec<DecayRow>, NoiseError> {
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(NoiseError::InvalidViscosity(nu));
    }
    if wrap_coord(x.x) == 0.0 && wrap_coord(x.y) == 0.0 {
        return Err(NoiseError::AtOrigin);
    }
    Ok(thetas
        .iter()
        .map(|th| {
            let eps2 = 4.0 * nu / th.norm2();
            let q = covariance(th, x);
            let q = [[eps2 * q[0][0], eps2 * q[0][1]], [eps2 * q[1][0], eps2 * q[1][1]]];
            DecayRow {
                cutoff: th.cutoff(),
                theta_norm2: th.norm2(),
                norm: sym_spectral_norm(&q),
                max_entry: max_abs_entry(&q),
            }
        })
        .collect())
}

/// Brownian increments `dW^k` of one step, aligned with the active modes.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub step_index: u64,
    pub dt: f64,
    pub coefficients: Vec<f64>,
    fingerprint: u64,
}

impl NoiseIncrement {
    /// All-zero increment for `theta`.
    pub fn zero(theta: &ThetaSpec, step_index: u64, dt: f64) -> Self {
        NoiseIncrement {
            step_index,
            dt,
            coefficients: vec![0.0; theta.len()],
            fingerprint: theta.fingerprint(),
        }
    }

    /// Increment with explicit values, e.g. for fixtures.
    pub fn from_values(
        theta: &ThetaSpec,
        step_index: u64,
        dt: f64,
        coefficients: Vec<f64>,
    ) -> Result<Self, NoiseError> {
        if coefficients.len() != theta.len() {
            return Err(NoiseError::IncrementMismatch);
        }
        Ok(NoiseIncrement { step_index, dt, coefficients, fingerprint: theta.fingerprint() })
    }

    pub fn matches(&self, theta: &ThetaSpec) -> bool {
        self.fingerprint == theta.fingerprint() && self.coefficients.len() == theta.len()
    }

    /// `dW^k`, zero for inactive modes.
    pub fn get(&self, theta: &ThetaSpec, k: Mode) -> Option<f64> {
        theta.modes().binary_search(&k).ok().map(|i| self.coefficients[i])
    }
}

/// One `Normal(0, dt)` draw per active mode, in lexicographic mode order,
/// from the stream of step `step_index`.
pub fn sample_increment(
    theta: &ThetaSpec,
    dt: f64,
    key: &StreamKey,
    step_index: u64,
) -> Result<NoiseIncrement, NoiseError> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(NoiseError::InvalidTimeStep(dt));
    }
    if dt == 0.0 {
        return Ok(NoiseIncrement::zero(theta, step_index, dt));
    }
    let sd = dt.sqrt();
    let coefficients = theta
        .slots()
        .iter()
        .map(|&slot| sd * key.normal_at(step_index, slot))
        .collect();
    Ok(NoiseIncrement { step_index, dt, coefficients, fingerprint: theta.fingerprint() })
}

/// `eps sum_k theta_k sigma_k(x) dW^k`, summed mode by mode.
pub fn noise_velocity(
    spec: &NoiseSpec,
    inc: &NoiseIncrement,
    x: TorusPoint,
) -> Result<Vec2, NoiseError> {
    if !inc.matches(spec.theta()) {
        return Err(NoiseError::IncrementMismatch);
    }
    let eps = spec.epsilon();
    let mut v = Vec2::ZERO;
    for ((k, t), dw) in spec.theta().iter().zip(&inc.coefficients) {
        v += k.perp() * (eps * t * dw * basis(k, x) / k.norm());
    }
    Ok(v)
}

/// An upper-half-lattice mode `l` and its negative, which are both active.
#[derive(Debug, Clone, Copy)]
struct PairedMode {
    plus: usize,
    minus: usize,
    l2: i32,
    /// `sqrt(2) l_perp / |l|`.
    unit: Vec2,
    theta: f64,
}

/// Particles per work unit of the batched evaluation.
const CHUNK: usize = 256;

/// Per-step output of [`NoiseField::evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEvaluation {
    /// `eps sum_k theta_k sigma_k(x_i) dW^k` for each particle.
    pub displacements: Vec<Vec2>,
    /// For each probe mode `k` and paired mode `l`:
    /// `(<S, sigma_l . grad e_k>, <S, sigma_{-l} . grad e_k>)`.
    pub projections: Vec<Vec<[f64; 2]>>,
}

/// Batched noise evaluator for a fixed spectrum.
///
/// Modes are grouped in `(l, -l)` pairs sharing the phase `2 pi l.x`, and
/// phases are built from per-particle tables of `exp(2 pi i m x_j)`, which
/// brings the cost per particle and mode down to one complex product.
#[derive(Debug, Clone)]
pub struct NoiseField {
    spec: NoiseSpec,
    /// `(l1, range into pairs)`, `l1` ascending.
    rows: Vec<(usize, std::ops::Range<usize>)>,
    pairs: Vec<PairedMode>,
    reach: usize,
}

impl NoiseField {
    pub fn new(spec: NoiseSpec) -> Self {
        let theta = spec.theta();
        let mut pairs = Vec::new();
        let mut rows: Vec<(usize, std::ops::Range<usize>)> = Vec::new();
        let mut reach = 0usize;
        for (plus, (l, t)) in theta.iter().enumerate() {
            if !l.is_upper() {
                continue;
            }
            let minus = theta
                .modes()
                .binary_search(&l.negate())
                .expect("radial spectra contain -l with l");
            reach = reach.max(l.k1.unsigned_abs() as usize).max(l.k2.unsigned_abs() as usize);
            let l1 = l.k1 as usize;
            match rows.last_mut() {
                Some((r, range)) if *r == l1 => range.end += 1,
                _ => rows.push((l1, pairs.len()..pairs.len() + 1)),
            }
            pairs.push(PairedMode {
                plus,
                minus,
                l2: l.k2,
                unit: l.perp() * (SQRT_2 / l.norm()),
                theta: t,
            });
        }
        NoiseField { spec, rows, pairs, reach }
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    /// Number of `(l, -l)` pairs.
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Noise displacements at all particles and, for each probe mode `k`,
    /// the projections needed by the martingale of `<S, e_k>`. Results do not
    /// depend on the thread count.
    pub fn evaluate(
        &self,
        inc: &NoiseIncrement,
        positions: &[TorusPoint],
        probes: &[Mode],
    ) -> Result<NoiseEvaluation, NoiseError> {
        if !inc.matches(self.spec.theta()) {
            return Err(NoiseError::IncrementMismatch);
        }
        let eps = self.spec.epsilon();
        let amps: Vec<[f64; 2]> = self
            .pairs
            .iter()
            .map(|p| {
                [
                    eps * p.theta * inc.coefficients[p.plus],
                    eps * p.theta * inc.coefficients[p.minus],
                ]
            })
            .collect();
        let n = positions.len();
        let npairs = self.pairs.len();
        let chunks: Vec<(Vec<Vec2>, Vec<Vec<Complex64>>)> = positions
            .par_chunks(CHUNK)
            .map(|chunk| self.evaluate_chunk(chunk, &amps, probes))
            .collect();

        let mut displacements = Vec::with_capacity(n);
        let mut sums = vec![vec![Complex64::new(0.0, 0.0); npairs]; probes.len()];
        for (disp, acc) in chunks {
            displacements.extend(disp);
            for (s, a) in sums.iter_mut().zip(&acc) {
                for (x, y) in s.iter_mut().zip(a) {
                    *x += *y;
                }
            }
        }
        let inv_n = if n > 0 { 1.0 / n as f64 } else { 0.0 };
        let projections = probes
            .iter()
            .zip(&sums)
            .map(|(k, s)| {
                let kv = k.as_vec();
                self.pairs
                    .iter()
                    .zip(s)
                    .map(|(p, f)| {
                        let c = p.unit.dot(kv) * inv_n;
                        [c * f.re, c * f.im]
                    })
                    .collect()
            })
            .collect();
        Ok(NoiseEvaluation { displacements, projections })
    }

    /// Martingale and quadratic-variation increments of `<S, e_k>` for each
    /// probe: `dM = eps sum_l theta_l P_l dW^l` and
    /// `dQV = eps^2 dt sum_l theta_l^2 P_l^2`, with `P` from [`evaluate`](Self::evaluate).
    pub fn martingale_increments(
        &self,
        inc: &NoiseIncrement,
        projections: &[Vec<[f64; 2]>],
    ) -> Vec<(f64, f64)> {
        let eps = self.spec.epsilon();
        projections
            .iter()
            .map(|proj| {
                let mut dm = 0.0;
                let mut qv = 0.0;
                for (p, pr) in self.pairs.iter().zip(proj) {
                    dm += p.theta
                        * (inc.coefficients[p.plus] * pr[0] + inc.coefficients[p.minus] * pr[1]);
                    qv += p.theta * p.theta * (pr[0] * pr[0] + pr[1] * pr[1]);
                }
                (eps * dm, eps * eps * inc.dt * qv)
            })
            .collect()
    }

    fn evaluate_chunk(
        &self,
        chunk: &[TorusPoint],
        amps: &[[f64; 2]],
        probes: &[Mode],
    ) -> (Vec<Vec2>, Vec<Vec<Complex64>>) {
        let r = self.reach;
        let mut e1 = vec![Complex64::new(0.0, 0.0); r + 1];
        let mut e2 = vec![Complex64::new(0.0, 0.0); 2 * r + 1];
        let mut acc = vec![vec![Complex64::new(0.0, 0.0); self.pairs.len()]; probes.len()];
        let mut weights = vec![0.0; probes.len()];
        let mut disp = Vec::with_capacity(chunk.len());
        for x in chunk {
            for (m, e) in e1.iter_mut().enumerate() {
                let (s, c) = (TWO_PI * m as f64 * x.x1()).sin_cos();
                *e = Complex64::new(c, s);
            }
            for (j, e) in e2.iter_mut().enumerate() {
                let m = j as f64 - r as f64;
                let (s, c) = (TWO_PI * m * x.x2()).sin_cos();
                *e = Complex64::new(c, s);
            }
            // grad e_k = k * weight
            for (w, k) in weights.iter_mut().zip(probes) {
                let (s, c) = k.phase(*x).sin_cos();
                *w = if k.is_upper() {
                    -TWO_PI * SQRT_2 * s
                } else {
                    TWO_PI * SQRT_2 * c
                };
            }
            let mut v = Vec2::ZERO;
            for (l1, range) in &self.rows {
                let p1 = e1[*l1];
                for idx in range.clone() {
                    let p = &self.pairs[idx];
                    let z = p1 * e2[(p.l2 + r as i32) as usize];
                    let a = amps[idx];
                    v += p.unit * (a[0] * z.re + a[1] * z.im);
                    for (q, w) in weights.iter().enumerate() {
                        acc[q][idx] += z * *w;
                    }
                }
            }
            disp.push(v);
        }
        (disp, acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pt(a: f64, b: f64) -> TorusPoint {
        TorusPoint::new(a, b).unwrap()
    }

    #[test]
    fn single_shell_counts() {
        let th = make_theta(1, Profile::Constant).unwrap();
        assert_eq!(
            th.modes(),
            &[Mode::new(-1, 0), Mode::new(0, -1), Mode::new(0, 1), Mode::new(1, 0)]
        );
        assert_eq!(th.norm2(), 4.0);
        let shell = make_theta(5, Profile::SingleShell).unwrap();
        // 5^2 = 3^2 + 4^2: twelve lattice points
        assert_eq!(shell.len(), 12);
    }

    #[test]
    fn default_profile_values() {
        let th = make_theta(2, Profile::InverseNorm).unwrap();
        assert_abs_diff_eq!(th.theta(Mode::new(1, 1)), 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(th.theta(Mode::new(3, 0)), 0.0);
    }

    #[test]
    fn zero_cutoff_and_empty_profiles_rejected() {
        assert_eq!(make_theta(0, Profile::InverseNorm), Err(NoiseError::ZeroCutoff));
        let empty = ThetaSpec::from_table(3, vec![(Mode::new(1, 0), 0.0), (Mode::new(-1, 0), 0.0)]);
        assert_eq!(empty, Err(NoiseError::EmptyProfile(3)));
    }

    #[test]
    fn non_radial_tables_rejected_and_flagged() {
        let table = vec![
            (Mode::new(1, 0), 1.0),
            (Mode::new(-1, 0), 1.0),
            (Mode::new(0, 1), 0.5),
            (Mode::new(0, -1), 0.5),
        ];
        assert!(matches!(
            ThetaSpec::from_table(1, table.clone()),
            Err(NoiseError::NotRadial(..))
        ));
        assert!(isotropy_residual(&table) > 0.1);
    }

    #[test]
    fn scaling_identity() {
        for cutoff in [1, 3, 8, 64] {
            for profile in [Profile::InverseNorm, Profile::Constant, Profile::SingleShell] {
                let th = make_theta(cutoff, profile).unwrap();
                let spec = NoiseSpec::new(th, 0.05).unwrap();
                let e = spec.epsilon();
                let lhs = e * e * spec.theta().norm2();
                assert!((lhs - 0.2).abs() <= 1e-12 * 0.2);
            }
        }
        // default profile: |theta|^2 is the lattice sum of |k|^-2
        let th = make_theta(8, Profile::InverseNorm).unwrap();
        let direct: f64 = modes_in_disk(8).iter().map(|k| 1.0 / k.norm2() as f64).sum();
        assert_abs_diff_eq!(th.norm2(), direct, epsilon = 1e-12);
        assert!(NoiseSpec::new(th, -1.0).is_err());
    }

    #[test]
    fn sigma_examples() {
        let o = TorusPoint::ORIGIN;
        let s = sigma_eval(Mode::new(1, 0), o).unwrap();
        assert_abs_diff_eq!(s.x, 0.0);
        assert_abs_diff_eq!(s.y, -SQRT_2, epsilon = 1e-15);
        let s = sigma_eval(Mode::new(0, 1), o).unwrap();
        assert_abs_diff_eq!(s.x, SQRT_2, epsilon = 1e-15);
        assert_eq!(sigma_eval(Mode::new(-1, 0), o).unwrap(), Vec2::new(0.0, 0.0));
        assert_eq!(sigma_eval(Mode::ZERO, o), Err(NoiseError::ZeroMode));
    }

    #[test]
    fn sigma_is_divergence_free() {
        let h = 1e-6;
        for k in [Mode::new(2, -1), Mode::new(-3, 1), Mode::new(0, 4)] {
            let (a, b) = (0.21, -0.13);
            let div = (sigma_eval(k, pt(a + h, b)).unwrap().x - sigma_eval(k, pt(a - h, b)).unwrap().x
                + sigma_eval(k, pt(a, b + h)).unwrap().y
                - sigma_eval(k, pt(a, b - h)).unwrap().y)
                / (2.0 * h);
            assert!(div.abs() < 1e-6);
        }
    }

    #[test]
    fn single_shell_covariance_at_origin() {
        let th = make_theta(1, Profile::Constant).unwrap();
        let q = covariance(&th, Vec2::ZERO);
        assert_eq!(q, [[2.0, 0.0], [0.0, 2.0]]);
        assert_eq!(verify_isotropy(&th), 0.0);
    }

    #[test]
    fn isotropy_default_spectra() {
        for cutoff in [8, 64, 256] {
            let th = make_theta(cutoff, Profile::InverseNorm).unwrap();
            assert!(verify_isotropy(&th) <= 1e-12 * th.norm2());
        }
    }

    #[test]
    fn decay_table_matches_reference_values() {
        // eps^2 |Q(x)| / nu at x = (0.3, 0.2), computed independently in numpy
        let expect = [0.35131, 0.21193, 0.15626, 0.12371];
        let thetas: Vec<_> = [8, 32, 128, 512]
            .iter()
            .map(|&c| make_theta(c, Profile::InverseNorm).unwrap())
            .collect();
        let rows = verify_decay_condition(&thetas, Vec2::new(0.3, 0.2), 1.0).unwrap();
        for (r, e) in rows.iter().zip(expect) {
            assert_abs_diff_eq!(r.norm, e, epsilon = 1e-5);
            assert!(r.norm <= 2.0);
        }
        assert!(rows.windows(2).all(|w| w[1].norm < w[0].norm));
        assert!(rows.windows(2).all(|w| w[1].max_entry < w[0].max_entry));
        assert_eq!(
            verify_decay_condition(&thetas, Vec2::new(1.0, -2.0), 1.0),
            Err(NoiseError::AtOrigin)
        );
        let corner = verify_decay_condition(&thetas[..1], Vec2::new(0.5, 0.5), 1.0).unwrap();
        assert!(corner[0].norm.is_finite());
    }

    #[test]
    fn increments() {
        let th = make_theta(4, Profile::InverseNorm).unwrap();
        let key = StreamKey::new(5, 0);
        let a = sample_increment(&th, 1e-3, &key, 12).unwrap();
        let b = sample_increment(&th, 1e-3, &key, 12).unwrap();
        assert_eq!(a, b);
        let c = sample_increment(&th, 1e-3, &key, 13).unwrap();
        assert_ne!(a, c);
        let z = sample_increment(&th, 0.0, &key, 12).unwrap();
        assert!(z.coefficients.iter().all(|&v| v == 0.0));
        assert!(sample_increment(&th, -1.0, &key, 0).is_err());
        for i in [0usize, 3, th.len() - 1] {
            assert_eq!(a.coefficients[i], 1e-3f64.sqrt() * key.normal_at(12, th.slots()[i]));
        }
        // a mode shared by two cutoffs gets the same draw
        let big = make_theta(9, Profile::Constant).unwrap();
        let d = sample_increment(&big, 1e-3, &key, 12).unwrap();
        for k in th.modes() {
            assert_eq!(a.get(&th, *k), d.get(&big, *k));
        }
    }

    #[test]
    fn random_slots_enumerate_the_lattice() {
        let mut all = modes_in_disk(12);
        all.sort_by_key(|k| (k.norm2(), *k));
        for (i, k) in all.iter().enumerate() {
            assert_eq!(random_slot(*k), i as u64, "{k}");
        }
        assert_eq!(random_slot(Mode::new(-1, 0)), 0);
        assert_eq!(random_slot(Mode::new(1, 0)), 3);
        // the batch ranking agrees on a sparse table
        let shell = make_theta(25, Profile::SingleShell).unwrap();
        let single: Vec<u64> = shell.modes().iter().map(|&k| random_slot(k)).collect();
        assert_eq!(shell.slots(), single.as_slice());
    }

    #[test]
    fn increment_variance() {
        let th = make_theta(1, Profile::Constant).unwrap();
        let key = StreamKey::new(77, 1);
        let dt = 1e-3;
        let steps = 100_000;
        let xs: Vec<f64> = (0..steps)
            .map(|s| sample_increment(&th, dt, &key, s).unwrap().coefficients[2])
            .collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / steps as f64;
        let se = dt * (2.0 / steps as f64).sqrt();
        assert!((var - dt).abs() <= 3.0 * se, "var {var}");
    }

    #[test]
    fn noise_velocity_examples() {
        let th = make_theta(1, Profile::Constant).unwrap();
        let spec = NoiseSpec::new(th.clone(), 0.1).unwrap();
        let zero = NoiseIncrement::zero(&th, 0, 1.0);
        assert_eq!(noise_velocity(&spec, &zero, pt(0.1, 0.2)).unwrap(), Vec2::ZERO);
        let mut vals = vec![0.0; 4];
        vals[3] = 1.0; // mode (1, 0)
        let inc = NoiseIncrement::from_values(&th, 0, 1.0, vals).unwrap();
        let v = noise_velocity(&spec, &inc, TorusPoint::ORIGIN).unwrap();
        assert_abs_diff_eq!(v.x, 0.0);
        assert_abs_diff_eq!(v.y, -spec.epsilon() * SQRT_2, epsilon = 1e-15);
        let other = make_theta(2, Profile::Constant).unwrap();
        let wrong = NoiseIncrement::zero(&other, 0, 1.0);
        assert_eq!(noise_velocity(&spec, &wrong, TorusPoint::ORIGIN), Err(NoiseError::IncrementMismatch));
    }

    #[test]
    fn noise_velocity_variance_matches_intensity() {
        let nu = 0.05;
        let th = make_theta(6, Profile::InverseNorm).unwrap();
        let spec = NoiseSpec::new(th.clone(), nu).unwrap();
        let key = StreamKey::new(3, 4);
        let dt = 1.0;
        let x = pt(0.17, -0.31);
        let n = 40_000;
        let sq: Vec<f64> = (0..n)
            .map(|s| {
                let inc = sample_increment(&th, dt, &key, s).unwrap();
                noise_velocity(&spec, &inc, x).unwrap().norm2()
            })
            .collect();
        let mean = sq.iter().sum::<f64>() / n as f64;
        let sd = (sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 4.0 * nu).abs() <= 3.0 * sd / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn batched_field_matches_mode_sum() {
        let th = make_theta(9, Profile::InverseNorm).unwrap();
        let spec = NoiseSpec::new(th.clone(), 0.07).unwrap();
        let inc = sample_increment(&th, 1e-2, &StreamKey::new(1, 2), 3).unwrap();
        let pts: Vec<TorusPoint> = (0..300)
            .map(|i| pt(0.37 * i as f64 - 0.11, 0.123 * (i * i) as f64))
            .collect();
        let probes = [Mode::new(1, 0), Mode::new(0, -1), Mode::new(1, 1)];
        let field = NoiseField::new(spec.clone());
        let ev = field.evaluate(&inc, &pts, &probes).unwrap();
        for (x, d) in pts.iter().zip(&ev.displacements) {
            let v = noise_velocity(&spec, &inc, *x).unwrap();
            assert!((v - *d).norm() <= 1e-13);
        }
        // projections against direct particle sums
        for (q, k) in probes.iter().enumerate() {
            for (idx, (l, _)) in th.iter().filter(|(l, _)| l.is_upper()).enumerate() {
                let direct = |m: Mode| {
                    pts.iter()
                        .map(|x| sigma_eval(m, *x).unwrap().dot(crate::basis::basis_gradient(*k, *x)))
                        .sum::<f64>()
                        / pts.len() as f64
                };
                assert_abs_diff_eq!(ev.projections[q][idx][0], direct(l), epsilon = 1e-12);
                assert_abs_diff_eq!(ev.projections[q][idx][1], direct(l.negate()), epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn covariance_bound_and_symmetry(a in -0.5f64..0.5, b in -0.5f64..0.5, cutoff in 1u32..24) {
            let th = make_theta(cutoff, Profile::InverseNorm).unwrap();
            let nu = 0.3;
            let eps2 = 4.0 * nu / th.norm2();
            let q = covariance(&th, Vec2::new(a, b));
            let qm = covariance(&th, Vec2::new(-a, -b));
            prop_assert_eq!(q[0][1], q[1][0]);
            prop_assert!((q[0][0] - qm[0][0]).abs() <= 1e-12 * th.norm2());
            prop_assert!(eps2 * sym_spectral_norm(&q) <= 2.0 * nu * (1.0 + 1e-12));
        }

        #[test]
        fn every_spectrum_is_radial(cutoff in 1u32..40) {
            for profile in [Profile::InverseNorm, Profile::Constant] {
                let th = make_theta(cutoff, profile).unwrap();
                for (k, t) in th.iter() {
                    for j in [Mode::new(k.k2, k.k1), Mode::new(-k.k1, k.k2), k.negate()] {
                        prop_assert_eq!(th.theta(j), t);
                    }
                }
            }
        }

        #[test]
        fn draws_ignore_evaluation_order(seed in 0u64..1000, step in 0u64..1000) {
            let th = make_theta(3, Profile::InverseNorm).unwrap();
            let key = StreamKey::new(seed, 0);
            let inc = sample_increment(&th, 1.0, &key, step).unwrap();
            for i in (0..th.len()).rev() {
                prop_assert_eq!(inc.coefficients[i], key.normal_at(step, th.slots()[i]));
            }
        }
    }
}
