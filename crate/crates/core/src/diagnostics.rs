//! Observables of the empirical measure `S = (1/N) sum_i delta_{x_i}` and of
//! the particle law.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{basis, basis_gradient, laplacian_eigenvalue, modes_in_disk, Mode};
use crate::density::DensitySpec;
use crate::kernel::KernelEvaluator;
use crate::noise::{NoiseError, NoiseIncrement, NoiseSpec};
use crate::sum::{neumaier_sum, Neumaier};
use crate::torus::{torus_diff, TorusPoint, Vec2};

const TWO_PI: f64 = 2.0 * PI;

/// Fewest seeds accepted by [`increment_moment_scan`].
pub const MIN_SCAN_SEEDS: usize = 32;

/// Grid on which the Hamiltonian offset is computed.
pub const OFFSET_GRID: usize = 1024;
/// Margin added to the Hamiltonian offset.
pub const OFFSET_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("Sobolev order must exceed 1, got {0}")]
    SobolevOrder(f64),
    #[error("mode window must be at least 1")]
    EmptyWindow,
    #[error("ball radius must lie in (0, 1/4), got {0}")]
    Radius(f64),
    #[error("center grid {grid} is coarser than 2/r = {min}")]
    CoarseGrid { grid: usize, min: usize },
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("histograms with {0} and {1} bins cannot be merged")]
    BinMismatch(usize, usize),
    #[error("moment scan needs at least {MIN_SCAN_SEEDS} seeds, got {0}")]
    TooFewSeeds(usize),
    #[error("lag {lag} does not fit in a series of length {len}")]
    LagTooLong { lag: usize, len: usize },
    #[error("lags must be positive")]
    ZeroLag,
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// `<S, e_k> = (1/N) sum_i e_k(x_i)`; 1 for `k = 0`.
pub fn empirical_mode(positions: &[TorusPoint], k: Mode) -> f64 {
    if k.is_zero() {
        return 1.0;
    }
    positions.iter().map(|&x| basis(k, x)).sum::<f64>() / positions.len() as f64
}

/// [`empirical_mode`] for several modes.
pub fn empirical_modes(positions: &[TorusPoint], modes: &[Mode]) -> Vec<f64> {
    modes.iter().map(|&k| empirical_mode(positions, k)).collect()
}

/// Truncated negative Sobolev norm
/// `( sum_{|k| <= M} <S, e_k>^2 / (1 + |k|^2)^s )^{1/2}`, including `k = 0`.
pub fn sobolev_neg_norm(positions: &[TorusPoint], s: f64, window: u32) -> Result<f64, DiagnosticsError> {
    if !(s > 1.0) {
        return Err(DiagnosticsError::SobolevOrder(s));
    }
    if window == 0 {
        return Err(DiagnosticsError::EmptyWindow);
    }
    let mut acc = Neumaier::new();
    acc.add(1.0);
    for k in modes_in_disk(window) {
        let m = empirical_mode(positions, k);
        acc.add(m * m / (1.0 + k.norm2() as f64).powf(s));
    }
    Ok(acc.value().sqrt())
}

/// `( 1 + sum_{0 < |k| <= M} 2 / (1 + |k|^2)^s )^{1/2}`, which bounds
/// [`sobolev_neg_norm`] for every probability measure.
pub fn sobolev_bound(s: f64, window: u32) -> f64 {
    let mut acc = Neumaier::new();
    acc.add(1.0);
    for k in modes_in_disk(window) {
        acc.add(2.0 / (1.0 + k.norm2() as f64).powf(s));
    }
    acc.value().sqrt()
}

/// Offset `c0` of the Hamiltonian: the larger of `max G` and
/// `max_{|x| <= 1/2} (G(x) - (1/2 pi) log|x|)` over a 1024^2 grid, plus 1e-3.
///
/// The second term makes `c0 - G(x) >= (1/2 pi) log(1/|x|)` for `|x| <= 1/2`,
/// which is what the concentration bound needs.
pub fn hamiltonian_offset(ev: &KernelEvaluator) -> f64 {
    let n = OFFSET_GRID;
    let row_max = |i: usize| {
        let x1 = i as f64 / n as f64 - 0.5;
        let mut m = f64::NEG_INFINITY;
        for j in 0..n {
            let x = Vec2::new(x1, j as f64 / n as f64 - 0.5);
            if x != Vec2::ZERO {
                m = m.max(ev.green(x));
            }
            if x.norm2() <= 0.25 {
                m = m.max(ev.green_remainder(x));
            }
        }
        m
    };
    let m = (0..n).into_par_iter().map(row_max).reduce(|| f64::NEG_INFINITY, f64::max);
    m + OFFSET_MARGIN
}

/// Hamiltonian `H = (1/N^2) sum_{i != j} [c0 - G(x_i - x_j)]` and interaction
/// energy `(1/N^2) sum_{i != j} -G(x_i - x_j)`, with the clamped `G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairEnergy {
    pub hamiltonian: f64,
    pub energy: f64,
}

/// Both pair sums in one pass. Zero for `N < 2`.
pub fn pair_energy(positions: &[TorusPoint], ev: &KernelEvaluator, c0: f64) -> PairEnergy {
    let n = positions.len();
    if n < 2 {
        return PairEnergy { hamiltonian: 0.0, energy: 0.0 };
    }
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .with_min_len(16)
        .map(|i| {
            let xi = positions[i];
            let mut h = Neumaier::new();
            let mut e = Neumaier::new();
            for &xj in &positions[i + 1..] {
                let g = ev.green(torus_diff(xi, xj));
                h.add(c0 - g);
                e.add(-g);
            }
            (h.value(), e.value())
        })
        .collect();
    let scale = 2.0 / (n as f64 * n as f64);
    PairEnergy {
        hamiltonian: scale * neumaier_sum(rows.iter().map(|r| r.0)),
        energy: scale * neumaier_sum(rows.iter().map(|r| r.1)),
    }
}

/// `H_N`; defined as 0 when `N < 2`.
pub fn hamiltonian(positions: &[TorusPoint], ev: &KernelEvaluator, c0: f64) -> f64 {
    pair_energy(positions, ev, c0).hamiltonian
}

/// `<-G, S (x) S>` off the diagonal.
pub fn interaction_energy(positions: &[TorusPoint], ev: &KernelEvaluator) -> f64 {
    pair_energy(positions, ev, 0.0).energy
}

/// `int int G(x - y) f0(x) f0(y) dx dy = -sum_k a_k^2 / (4 pi^2 |k|^2)`.
pub fn green_pairing(f0: &DensitySpec) -> f64 {
    -neumaier_sum(
        f0.coefficients()
            .iter()
            .map(|&(k, a)| a * a / (4.0 * PI * PI * k.norm2() as f64)),
    )
}

/// The same double integral by the midpoint rule on an `n x n` grid, written
/// as `int G(z) u(z) dz` with the autocorrelation
/// `u(z) = int f0(x) f0(x - z) dx = 1 + sum_k a_k^2 cos(2 pi k.z)`.
pub fn green_pairing_quadrature(f0: &DensitySpec, ev: &KernelEvaluator, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = Neumaier::new();
            for j in 0..n {
                let z = Vec2::new((i as f64 + 0.5) * h - 0.5, (j as f64 + 0.5) * h - 0.5);
                let u = 1.0
                    + f0.coefficients()
                        .iter()
                        .map(|&(k, a)| {
                            a * a * (TWO_PI * (k.k1 as f64 * z.x + k.k2 as f64 * z.y)).cos()
                        })
                        .sum::<f64>();
                acc.add(ev.green(z) * u);
            }
            acc.value()
        })
        .collect();
    neumaier_sum(rows) * h * h
}

/// `max` over an `grid x grid` lattice of centers of `S(B_r(center))`, with
/// open balls in the torus metric. The lattice maximum undershoots the true
/// supremum by at most the mass of an annulus one lattice cell wide.
pub fn concentration_stat(positions: &[TorusPoint], r: f64, grid: usize) -> Result<f64, DiagnosticsError> {
    if !(r > 0.0 && r < 0.25) {
        return Err(DiagnosticsError::Radius(r));
    }
    let min = (2.0 / r).ceil() as usize;
    if grid < min {
        return Err(DiagnosticsError::CoarseGrid { grid, min });
    }
    let n = positions.len();
    if n == 0 {
        return Ok(0.0);
    }
    // cell list with cells no smaller than r
    let nc = ((1.0 / r).floor() as usize).max(1);
    let cell_of = |v: f64| (((v + 0.5) * nc as f64).floor() as usize).min(nc - 1);
    let mut cells: Vec<Vec<TorusPoint>> = vec![Vec::new(); nc * nc];
    for &p in positions {
        cells[cell_of(p.x1()) * nc + cell_of(p.x2())].push(p);
    }
    let mut neigh: Vec<usize> = Vec::with_capacity(9);
    let r2 = r * r;
    let mut best = 0usize;
    for i in 0..grid {
        for j in 0..grid {
            let c = TorusPoint::new(i as f64 / grid as f64 - 0.5, j as f64 / grid as f64 - 0.5)
                .expect("finite");
            let (ci, cj) = (cell_of(c.x1()), cell_of(c.x2()));
            neigh.clear();
            for di in [nc - 1, 0, 1] {
                for dj in [nc - 1, 0, 1] {
                    neigh.push(((ci + di) % nc) * nc + (cj + dj) % nc);
                }
            }
            neigh.sort_unstable();
            neigh.dedup();
            let count: usize = neigh
                .iter()
                .map(|&cell| {
                    cells[cell]
                        .iter()
                        .filter(|&&p| torus_diff(p, c).norm2() < r2)
                        .count()
                })
                .sum();
            best = best.max(count);
        }
    }
    Ok(best as f64 / n as f64)
}

/// `1/sqrt(N) + (2 pi H / log(1/(2r)))^{1/2}`.
pub fn concentration_bound(n: usize, hamiltonian: f64, r: f64) -> f64 {
    1.0 / (n as f64).sqrt() + (TWO_PI * hamiltonian.max(0.0) / (1.0 / (2.0 * r)).ln()).sqrt()
}

/// Running martingale `M_t = eps sum_l theta_l int <S, sigma_l . grad e_k> dW^l`
/// and its quadratic variation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MartingaleState {
    pub value: f64,
    pub qv: f64,
    /// `max_{s <= t} |M_s|^2`.
    pub sup_sq: f64,
}

impl MartingaleState {
    #[inline]
    pub fn apply(&mut self, dm: f64, dqv: f64) {
        self.value += dm;
        self.qv += dqv;
        self.sup_sq = self.sup_sq.max(self.value * self.value);
    }
}

/// Advance the martingale of `<S, e_k>` by one step, mode by mode.
pub fn martingale_accumulate(
    state: &mut MartingaleState,
    positions: &[TorusPoint],
    spec: &NoiseSpec,
    inc: &NoiseIncrement,
    k: Mode,
) -> Result<(), DiagnosticsError> {
    if !inc.matches(spec.theta()) {
        return Err(NoiseError::IncrementMismatch.into());
    }
    let eps = spec.epsilon();
    let n = positions.len() as f64;
    let mut dm = 0.0;
    let mut qv = 0.0;
    for ((l, t), dw) in spec.theta().iter().zip(&inc.coefficients) {
        let scale = 1.0 / l.norm();
        let p = positions
            .iter()
            .map(|&x| (l.perp() * (basis(l, x) * scale)).dot(basis_gradient(k, x)))
            .sum::<f64>()
            / n;
        dm += t * p * dw;
        qv += t * t * p * p;
    }
    state.apply(eps * dm, eps * eps * inc.dt * qv);
    Ok(())
}

/// Martingale states for a set of test modes, plus the terms of the weak
/// formulation
/// `<S_t, e_k> = <S_0, e_k> + int <S (x) S, H_k> + nu int <S, Lap e_k> + M_t`
/// so that its residual can be monitored.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleTracker {
    modes: Vec<Mode>,
    states: Vec<MartingaleState>,
    initial: Vec<f64>,
    drift_integral: Vec<f64>,
    viscous_integral: Vec<f64>,
}

impl MartingaleTracker {
    pub fn new(modes: &[Mode], initial_positions: &[TorusPoint]) -> Self {
        MartingaleTracker {
            modes: modes.to_vec(),
            states: vec![MartingaleState::default(); modes.len()],
            initial: empirical_modes(initial_positions, modes),
            drift_integral: vec![0.0; modes.len()],
            viscous_integral: vec![0.0; modes.len()],
        }
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn states(&self) -> &[MartingaleState] {
        &self.states
    }

    /// Record one step taken from `positions` with pairwise drift `drift`.
    pub fn observe_step(
        &mut self,
        positions: &[TorusPoint],
        drift: Option<&[Vec2]>,
        dt: f64,
        nu: f64,
        increments: &[(f64, f64)],
    ) {
        let n = positions.len() as f64;
        for (q, &k) in self.modes.iter().enumerate() {
            if let Some(d) = drift {
                let pairing = positions
                    .iter()
                    .zip(d)
                    .map(|(&x, v)| v.dot(basis_gradient(k, x)))
                    .sum::<f64>()
                    / n;
                self.drift_integral[q] += dt * pairing;
            }
            self.viscous_integral[q] += dt * nu * laplacian_eigenvalue(k) * empirical_mode(positions, k);
            let (dm, dqv) = increments.get(q).copied().unwrap_or((0.0, 0.0));
            self.states[q].apply(dm, dqv);
        }
    }

    /// Residual of the weak formulation at the current positions.
    pub fn weak_residuals(&self, positions: &[TorusPoint]) -> Vec<f64> {
        self.modes
            .iter()
            .enumerate()
            .map(|(q, &k)| {
                empirical_mode(positions, k)
                    - self.initial[q]
                    - self.drift_integral[q]
                    - self.viscous_integral[q]
                    - self.states[q].value
            })
            .collect()
    }
}

/// Ordered-pair histogram on `T^2 x T^2` with `bins` cells per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PairHistogram {
    bins: usize,
    counts: Vec<u64>,
    total: u64,
}

impl PairHistogram {
    pub fn new(bins: usize) -> Self {
        PairHistogram { bins, counts: vec![0; bins.pow(4)], total: 0 }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    fn cell(&self, x: TorusPoint) -> usize {
        let b = self.bins;
        let idx = |v: f64| (((v + 0.5) * b as f64).floor() as usize).min(b - 1);
        idx(x.x1()) * b + idx(x.x2())
    }

    /// Add one ordered pair.
    pub fn add_pair(&mut self, x: TorusPoint, y: TorusPoint) {
        let b2 = self.bins * self.bins;
        let c = self.cell(x) * b2 + self.cell(y);
        self.counts[c] += 1;
        self.total += 1;
    }

    /// Add all `N (N - 1)` ordered pairs `(x_i, x_j)`, `i != j`.
    pub fn add_ensemble(&mut self, positions: &[TorusPoint]) {
        let b2 = self.bins * self.bins;
        let mut occ = vec![0u64; b2];
        for &p in positions {
            occ[self.cell(p)] += 1;
        }
        let occupied: Vec<usize> = (0..b2).filter(|&c| occ[c] > 0).collect();
        for &c in &occupied {
            for &d in &occupied {
                let m = if c == d { occ[c] * (occ[c] - 1) } else { occ[c] * occ[d] };
                self.counts[c * b2 + d] += m;
            }
        }
        let n = positions.len() as u64;
        self.total += n * n.saturating_sub(1);
    }

    pub fn merge(&mut self, other: &PairHistogram) -> Result<(), DiagnosticsError> {
        if self.bins != other.bins {
            return Err(DiagnosticsError::BinMismatch(self.bins, other.bins));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }
}

/// `h2 = (1/2) sum p log(p / vol)` over the histogram cells, `vol = b^-4`.
/// Biased upward by roughly `(occupied cells) / (2 * samples)`.
pub fn entropy2_estimate(h: &PairHistogram) -> Result<f64, DiagnosticsError> {
    if h.total == 0 {
        return Err(DiagnosticsError::EmptyHistogram);
    }
    let total = h.total as f64;
    let inv_vol = (h.bins as f64).powi(4);
    Ok(0.5
        * neumaier_sum(h.counts.iter().filter(|&&c| c > 0).map(|&c| {
            let p = c as f64 / total;
            p * (p * inv_vol).ln()
        })))
}

/// Fourth moments of mode increments at each lag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentScan {
    pub lags: Vec<usize>,
    pub moments: Vec<f64>,
    /// Least-squares slope of `log moment` against `log lag`; `None` unless at
    /// least two moments are positive.
    pub slope: Option<f64>,
}

/// `E (x_{t + tau} - x_t)^4` averaged over seeds and start times `t`, for
/// each lag `tau` (in samples).
pub fn increment_moment_scan(series: &[Vec<f64>], lags: &[usize]) -> Result<MomentScan, DiagnosticsError> {
    if series.len() < MIN_SCAN_SEEDS {
        return Err(DiagnosticsError::TooFewSeeds(series.len()));
    }
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    for &lag in lags {
        if lag == 0 {
            return Err(DiagnosticsError::ZeroLag);
        }
        if lag >= len {
            return Err(DiagnosticsError::LagTooLong { lag, len });
        }
    }
    let moments: Vec<f64> = lags
        .iter()
        .map(|&lag| {
            let mut acc = Neumaier::new();
            let mut count = 0usize;
            for s in series {
                for t in 0..len - lag {
                    acc.add((s[t + lag] - s[t]).powi(4));
                    count += 1;
                }
            }
            acc.value() / count as f64
        })
        .collect();
    let pts: Vec<(f64, f64)> = lags
        .iter()
        .zip(&moments)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&l, &m)| ((l as f64).ln(), m.ln()))
        .collect();
    let slope = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(MomentScan { lags: lags.to_vec(), moments, slope })
}

fn default_mode_window() -> u32 {
    3
}
fn default_sobolev_orders() -> Vec<f64> {
    vec![2.0]
}
fn default_sobolev_window() -> u32 {
    16
}
fn default_radii() -> Vec<f64> {
    vec![0.05]
}
fn default_martingale_modes() -> Vec<[i32; 2]> {
    vec![[1, 0], [0, 1], [1, 1]]
}
fn default_true() -> bool {
    true
}

/// What a [`DiagnosticsRecord`] contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Modes `0 < |k| <= mode_window` are recorded.
    #[serde(default = "default_mode_window")]
    pub mode_window: u32,
    #[serde(default = "default_sobolev_orders")]
    pub sobolev_orders: Vec<f64>,
    #[serde(default = "default_sobolev_window")]
    pub sobolev_window: u32,
    #[serde(default = "default_radii")]
    pub concentration_radii: Vec<f64>,
    #[serde(default = "default_martingale_modes")]
    pub martingale_modes: Vec<[i32; 2]>,
    #[serde(default = "default_true")]
    pub hamiltonian: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            mode_window: default_mode_window(),
            sobolev_orders: default_sobolev_orders(),
            sobolev_window: default_sobolev_window(),
            concentration_radii: default_radii(),
            martingale_modes: default_martingale_modes(),
            hamiltonian: true,
        }
    }
}

impl DiagnosticsConfig {
    pub fn martingale_modes(&self) -> Vec<Mode> {
        self.martingale_modes.iter().map(|k| Mode::new(k[0], k[1])).collect()
    }

    pub fn recorded_modes(&self) -> Vec<Mode> {
        modes_in_disk(self.mode_window)
    }

    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        for &s in &self.sobolev_orders {
            if !(s > 1.0) {
                return Err(DiagnosticsError::SobolevOrder(s));
            }
        }
        if self.sobolev_window == 0 {
            return Err(DiagnosticsError::EmptyWindow);
        }
        for &r in &self.concentration_radii {
            if !(r > 0.0 && r < 0.25) {
                return Err(DiagnosticsError::Radius(r));
            }
        }
        Ok(())
    }
}

/// Martingale columns of one record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MartingaleValue {
    pub mode: Mode,
    pub value: f64,
    pub qv: f64,
    pub sup_sq: f64,
    pub weak_residual: f64,
}

/// Observables at one scheduled time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub step: u64,
    pub time: f64,
    pub modes: Vec<(Mode, f64)>,
    pub hamiltonian: Option<f64>,
    pub energy: Option<f64>,
    pub hminus: Vec<(f64, f64)>,
    pub concentration: Vec<(f64, f64)>,
    pub martingale: Vec<MartingaleValue>,
    /// Smallest pair distance seen since the previous record.
    pub min_pair_distance: f64,
}

/// Record builder holding the evaluator and Hamiltonian offset.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub config: DiagnosticsConfig,
    pub evaluator: KernelEvaluator,
    pub c0: f64,
    modes: Vec<Mode>,
}

impl Diagnostics {
    pub fn new(config: DiagnosticsConfig, evaluator: KernelEvaluator, c0: f64) -> Self {
        let modes = config.recorded_modes();
        Diagnostics { config, evaluator, c0, modes }
    }

    pub fn record(
        &self,
        step: u64,
        time: f64,
        positions: &[TorusPoint],
        tracker: Option<&MartingaleTracker>,
        min_pair_distance: f64,
    ) -> DiagnosticsRecord {
        let n = positions.len();
        let modes = self
            .modes
            .iter()
            .map(|&k| (k, empirical_mode(positions, k)))
            .collect();
        let energy = (self.config.hamiltonian && n >= 2)
            .then(|| pair_energy(positions, &self.evaluator, self.c0));
        let hminus = self
            .config
            .sobolev_orders
            .iter()
            .map(|&s| {
                let v = sobolev_neg_norm(positions, s, self.config.sobolev_window)
                    .expect("validated configuration");
                (s, v)
            })
            .collect();
        let concentration = self
            .config
            .concentration_radii
            .iter()
            .map(|&r| {
                let grid = (4.0 / r).ceil() as usize;
                (r, concentration_stat(positions, r, grid).expect("validated configuration"))
            })
            .collect();
        let martingale = tracker
            .map(|t| {
                let res = t.weak_residuals(positions);
                t.modes()
                    .iter()
                    .zip(t.states())
                    .zip(res)
                    .map(|((&mode, s), weak_residual)| MartingaleValue {
                        mode,
                        value: s.value,
                        qv: s.qv,
                        sup_sq: s.sup_sq,
                        weak_residual,
                    })
                    .collect()
            })
            .unwrap_or_default();
        DiagnosticsRecord {
            step,
            time,
            modes,
            hamiltonian: energy.map(|e| e.hamiltonian),
            energy: energy.map(|e| e.energy),
            hminus,
            concentration,
            martingale,
            min_pair_distance,
        }
    }
}

/// Largest possible `|<S, e_k>|`.
pub const MODE_BOUND: f64 = SQRT_2;
