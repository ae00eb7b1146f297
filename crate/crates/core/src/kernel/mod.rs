//! Green function `G` and Biot-Savart kernel `K = grad_perp G` of the torus.
//!
//! `G(x) = (1/2 pi) log|x| + r(x)` with `r` smooth near the origin, and
//! `K(x) = (1/2 pi) x_perp / |x|^2 + R(x)`. [`KernelEvaluator`] tabulates the
//! smooth parts `r` and `R` on a uniform grid over a half cell and
//! interpolates them; the singular parts are evaluated exactly.
//!
//! Every query is reduced to a canonical half-domain first, so the evaluator
//! is odd (`K(-x) = -K(x)`) and `G` is even, both bit for bit.

pub mod series;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::torus::{torus_diff, wrap_coord, TorusPoint, Vec2};

pub use series::{green_gradient_rows, green_rows, kernel_rows, remainders, singular_kernel};

const TWO_PI: f64 = 2.0 * PI;

/// Rows summed by the reference series.
pub const ORACLE_ROWS: usize = 2048;
/// Default pair distance below which the singular part is capped.
pub const DEFAULT_CLAMP: f64 = 1e-6;
/// Accuracy required of a freshly built evaluator against the reference series.
pub const BUILD_TOLERANCE: f64 = 1e-6;
/// Number of validation points checked during construction.
pub const VALIDATION_POINTS: usize = 100;
/// Validation points keep at least this distance from the origin.
pub const VALIDATION_MIN_DISTANCE: f64 = 0.01;

pub const MIN_MODE_CUTOFF: usize = 64;
pub const MIN_TABLE_RESOLUTION: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("Green function is singular at the origin")]
    Singular,
    #[error("non-finite point ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("mode cutoff {0} is below the minimum {MIN_MODE_CUTOFF}")]
    CutoffTooSmall(usize),
    #[error("table resolution {0} is below the minimum {MIN_TABLE_RESOLUTION} or odd")]
    ResolutionTooSmall(usize),
    #[error("clamp distance {0} must be positive and finite")]
    InvalidClamp(f64),
    #[error(
        "table too coarse: sup error {residual:.3e} against the reference series exceeds {tolerance:.1e}"
    )]
    InsufficientResolution { residual: f64, tolerance: f64 },
}

/// `G(x)` from the reference row series, `rows` rows.
pub fn green(x: TorusPoint, rows: usize) -> Result<f64, KernelError> {
    if x == TorusPoint::ORIGIN {
        return Err(KernelError::Singular);
    }
    Ok(green_rows(x.as_vec(), rows))
}

/// Where a displacement lands after reduction to the canonical half-domain.
enum Canonical {
    /// `x ~ sign * y` with `y1` in `[0, 1/2]`.
    Point { y: Vec2, sign: f64 },
    /// A 2-torsion point (`2x = 0` on the torus); `K` vanishes there.
    Torsion(Vec2),
}

/// Reduce a wrapped displacement to the half-domain
/// `{0 < y1 < 1/2} u {y1 in {0, 1/2}, 0 < y2 < 1/2}`.
#[inline]
fn canonicalize(x1: f64, x2: f64) -> Canonical {
    if x1 > 0.0 {
        return Canonical::Point { y: Vec2::new(x1, x2), sign: 1.0 };
    }
    if x1 > -0.5 && x1 < 0.0 {
        return Canonical::Point { y: Vec2::new(-x1, wrap_coord(-x2)), sign: -1.0 };
    }
    // x1 is 0 or -1/2; the line is mapped to itself by negation.
    let y1 = if x1 == 0.0 { 0.0 } else { 0.5 };
    if x2 > 0.0 {
        Canonical::Point { y: Vec2::new(y1, x2), sign: 1.0 }
    } else if x2 < 0.0 && x2 > -0.5 {
        Canonical::Point { y: Vec2::new(y1, -x2), sign: -1.0 }
    } else {
        Canonical::Torsion(Vec2::new(y1, x2))
    }
}

/// Smooth parts `R` and `r` sampled on nodes
/// `x1 = (i - 1) h`, `x2 = (j - 1) h - 1/2`, `h = 1 / resolution`,
/// covering `[0, 1/2] x [-1/2, 1/2]` plus a one-node ghost layer on each side.
struct RemainderTable {
    inv_h: f64,
    half: usize,
    res: usize,
    cols: usize,
    kernel: Vec<[f64; 2]>,
    green: Vec<f64>,
}

impl RemainderTable {
    fn build(rows: usize, res: usize) -> Self {
        let h = 1.0 / res as f64;
        let half = res / 2;
        let nx = half + 3;
        let cols = res + 3;
        let values: Vec<series::Remainders> = (0..nx * cols)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / cols, idx % cols);
                let x1 = (i as f64 - 1.0) * h;
                let x2 = (j as f64 - 1.0) * h - 0.5;
                remainders(Vec2::new(x1, x2), rows)
            })
            .collect();
        RemainderTable {
            inv_h: res as f64,
            half,
            res,
            cols,
            kernel: values.iter().map(|v| [v.kernel.x, v.kernel.y]).collect(),
            green: values.iter().map(|v| v.green).collect(),
        }
    }

    /// Base index and cubic Lagrange weights for `y1` in `[0, 1/2]`, `y2` in `[-1/2, 1/2]`.
    #[inline]
    fn stencil(&self, y: Vec2) -> (usize, [f64; 4], [f64; 4]) {
        let u = y.x * self.inv_h;
        let i0 = (u.floor() as usize).min(self.half - 1);
        let v = (y.y + 0.5) * self.inv_h;
        let j0 = (v.floor().max(0.0) as usize).min(self.res - 1);
        (i0 * self.cols + j0, lagrange4(u - i0 as f64), lagrange4(v - j0 as f64))
    }

    #[inline]
    fn kernel_at(&self, y: Vec2) -> Vec2 {
        let (base, wx, wy) = self.stencil(y);
        let mut acc = [0.0; 2];
        for (a, wa) in wx.iter().enumerate() {
            let row = &self.kernel[base + a * self.cols..base + a * self.cols + 4];
            let mut r = [0.0; 2];
            for (b, wb) in wy.iter().enumerate() {
                r[0] += wb * row[b][0];
                r[1] += wb * row[b][1];
            }
            acc[0] += wa * r[0];
            acc[1] += wa * r[1];
        }
        Vec2::new(acc[0], acc[1])
    }

    #[inline]
    fn green_at(&self, y: Vec2) -> f64 {
        let (base, wx, wy) = self.stencil(y);
        let mut acc = 0.0;
        for (a, wa) in wx.iter().enumerate() {
            let row = &self.green[base + a * self.cols..base + a * self.cols + 4];
            let r: f64 = wy.iter().zip(row).map(|(w, g)| w * g).sum();
            acc += wa * r;
        }
        acc
    }
}

/// Cubic Lagrange weights for nodes at offsets -1, 0, 1, 2 and `t` in `[0, 1]`.
#[inline]
fn lagrange4(t: f64) -> [f64; 4] {
    let (tp, tm, tmm) = (t + 1.0, t - 1.0, t - 2.0);
    [
        -t * tm * tmm / 6.0,
        tp * tm * tmm / 2.0,
        -tp * t * tmm / 2.0,
        tp * t * tm / 6.0,
    ]
}

/// Tabulated evaluator of `K` and `G`. Cheap to clone; immutable.
#[derive(Clone)]
pub struct KernelEvaluator {
    mode_cutoff: usize,
    table_resolution: usize,
    singular_clamp: f64,
    build_residual: f64,
    table: Arc<RemainderTable>,
}

impl std::fmt::Debug for KernelEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelEvaluator")
            .field("mode_cutoff", &self.mode_cutoff)
            .field("table_resolution", &self.table_resolution)
            .field("singular_clamp", &self.singular_clamp)
            .field("build_residual", &self.build_residual)
            .finish()
    }
}

/// Build an evaluator and check it against the reference series.
pub fn build_kernel_evaluator(
    mode_cutoff: usize,
    table_resolution: usize,
) -> Result<KernelEvaluator, KernelError> {
    KernelEvaluator::build(mode_cutoff, table_resolution)
}

/// Fixed, seeded validation displacements with `|x| >= 0.01`; a fifth of them
/// lie in the annulus `0.01 <= |x| <= 0.05`.
pub fn validation_points() -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6b65_726e_656c);
    let mut pts = vec![Vec2::new(0.25, 0.0), Vec2::new(0.3, 0.2)];
    while pts.len() < VALIDATION_POINTS / 5 {
        let r: f64 = rng.random_range(VALIDATION_MIN_DISTANCE..0.05);
        let a: f64 = rng.random_range(0.0..TWO_PI);
        pts.push(Vec2::new(r * a.cos(), r * a.sin()));
    }
    while pts.len() < VALIDATION_POINTS {
        let p = Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        if p.norm() >= VALIDATION_MIN_DISTANCE {
            pts.push(p);
        }
    }
    pts
}

impl KernelEvaluator {
    pub fn build(mode_cutoff: usize, table_resolution: usize) -> Result<Self, KernelError> {
        if mode_cutoff < MIN_MODE_CUTOFF {
            return Err(KernelError::CutoffTooSmall(mode_cutoff));
        }
        if table_resolution < MIN_TABLE_RESOLUTION || table_resolution % 2 != 0 {
            return Err(KernelError::ResolutionTooSmall(table_resolution));
        }
        let table = Arc::new(RemainderTable::build(mode_cutoff, table_resolution));
        let mut ev = KernelEvaluator {
            mode_cutoff,
            table_resolution,
            singular_clamp: DEFAULT_CLAMP,
            build_residual: 0.0,
            table,
        };
        let residual = validation_points()
            .into_iter()
            .map(|p| {
                let k = ev.velocity(p);
                let o = kernel_rows(p, ORACLE_ROWS);
                (k.x - o.x).abs().max((k.y - o.y).abs())
            })
            .fold(0.0, f64::max);
        if !(residual <= BUILD_TOLERANCE) {
            return Err(KernelError::InsufficientResolution {
                residual,
                tolerance: BUILD_TOLERANCE,
            });
        }
        ev.build_residual = residual;
        Ok(ev)
    }

    /// Same tables with a different clamp distance.
    pub fn with_clamp(&self, delta_min: f64) -> Result<Self, KernelError> {
        if !(delta_min > 0.0 && delta_min.is_finite()) {
            return Err(KernelError::InvalidClamp(delta_min));
        }
        Ok(KernelEvaluator {
            singular_clamp: delta_min,
            ..self.clone()
        })
    }

    pub fn mode_cutoff(&self) -> usize {
        self.mode_cutoff
    }

    pub fn table_resolution(&self) -> usize {
        self.table_resolution
    }

    pub fn singular_clamp(&self) -> f64 {
        self.singular_clamp
    }

    /// Sup error against the reference series over [`validation_points`].
    pub fn build_residual(&self) -> f64 {
        self.build_residual
    }

    /// `K(x)` for any finite displacement; `K(0) = 0`, and the singular part is
    /// capped at its value at distance `singular_clamp`.
    #[inline]
    pub fn velocity(&self, x: Vec2) -> Vec2 {
        match canonicalize(wrap_coord(x.x), wrap_coord(x.y)) {
            Canonical::Torsion(_) => Vec2::ZERO,
            Canonical::Point { y, sign } => {
                let d2 = y.norm2();
                let delta = self.singular_clamp;
                let sing = if d2 >= delta * delta {
                    y.perp() * (1.0 / (TWO_PI * d2))
                } else {
                    y.perp() * (1.0 / (TWO_PI * d2.sqrt() * delta))
                };
                (sing + self.table.kernel_at(y)) * sign
            }
        }
    }

    /// `G(x)` with `log|x|` replaced by `log(max(|x|, singular_clamp))`.
    #[inline]
    pub fn green(&self, x: Vec2) -> f64 {
        let y = match canonicalize(wrap_coord(x.x), wrap_coord(x.y)) {
            Canonical::Torsion(y) => y,
            Canonical::Point { y, .. } => y,
        };
        let d = y.norm().max(self.singular_clamp);
        d.ln() / TWO_PI + self.table.green_at(y)
    }

    /// Interpolated smooth part `r = G - (1/2 pi) log|x|`.
    pub fn green_remainder(&self, x: Vec2) -> f64 {
        let y = match canonicalize(wrap_coord(x.x), wrap_coord(x.y)) {
            Canonical::Torsion(y) => y,
            Canonical::Point { y, .. } => y,
        };
        self.table.green_at(y)
    }
}

/// `K(x)` from a built evaluator.
#[inline]
pub fn biot_savart(e: &KernelEvaluator, x: Vec2) -> Vec2 {
    e.velocity(x)
}

const FIXED_SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64

#[inline]
fn to_fixed(v: f64) -> i128 {
    (v * FIXED_SCALE) as i128
}

/// Exact pair sums `sum_{j != i} K(x_i - x_j)` in 64.64 fixed point, and the
/// minimum pair distance.
///
/// Each unordered pair is evaluated once and added to both particles with
/// opposite signs. Integer addition is associative, so the result does not
/// depend on the order of accumulation or on the thread count.
pub(crate) fn pair_sums(e: &KernelEvaluator, positions: &[TorusPoint]) -> (Vec<[i128; 2]>, f64) {
    let n = positions.len();
    let zero = || (vec![[0i128; 2]; n], f64::INFINITY);
    let (sums, d2) = positions
        .par_iter()
        .enumerate()
        .with_min_len(8)
        .fold(zero, |(mut acc, mut dmin), (i, &xi)| {
            for (j, &xj) in positions.iter().enumerate().skip(i + 1) {
                let d = torus_diff(xi, xj);
                dmin = dmin.min(d.norm2());
                let k = e.velocity(d);
                let (kx, ky) = (to_fixed(k.x), to_fixed(k.y));
                acc[i][0] += kx;
                acc[i][1] += ky;
                acc[j][0] -= kx;
                acc[j][1] -= ky;
            }
            (acc, dmin)
        })
        .reduce(zero, |(mut a, da), (b, db)| {
            for (x, y) in a.iter_mut().zip(&b) {
                x[0] += y[0];
                x[1] += y[1];
            }
            (a, da.min(db))
        });
    (sums, d2.sqrt())
}

/// Mean-field drift `(1/N) sum_{j != i} K(x_i - x_j)` and the minimum pair
/// distance (`+inf` for a single particle).
pub fn pairwise_drift_with_min_distance(
    e: &KernelEvaluator,
    positions: &[TorusPoint],
) -> (Vec<Vec2>, f64) {
    let n = positions.len();
    let (sums, dmin) = pair_sums(e, positions);
    let scale = 1.0 / (FIXED_SCALE * n as f64);
    let v = sums
        .into_iter()
        .map(|[a, b]| Vec2::new(a as f64 * scale, b as f64 * scale))
        .collect();
    (v, dmin)
}

/// Mean-field drift `(1/N) sum_{j != i} K(x_i - x_j)`.
pub fn pairwise_drift(e: &KernelEvaluator, positions: &[TorusPoint]) -> Vec<Vec2> {
    pairwise_drift_with_min_distance(e, positions).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::OnceLock;

    const G_QUARTER: f64 = -0.028173878266428395652;
    const K2_QUARTER: f64 = -0.50374186017254235308;

    fn ev() -> &'static KernelEvaluator {
        static EV: OnceLock<KernelEvaluator> = OnceLock::new();
        EV.get_or_init(|| build_kernel_evaluator(64, 256).unwrap())
    }

    fn pt(a: f64, b: f64) -> TorusPoint {
        TorusPoint::new(a, b).unwrap()
    }

    #[test]
    fn build_rejects_small_parameters() {
        assert_eq!(
            build_kernel_evaluator(32, 512).unwrap_err(),
            KernelError::CutoffTooSmall(32)
        );
        assert_eq!(
            build_kernel_evaluator(64, 128).unwrap_err(),
            KernelError::ResolutionTooSmall(128)
        );
    }

    #[test]
    fn build_residual_is_reported() {
        let e = ev();
        assert!(e.build_residual() <= BUILD_TOLERANCE);
        assert!(e.build_residual() > 0.0);
    }

    #[test]
    fn green_rejects_origin() {
        assert_eq!(green(TorusPoint::ORIGIN, 64), Err(KernelError::Singular));
        assert_abs_diff_eq!(green(pt(0.25, 0.0), 2048).unwrap(), G_QUARTER, epsilon = 1e-15);
    }

    #[test]
    fn evaluator_matches_reference_at_quarter() {
        let k = ev().velocity(Vec2::new(0.25, 0.0));
        assert_abs_diff_eq!(k.x, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(k.y, K2_QUARTER, epsilon = 1e-6);
        assert_abs_diff_eq!(ev().green(Vec2::new(0.25, 0.0)), G_QUARTER, epsilon = 1e-6);
    }

    #[test]
    fn origin_and_torsion_points() {
        let e = ev();
        assert_eq!(e.velocity(Vec2::ZERO), Vec2::ZERO);
        for p in [(0.5, 0.0), (0.0, 0.5), (-0.5, -0.5), (0.5, 0.5)] {
            assert_eq!(e.velocity(Vec2::new(p.0, p.1)), Vec2::ZERO);
        }
        let g_corner = green_rows(Vec2::new(0.5, 0.5), 2048);
        assert_abs_diff_eq!(e.green(Vec2::new(-0.5, -0.5)), g_corner, epsilon = 1e-6);
        let clamp = e.singular_clamp();
        assert_abs_diff_eq!(
            e.green(Vec2::ZERO),
            clamp.ln() / TWO_PI + 0.20857779324350138,
            epsilon = 1e-6
        );
    }

    #[test]
    fn clamp_caps_the_magnitude() {
        let e = ev();
        let at = e.velocity(Vec2::new(1e-6, 0.0)).norm();
        let inside = e.velocity(Vec2::new(1e-9, 0.0)).norm();
        assert_abs_diff_eq!(at, inside, epsilon = 1e-9 * at);
        assert!(e.with_clamp(0.0).is_err());
        let wide = e.with_clamp(1e-2).unwrap();
        assert!(wide.velocity(Vec2::new(1e-3, 0.0)).norm() < 20.0);
    }

    #[test]
    fn near_origin_asymptotic() {
        let e = ev();
        for i in 0..200 {
            let r = 1e-3 * 10f64.powf(i as f64 / 199.0);
            let a = 0.37 * i as f64;
            let x = Vec2::new(r * a.cos(), r * a.sin());
            let ratio = r * e.velocity(x).norm() * TWO_PI;
            assert!((ratio - 1.0).abs() <= 0.05, "r={r} ratio={ratio}");
        }
    }

    #[test]
    fn mean_zero_on_grid() {
        let e = ev();
        let n = 512;
        let mut s = Vec2::ZERO;
        for i in 0..n {
            for j in 0..n {
                let x = Vec2::new(i as f64 / n as f64 - 0.5, j as f64 / n as f64 - 0.5);
                s += e.velocity(x);
            }
        }
        let mean = s * (1.0 / (n * n) as f64);
        assert!(mean.norm() <= 1e-4);
    }

    #[test]
    fn green_and_kernel_are_consistent() {
        let e = ev();
        let h = 1e-5;
        for &(a, b) in &[(0.1, 0.05), (0.3, -0.2), (-0.45, 0.4), (0.0, 0.2), (0.05, -0.03)] {
            let x = Vec2::new(a, b);
            let d1 = (e.green(Vec2::new(a + h, b)) - e.green(Vec2::new(a - h, b))) / (2.0 * h);
            let d2 = (e.green(Vec2::new(a, b + h)) - e.green(Vec2::new(a, b - h))) / (2.0 * h);
            let k = e.velocity(x);
            assert_abs_diff_eq!(k.x, d2, epsilon = 1e-4);
            assert_abs_diff_eq!(k.y, -d1, epsilon = 1e-4);
        }
    }

    #[test]
    fn drift_single_and_pair() {
        let e = ev();
        assert_eq!(pairwise_drift(e, &[pt(0.1, 0.2)]), vec![Vec2::ZERO]);
        let v = pairwise_drift(e, &[pt(0.1, 0.0), pt(-0.1, 0.0)]);
        let k = e.velocity(Vec2::new(0.2, 0.0)) * 0.5;
        assert_abs_diff_eq!(v[0].x, k.x, epsilon = 1e-15);
        assert_abs_diff_eq!(v[0].y, k.y, epsilon = 1e-15);
        assert_eq!(v[0], -v[1]);
    }

    #[test]
    fn drift_square_is_tangential() {
        let e = ev();
        let pts = [pt(0.1, 0.1), pt(-0.1, 0.1), pt(-0.1, -0.1), pt(0.1, -0.1)];
        let v = pairwise_drift(e, &pts);
        let m0 = v[0].norm();
        for (p, vi) in pts.iter().zip(&v) {
            assert_abs_diff_eq!(p.as_vec().dot(*vi), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(vi.norm(), m0, epsilon = 1e-12);
        }
        // direct double sum
        for (i, p) in pts.iter().enumerate() {
            let mut s = Vec2::ZERO;
            for (j, q) in pts.iter().enumerate() {
                if i != j {
                    s += e.velocity(torus_diff(*p, *q));
                }
            }
            assert_abs_diff_eq!(v[i].x, s.x / 4.0, epsilon = 1e-15);
            assert_abs_diff_eq!(v[i].y, s.y / 4.0, epsilon = 1e-15);
        }
    }

    fn cloud(seed: u64, n: usize) -> Vec<TorusPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| pt(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
            .collect()
    }

    #[test]
    fn drift_momentum_vanishes_exactly() {
        let pts = cloud(7, 300);
        let (sums, _) = pair_sums(ev(), &pts);
        let tot = sums.iter().fold([0i128; 2], |a, s| [a[0] + s[0], a[1] + s[1]]);
        assert_eq!(tot, [0, 0]);
    }

    #[test]
    fn drift_is_thread_count_independent() {
        let pts = cloud(11, 257);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| pairwise_drift_with_min_distance(ev(), &pts));
        let b = three.install(|| pairwise_drift_with_min_distance(ev(), &pts));
        assert_eq!(a, b);
    }

    #[test]
    fn min_distance_is_reported() {
        let pts = [pt(0.0, 0.0), pt(0.3, 0.0), pt(0.3, 0.004)];
        let (_, d) = pairwise_drift_with_min_distance(ev(), &pts);
        assert_abs_diff_eq!(d, 0.004, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn evaluator_is_odd(a in -0.5f64..0.5, b in -0.5f64..0.5) {
            let x = Vec2::new(a, b);
            prop_assert_eq!(ev().velocity(-x), -ev().velocity(x));
            prop_assert_eq!(ev().green(-x), ev().green(x));
        }

        #[test]
        fn evaluator_is_periodic(a in -0.5f64..0.5, b in -0.5f64..0.5) {
            let x = Vec2::new(a, b);
            let y = Vec2::new(a + 1.0, b - 2.0);
            let (kx, ky) = (ev().velocity(x), ev().velocity(y));
            prop_assert!((kx - ky).norm() <= 1e-9 * (1.0 + kx.norm()));
        }

        #[test]
        fn evaluator_is_divergence_free(a in -0.5f64..0.5, b in -0.5f64..0.5) {
            let x = Vec2::new(a, b);
            // central differences of the 1/|x| singular part lose accuracy near the origin
            prop_assume!(torus_diff(TorusPoint::new(a, b).unwrap(), TorusPoint::ORIGIN).norm() > 0.05);
            let h = 1e-4;
            let e = ev();
            let div = (e.velocity(x + Vec2::new(h, 0.0)).x - e.velocity(x - Vec2::new(h, 0.0)).x
                + e.velocity(x + Vec2::new(0.0, h)).y - e.velocity(x - Vec2::new(0.0, h)).y)
                / (2.0 * h);
            prop_assert!(div.abs() <= 1e-3, "div = {}", div);
        }

        #[test]
        fn permuting_particles_permutes_drift(seed in 0u64..1000, shift in 1usize..20) {
            let pts = cloud(seed, 23);
            let mut perm = pts.clone();
            perm.rotate_left(shift);
            let v = pairwise_drift(ev(), &pts);
            let mut w = pairwise_drift(ev(), &perm);
            w.rotate_right(shift);
            prop_assert_eq!(v, w);
        }
    }
}
