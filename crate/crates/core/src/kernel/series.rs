//! Fourier series for the torus Green function and its perpendicular gradient.
//!
//! With `Delta G = delta_0 - 1` and zero mean,
//!
//! ```text
//! G(x) = -(1/4 pi^2) sum_{k != 0} cos(2 pi k.x) / |k|^2
//! K(x) = grad_perp G = (1/2 pi) sum_{k != 0} k_perp sin(2 pi k.x) / |k|^2
//! ```
//!
//! Summing over `k1` in closed form
//! (`sum_n cos(n t)/(n^2 + a^2) = (pi/a) cosh(a(pi - t))/sinh(pi a)`, `0 <= t <= 2 pi`)
//! leaves one sum over rows `m = k2`:
//!
//! ```text
//! G = -(u^2 - |u| + 1/6)/2 - (1/2 pi) sum_m cos(2 pi m v) C_m / m
//! C_m = cosh(pi m (1 - 2|u|)) / sinh(pi m)
//! ```
//!
//! with `(u, v) = (x1, x2)`. The row terms decay like `exp(-2 pi m |u|)`.
//! [`green_rows`] and [`kernel_rows`] sum those rows directly (taking `u` to be
//! the larger coordinate), which is the reference route.
//!
//! The table builder instead uses [`remainders`]: the `exp(-2 pi m |u|)` part
//! of every row is summed in closed form (a geometric / logarithmic series in
//! `z = exp(-w)`, `w = 2 pi (|u| - i v)`), which also isolates the
//! `(1/2 pi) log|x|` singularity. What is left decays like `exp(-pi m)`
//! uniformly, including at the origin.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::torus::Vec2;

const TWO_PI: f64 = 2.0 * PI;

/// Row terms below this relative size are dropped.
const ROW_TOL: f64 = 1e-20;

/// `(C_m, S_m)` with `S_m = sinh(pi m (1 - 2a)) / sinh(pi m)`, for `0 <= a <= 1`.
#[inline]
fn row_weights(m: f64, a: f64) -> (f64, f64) {
    let near = (-TWO_PI * m * a).exp();
    let far = (-TWO_PI * m * (1.0 - a)).exp();
    let denom = -(-TWO_PI * m).exp_m1();
    ((near + far) / denom, (near - far) / denom)
}

/// `g(u, v)` and its partials `(d_u g, d_v g)`, summed over `rows` rows.
fn rows_in_u(u: f64, v: f64, rows: usize) -> (f64, f64, f64) {
    let a = u.abs();
    let s = if u < 0.0 { -1.0 } else { 1.0 };
    let mut g_sum = 0.0;
    let mut du_sum = 0.0;
    let mut dv_sum = 0.0;
    for m in 1..=rows {
        let mf = m as f64;
        let (c, sm) = row_weights(mf, a);
        let (sin_v, cos_v) = (TWO_PI * mf * v).sin_cos();
        g_sum += cos_v * c / mf;
        du_sum += cos_v * sm;
        dv_sum += sin_v * c;
        if c < ROW_TOL * mf {
            break;
        }
    }
    let g = -0.5 * (a * a - a + 1.0 / 6.0) - g_sum / TWO_PI;
    let du = -u + 0.5 * s + s * du_sum;
    (g, du, dv_sum)
}

/// Green function by direct row summation; `x` must not be a lattice point.
pub fn green_rows(x: Vec2, rows: usize) -> f64 {
    if x.x.abs() >= x.y.abs() {
        rows_in_u(x.x, x.y, rows).0
    } else {
        rows_in_u(x.y, x.x, rows).0
    }
}

/// `grad G` by direct row summation.
pub fn green_gradient_rows(x: Vec2, rows: usize) -> Vec2 {
    if x.x.abs() >= x.y.abs() {
        let (_, du, dv) = rows_in_u(x.x, x.y, rows);
        Vec2::new(du, dv)
    } else {
        let (_, du, dv) = rows_in_u(x.y, x.x, rows);
        Vec2::new(dv, du)
    }
}

/// Biot-Savart kernel `K = (d_2 G, -d_1 G)` by direct row summation.
pub fn kernel_rows(x: Vec2, rows: usize) -> Vec2 {
    green_gradient_rows(x, rows).perp()
}

/// Smooth parts at a planar point `x` with `|x1| < 1`:
/// `r = G - (1/2 pi) log|x|` and `R = K - (1/2 pi) x_perp / |x|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Remainders {
    pub green: f64,
    pub kernel: Vec2,
}

/// `B(w) = 1/(e^w - 1) - 1/w`, analytic for `|w| < 2 pi`.
fn bernoulli_tail(w: Complex64) -> Complex64 {
    // B_{2n} / (2n)!
    const C: [f64; 10] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
        1.0 / 74724249600.0,
        -3617.0 / 10670622842880000.0,
        43867.0 / 5109094217170944000.0,
        -174611.0 / 802857662698291200000.0,
    ];
    if w.norm() < 1.0 {
        let w2 = w * w;
        let mut acc = Complex64::new(0.0, 0.0);
        for c in C.iter().rev() {
            acc = acc * w2 + c;
        }
        Complex64::new(-0.5, 0.0) + acc * w
    } else {
        Complex64::new(1.0, 0.0) / expm1(w) - Complex64::new(1.0, 0.0) / w
    }
}

/// `log |(1 - e^{-w}) / w|`, finite at `w = 0`.
fn log_ratio(w: Complex64) -> f64 {
    if w.norm() < 1.0 {
        // (1 - e^{-w})/w = sum_n (-w)^n / (n+1)!
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = term;
        for n in 1..24 {
            term = term * (-w) / (n as f64 + 1.0);
            acc += term;
        }
        acc.norm().ln()
    } else {
        (-expm1(-w) / w).norm().ln()
    }
}

fn expm1(w: Complex64) -> Complex64 {
    let (s, c) = w.im.sin_cos();
    let half = (0.5 * w.im).sin();
    Complex64::new(w.re.exp_m1() * c - 2.0 * half * half, w.re.exp() * s)
}

/// Smooth remainders via the accelerated series, summing at most `rows` rows.
pub fn remainders(x: Vec2, rows: usize) -> Remainders {
    let (u, v) = (x.x, x.y);
    let a = u.abs();
    let s = if u < 0.0 { -1.0 } else { 1.0 };
    let w = Complex64::new(TWO_PI * a, -TWO_PI * v);
    let b = bernoulli_tail(w);

    let mut g_sum = 0.0;
    let mut sin_sum = 0.0;
    let mut cos_sum = 0.0;
    for m in 1..=rows {
        let mf = m as f64;
        let denom = -(-TWO_PI * mf).exp_m1();
        let lo = (-TWO_PI * mf * (1.0 - a)).exp();
        let hi = (-TWO_PI * mf * (1.0 + a)).exp();
        let even = (lo + hi) / denom;
        let odd = (hi - lo) / denom;
        let (sin_v, cos_v) = (TWO_PI * mf * v).sin_cos();
        g_sum += cos_v * even / mf;
        sin_sum += sin_v * even;
        cos_sum += cos_v * odd;
        if even < ROW_TOL {
            break;
        }
    }

    let green = -0.5 * (a * a - a + 1.0 / 6.0) + (log_ratio(w) + TWO_PI.ln()) / TWO_PI
        - g_sum / TWO_PI;
    let k1 = b.im + sin_sum;
    let k2 = u - 0.5 * s - s * (b.re + cos_sum);
    Remainders {
        green,
        kernel: Vec2::new(k1, k2),
    }
}

/// Leading singular part `(1/2 pi) x_perp / |x|^2` of the kernel.
#[inline]
pub fn singular_kernel(x: Vec2) -> Vec2 {
    x.perp() * (1.0 / (TWO_PI * x.norm2()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Independent 30-digit evaluations of the row-summed series (mpmath).
    const G_QUARTER: f64 = -0.028173878266428395652;
    const K2_QUARTER: f64 = -0.50374186017254235308;
    const G_3_2: f64 = 0.015214257994793625638;
    const K_3_2: (f64, f64) = (0.16748188503693828221, -0.22208762875196324075);
    const G_CORNER: f64 = 0.055158900038162898349;
    const R_ORIGIN: f64 = 0.20857779324350138368;

    #[test]
    fn rows_match_high_precision_values() {
        assert_abs_diff_eq!(green_rows(Vec2::new(0.25, 0.0), 2048), G_QUARTER, epsilon = 1e-15);
        let k = kernel_rows(Vec2::new(0.25, 0.0), 2048);
        assert_abs_diff_eq!(k.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(k.y, K2_QUARTER, epsilon = 1e-14);
        assert_abs_diff_eq!(green_rows(Vec2::new(0.3, 0.2), 2048), G_3_2, epsilon = 1e-15);
        assert_abs_diff_eq!(green_rows(Vec2::new(0.2, 0.3), 2048), G_3_2, epsilon = 1e-15);
        let k = kernel_rows(Vec2::new(0.3, 0.2), 2048);
        assert_abs_diff_eq!(k.x, K_3_2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.y, K_3_2.1, epsilon = 1e-14);
        assert_abs_diff_eq!(green_rows(Vec2::new(0.5, 0.5), 2048), G_CORNER, epsilon = 1e-15);
    }

    #[test]
    fn accelerated_and_direct_rows_agree() {
        let pts = [
            (0.25, 0.0),
            (0.3, 0.2),
            (0.01, -0.003),
            (0.5, 0.5),
            (0.5, -0.37),
            (0.0, 0.2),
            (0.13, 0.49),
            (-0.2, 0.1),
            (0.002, 0.0005),
        ];
        for (x1, x2) in pts {
            let x = Vec2::new(x1, x2);
            let rem = remainders(x, 64);
            let g = green_rows(x, 100_000);
            let k = kernel_rows(x, 100_000);
            let g_acc = rem.green + x.norm().ln() / TWO_PI;
            let k_acc = rem.kernel + singular_kernel(x);
            assert_abs_diff_eq!(g_acc, g, epsilon = 1e-12);
            assert_abs_diff_eq!(k_acc.x, k.x, epsilon = 1e-10 * k.norm().max(1.0));
            assert_abs_diff_eq!(k_acc.y, k.y, epsilon = 1e-10 * k.norm().max(1.0));
        }
    }

    #[test]
    fn remainders_at_origin() {
        let r = remainders(Vec2::ZERO, 64);
        assert_abs_diff_eq!(r.green, R_ORIGIN, epsilon = 1e-14);
        assert_eq!(r.kernel.x, 0.0);
        assert_abs_diff_eq!(r.kernel.y, 0.0, epsilon = 1e-16);
        // continuity through the origin
        let near = remainders(Vec2::new(1e-7, -2e-7), 64);
        assert_abs_diff_eq!(near.green, R_ORIGIN, epsilon = 1e-10);
        assert!(near.kernel.norm() < 1e-5);
    }

    #[test]
    fn bernoulli_branches_agree() {
        for w in [Complex64::new(0.999, 0.0), Complex64::new(0.3, -0.94)] {
            let series = bernoulli_tail(w);
            let direct = Complex64::new(1.0, 0.0) / expm1(w) - Complex64::new(1.0, 0.0) / w;
            assert!((series - direct).norm() < 1e-14);
            let lr = (-expm1(-w) / w).norm().ln();
            assert_abs_diff_eq!(log_ratio(w), lr, epsilon = 1e-14);
        }
    }
}
