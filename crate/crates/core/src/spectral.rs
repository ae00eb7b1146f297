//! Pseudo-spectral solver for `d_t xi + (K * xi).grad xi = nu Lap xi` on the torus.
//!
//! Fields live on the `n x n` grid `x_ij = (-1/2 + i/n, -1/2 + j/n)` and are
//! stored as Fourier coefficients `xi_hat(k)` of `xi = sum_k xi_hat(k) exp(2 pi i k.x)`,
//! in FFT index order. Products are dealiased with the 2/3 rule and time
//! stepping is integrating-factor (Lawson) RK4.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::Mode;
use crate::density::DensitySpec;
use crate::torus::{TorusPoint, Vec2};

pub const MIN_GRID: usize = 32;
/// Bound on `dt max|u| n`.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid size {0} must be a power of two and at least 32")]
    InvalidGrid(usize),
    #[error("mode {mode} lies outside the dealiased range |k_i| <= {cutoff}")]
    ModeOutOfRange { mode: Mode, cutoff: i32 },
    #[error("invalid solver setting: {0}")]
    InvalidConfig(String),
    #[error("CFL violated: dt * max|u| * n = {courant} > 0.5 (max|u| = {max_speed})")]
    Cfl { max_speed: f64, courant: f64 },
    #[error("output time {0} is not a whole number of steps")]
    MisalignedTime(f64),
    #[error("grid data has length {got}, expected {expected}")]
    GridLength { got: usize, expected: usize },
}

fn check_grid(n: usize) -> Result<(), SpectralError> {
    if n < MIN_GRID || !n.is_power_of_two() {
        return Err(SpectralError::InvalidGrid(n));
    }
    Ok(())
}

/// Largest retained `|k_i|` under the 2/3 rule.
pub fn dealias_cutoff(n: usize) -> i32 {
    ((n - 1) / 3) as i32
}

/// Signed wavenumber of FFT index `a`.
#[inline]
fn wavenumber(a: usize, n: usize) -> i32 {
    if a <= n / 2 {
        a as i32
    } else {
        a as i32 - n as i32
    }
}

/// `phi_hat(k) = -i xi_hat(k) / (2 pi |k|^2)`, rounded to a mantissa short
/// enough that `k_i phi_hat` is exact for every retained `k`. Then `k2 phi` and
/// `-k1 phi` are exact, `k1 u1` and `k2 u2` round the same real number of
/// opposite sign, and `k.u_hat` vanishes in floating point.
#[inline]
fn stream_coefficient(z: Complex64, m2: f64, spare_bits: u32) -> Complex64 {
    let phi = z * Complex64::new(0.0, -1.0 / (2.0 * PI * m2));
    Complex64::new(shorten(phi.re, spare_bits), shorten(phi.im, spare_bits))
}

/// Round `x` to `52 - bits` explicit mantissa bits.
#[inline]
fn shorten(x: f64, bits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let b = x.to_bits();
    let half = 1u64 << (bits - 1);
    f64::from_bits((b + half) & !((1u64 << bits) - 1))
}

/// Bits needed for `|k_i| <= dealias_cutoff(n)`.
fn spare_bits(n: usize) -> u32 {
    u32::BITS - (dealias_cutoff(n) as u32).leading_zeros()
}

#[inline]
fn index_of(k: i32, n: usize) -> usize {
    k.rem_euclid(n as i32) as usize
}

/// Vorticity on the torus as Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVorticity {
    n: usize,
    coeffs: Vec<Complex64>,
    time: f64,
}

impl SpectralVorticity {
    /// Field with the given coefficient function on the dealiased range.
    /// Only `k` in the upper half-lattice and `k = 0` are queried; the rest is
    /// filled by conjugate symmetry.
    pub fn from_modes<F>(n: usize, mut coefficient: F) -> Result<Self, SpectralError>
    where
        F: FnMut(Mode) -> Complex64,
    {
        check_grid(n)?;
        let c = dealias_cutoff(n);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n * n];
        for k1 in 0..=c {
            for k2 in -c..=c {
                let k = Mode::new(k1, k2);
                if !(k.is_zero() || k.is_upper()) {
                    continue;
                }
                let mut z = coefficient(k);
                if k.is_zero() {
                    z.im = 0.0;
                }
                coeffs[index_of(k1, n) * n + index_of(k2, n)] = z;
                coeffs[index_of(-k1, n) * n + index_of(-k2, n)] = z.conj();
            }
        }
        Ok(SpectralVorticity { n, coeffs, time: 0.0 })
    }

    /// Field sampled on the grid, `values[i * n + j] = xi(x_ij)`. Modes beyond
    /// the dealiased range are dropped.
    pub fn from_grid(n: usize, values: &[f64]) -> Result<Self, SpectralError> {
        check_grid(n)?;
        if values.len() != n * n {
            return Err(SpectralError::GridLength { got: values.len(), expected: n * n });
        }
        let mut fft = Fft2::new(n);
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.to_spectral(&mut data);
        dealias(&mut data, n);
        symmetrize(&mut data, n);
        Ok(SpectralVorticity { n, coeffs: data, time: 0.0 })
    }

    /// Unit-mass Gaussian of standard deviation `width` centred at `center`,
    /// periodized: `xi_hat(k) = exp(-2 pi^2 width^2 |k|^2 - 2 pi i k.center)`.
    pub fn gaussian_vortex(n: usize, center: TorusPoint, width: f64) -> Result<Self, SpectralError> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(SpectralError::InvalidConfig(format!("vortex width {width}")));
        }
        Self::from_modes(n, |k| {
            let amp = (-2.0 * PI * PI * width * width * k.norm2() as f64).exp();
            Complex64::from_polar(amp, -k.phase(center))
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `xi_hat(k)`, or `None` outside the dealiased range.
    pub fn coefficient(&self, k: Mode) -> Option<Complex64> {
        let c = dealias_cutoff(self.n);
        if k.k1.abs() > c || k.k2.abs() > c {
            return None;
        }
        Some(self.coeffs[index_of(k.k1, self.n) * self.n + index_of(k.k2, self.n)])
    }

    /// `xi_hat(0)`, the total vorticity.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// `||xi||^2_{L^2} = sum_k |xi_hat(k)|^2`.
    pub fn enstrophy(&self) -> f64 {
        crate::sum::neumaier_sum(self.coeffs.iter().map(|z| z.norm_sqr()))
    }

    /// Whether `xi_hat(-k) = conj(xi_hat(k))` holds bitwise.
    pub fn is_conjugate_symmetric(&self) -> bool {
        let n = self.n;
        (0..n).all(|a| {
            (0..n).all(|b| {
                let p = ((n - a) % n) * n + (n - b) % n;
                self.coeffs[a * n + b] == self.coeffs[p].conj()
            })
        })
    }

    /// Grid values `xi(x_ij)` in row-major order.
    pub fn grid_values(&self) -> Vec<f64> {
        let mut fft = Fft2::new(self.n);
        let mut data = self.coeffs.clone();
        fft.to_physical(&mut data);
        data.into_iter().map(|z| z.re).collect()
    }

    /// Grid point `x_ij`.
    pub fn grid_point(&self, i: usize, j: usize) -> TorusPoint {
        grid_point(self.n, i, j)
    }
}

/// `x_ij = (-1/2 + i/n, -1/2 + j/n)`.
pub fn grid_point(n: usize, i: usize, j: usize) -> TorusPoint {
    TorusPoint::new(i as f64 / n as f64 - 0.5, j as f64 / n as f64 - 0.5).expect("finite")
}

/// Place the finitely many modes of `f0` on an `n x n` grid; `xi_hat(0) = 1`.
pub fn init_field(f0: &DensitySpec, n: usize) -> Result<SpectralVorticity, SpectralError> {
    check_grid(n)?;
    let c = dealias_cutoff(n);
    for &(k, _) in f0.coefficients() {
        if k.k1.abs() > c || k.k2.abs() > c {
            return Err(SpectralError::ModeOutOfRange { mode: k, cutoff: c });
        }
    }
    SpectralVorticity::from_modes(n, |k| {
        if k.is_zero() {
            return Complex64::new(1.0, 0.0);
        }
        // with z = exp(2 pi i k.x): e_k = (z + conj z)/sqrt2, e_{-k} = i (z - conj z)/sqrt2
        let cos = f0.coefficient(k);
        let sin = f0.coefficient(k.negate());
        Complex64::new(cos, sin) / SQRT_2
    })
}

/// `<xi, e_k>`: `sqrt2 Re xi_hat(k)` for upper `k`, `-sqrt2 Im xi_hat(k)` for
/// lower `k`, `xi_hat(0)` for `k = 0`.
pub fn weak_pairing(field: &SpectralVorticity, k: Mode) -> Result<f64, SpectralError> {
    let z = field.coefficient(k).ok_or(SpectralError::ModeOutOfRange {
        mode: k,
        cutoff: dealias_cutoff(field.n),
    })?;
    Ok(if k.is_zero() {
        z.re
    } else if k.is_upper() {
        SQRT_2 * z.re
    } else {
        -SQRT_2 * z.im
    })
}

/// Fourier coefficients of `u = K * xi`, `u_hat(k) = k_perp phi_hat(k)` with
/// `phi_hat(k) = -i xi_hat(k) / (2 pi |k|^2)` and `k_perp = (k2, -k1)`.
#[derive(Debug, Clone)]
pub struct SpectralVelocity {
    n: usize,
    u1: Vec<Complex64>,
    u2: Vec<Complex64>,
}

impl SpectralVelocity {
    pub fn new(field: &SpectralVorticity) -> Self {
        let n = field.n;
        let mut u1 = vec![Complex64::new(0.0, 0.0); n * n];
        let mut u2 = u1.clone();
        let bits = spare_bits(n);
        for a in 0..n {
            let k1 = wavenumber(a, n);
            for b in 0..n {
                let k2 = wavenumber(b, n);
                let idx = a * n + b;
                let m2 = (k1 as i64 * k1 as i64 + k2 as i64 * k2 as i64) as f64;
                if m2 == 0.0 {
                    continue;
                }
                let phi = stream_coefficient(field.coeffs[idx], m2, bits);
                u1[idx] = phi * k2 as f64;
                u2[idx] = phi * -(k1 as f64);
            }
        }
        SpectralVelocity { n, u1, u2 }
    }

    /// `max_k |k . u_hat(k)|`.
    pub fn divergence_residual(&self) -> f64 {
        let n = self.n;
        let mut m: f64 = 0.0;
        for a in 0..n {
            let k1 = wavenumber(a, n) as f64;
            for b in 0..n {
                let k2 = wavenumber(b, n) as f64;
                let idx = a * n + b;
                m = m.max((self.u1[idx] * k1 + self.u2[idx] * k2).norm());
            }
        }
        m
    }

    /// Velocity at an arbitrary point by direct summation of the series.
    pub fn at(&self, x: TorusPoint) -> Vec2 {
        let n = self.n;
        let (mut v1, mut v2) = (0.0, 0.0);
        for a in 0..n {
            let k1 = wavenumber(a, n);
            for b in 0..n {
                let idx = a * n + b;
                if self.u1[idx] == Complex64::new(0.0, 0.0) && self.u2[idx] == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let e = Complex64::from_polar(1.0, Mode::new(k1, wavenumber(b, n)).phase(x));
                v1 += (self.u1[idx] * e).re;
                v2 += (self.u2[idx] * e).re;
            }
        }
        Vec2::new(v1, v2)
    }
}

/// Velocity `u = K * xi` on the grid.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    pub n: usize,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl VelocityGrid {
    pub fn at(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.u1[i * self.n + j], self.u2[i * self.n + j])
    }

    pub fn max_speed(&self) -> f64 {
        self.u1
            .iter()
            .zip(&self.u2)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }
}

pub fn velocity_from_vorticity(field: &SpectralVorticity) -> VelocityGrid {
    let vel = SpectralVelocity::new(field);
    let mut fft = Fft2::new(field.n);
    let (mut u1, mut u2) = (vel.u1, vel.u2);
    fft.to_physical(&mut u1);
    fft.to_physical(&mut u2);
    VelocityGrid {
        n: field.n,
        u1: u1.into_iter().map(|z| z.re).collect(),
        u2: u2.into_iter().map(|z| z.re).collect(),
    }
}

fn default_n() -> usize {
    128
}
fn default_dt() -> f64 {
    1e-4
}
fn default_nu() -> f64 {
    0.05
}

/// Grid, step and viscosity. Dealiasing (2/3) and the integrator (Lawson RK4)
/// are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { n: default_n(), dt: default_dt(), nu: default_nu() }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SpectralError> {
        check_grid(self.n)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SpectralError::InvalidConfig(format!("dt = {}", self.dt)));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(SpectralError::InvalidConfig(format!("nu = {}", self.nu)));
        }
        Ok(())
    }
}

/// Reusable stepper holding FFT plans and integrating factors.
pub struct NsSolver {
    config: SolverConfig,
    fft: Fft2,
    /// `exp(-4 pi^2 nu |k|^2 dt / 2)`
    half: Vec<f64>,
    /// `exp(-4 pi^2 nu |k|^2 dt)`
    full: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    bits: u32,
}

impl NsSolver {
    pub fn new(config: SolverConfig) -> Result<Self, SpectralError> {
        config.validate()?;
        let n = config.n;
        let mut half = vec![0.0; n * n];
        let mut full = vec![0.0; n * n];
        let mut k1 = vec![0.0; n * n];
        let mut k2 = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let idx = a * n + b;
                let (p, q) = (wavenumber(a, n) as f64, wavenumber(b, n) as f64);
                let rate = -4.0 * PI * PI * config.nu * (p * p + q * q);
                half[idx] = (rate * config.dt / 2.0).exp();
                full[idx] = (rate * config.dt).exp();
                k1[idx] = p;
                k2[idx] = q;
            }
        }
        Ok(NsSolver { config, fft: Fft2::new(n), half, full, k1, k2, bits: spare_bits(n) })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// `-(u.grad xi)_hat`, dealiased, mean-free and conjugate symmetric,
    /// together with `max|u|` on the grid.
    fn nonlinear(&mut self, xi: &[Complex64]) -> (Vec<Complex64>, f64) {
        let n = self.config.n;
        let zero = Complex64::new(0.0, 0.0);
        let mut u1 = vec![zero; n * n];
        let mut u2 = vec![zero; n * n];
        let mut g1 = vec![zero; n * n];
        let mut g2 = vec![zero; n * n];
        for idx in 0..n * n {
            let (p, q) = (self.k1[idx], self.k2[idx]);
            let m2 = p * p + q * q;
            if m2 == 0.0 {
                continue;
            }
            let z = xi[idx];
            let phi = stream_coefficient(z, m2, self.bits);
            u1[idx] = phi * q;
            u2[idx] = phi * -p;
            let dz = z * Complex64::new(0.0, 2.0 * PI);
            g1[idx] = dz * p;
            g2[idx] = dz * q;
        }
        for buf in [&mut u1, &mut u2, &mut g1, &mut g2] {
            self.fft.to_physical(buf);
        }
        let mut max_speed: f64 = 0.0;
        let mut prod = vec![zero; n * n];
        for idx in 0..n * n {
            let (a, b) = (u1[idx].re, u2[idx].re);
            max_speed = max_speed.max(a.hypot(b));
            prod[idx] = Complex64::new(-(a * g1[idx].re + b * g2[idx].re), 0.0);
        }
        self.fft.to_spectral(&mut prod);
        dealias(&mut prod, n);
        prod[0] = zero;
        symmetrize(&mut prod, n);
        (prod, max_speed)
    }

    fn check_cfl(&self, max_speed: f64) -> Result<(), SpectralError> {
        let courant = self.config.dt * max_speed * self.config.n as f64;
        if courant > CFL_LIMIT {
            return Err(SpectralError::Cfl { max_speed, courant });
        }
        Ok(())
    }

    /// One integrating-factor RK4 step. The field is left unchanged on error.
    pub fn step(&mut self, field: &mut SpectralVorticity) -> Result<(), SpectralError> {
        if field.n != self.config.n {
            return Err(SpectralError::InvalidConfig(format!(
                "field grid {} differs from solver grid {}",
                field.n, self.config.n
            )));
        }
        let h = self.config.dt;
        let v = &field.coeffs;
        let (a, speed) = self.nonlinear(v);
        self.check_cfl(speed)?;
        let len = v.len();
        let mut tmp = vec![Complex64::new(0.0, 0.0); len];
        for i in 0..len {
            tmp[i] = (v[i] + a[i] * (h / 2.0)) * self.half[i];
        }
        let (b, _) = self.nonlinear(&tmp);
        for i in 0..len {
            tmp[i] = v[i] * self.half[i] + b[i] * (h / 2.0);
        }
        let (c, _) = self.nonlinear(&tmp);
        for i in 0..len {
            tmp[i] = v[i] * self.full[i] + c[i] * (h * self.half[i]);
        }
        let (d, _) = self.nonlinear(&tmp);
        let mut next = vec![Complex64::new(0.0, 0.0); len];
        for i in 0..len {
            let incr = a[i] * self.full[i] + (b[i] + c[i]) * (2.0 * self.half[i]) + d[i];
            next[i] = v[i] * self.full[i] + incr * (h / 6.0);
        }
        next[0] = v[0];
        field.coeffs = next;
        field.time += h;
        Ok(())
    }
}

/// Single step with a freshly built solver.
pub fn ns_step(field: &SpectralVorticity, config: &SolverConfig) -> Result<SpectralVorticity, SpectralError> {
    let mut solver = NsSolver::new(*config)?;
    let mut out = field.clone();
    solver.step(&mut out)?;
    Ok(out)
}

/// Weak pairings at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeRecord {
    pub time: f64,
    pub values: Vec<f64>,
}

/// Step count for output time `t`.
pub fn steps_for_time(t: f64, dt: f64) -> Result<u64, SpectralError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SpectralError::MisalignedTime(t));
    }
    let s = (t / dt).round();
    if (s * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(SpectralError::MisalignedTime(t));
    }
    Ok(s as u64)
}

/// Evolve `f0` and record `<xi_t, e_k>` for every `k` in `modes` at each of
/// the non-decreasing output `times`.
pub fn solve(
    f0: &DensitySpec,
    config: &SolverConfig,
    times: &[f64],
    modes: &[Mode],
) -> Result<Vec<ModeRecord>, SpectralError> {
    let mut solver = NsSolver::new(*config)?;
    let mut field = init_field(f0, config.n)?;
    let c = dealias_cutoff(config.n);
    if let Some(&k) = modes.iter().find(|k| k.k1.abs() > c || k.k2.abs() > c) {
        return Err(SpectralError::ModeOutOfRange { mode: k, cutoff: c });
    }
    let mut done = 0u64;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let target = steps_for_time(t, config.dt)?;
        if target < done {
            return Err(SpectralError::InvalidConfig("output times must be non-decreasing".into()));
        }
        while done < target {
            solver.step(&mut field)?;
            done += 1;
        }
        let values = modes
            .iter()
            .map(|&k| weak_pairing(&field, k))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(ModeRecord { time: done as f64 * config.dt, values });
    }
    Ok(out)
}

/// Zero every mode with `|k_i|` above the 2/3 cutoff.
fn dealias(data: &mut [Complex64], n: usize) {
    let c = dealias_cutoff(n);
    for a in 0..n {
        let outside_row = wavenumber(a, n).abs() > c;
        for b in 0..n {
            if outside_row || wavenumber(b, n).abs() > c {
                data[a * n + b] = Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// Copy each upper-index coefficient onto its conjugate partner.
fn symmetrize(data: &mut [Complex64], n: usize) {
    for a in 0..n {
        for b in 0..n {
            let idx = a * n + b;
            let p = ((n - a) % n) * n + (n - b) % n;
            if p == idx {
                data[idx].im = 0.0;
            } else if idx < p {
                data[p] = data[idx].conj();
            }
        }
    }
}

/// 2D FFT on square grids with the `-1/2` grid offset folded in.
struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Fft2 { n, forward, inverse, scratch: vec![Complex64::new(0.0, 0.0); len] }
    }

    fn run(&mut self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        plan.process_with_scratch(data, &mut self.scratch);
        transpose(data, self.n);
        plan.process_with_scratch(data, &mut self.scratch);
        transpose(data, self.n);
    }

    /// Coefficients to grid values. With `x_ij = -1/2 + (i, j)/n` the phase
    /// `exp(2 pi i k.x_ij)` carries a factor `(-1)^(k1 + k2)`.
    fn to_physical(&mut self, data: &mut [Complex64]) {
        flip_signs(data, self.n);
        self.run(data, true);
    }

    fn to_spectral(&mut self, data: &mut [Complex64]) {
        self.run(data, false);
        let scale = 1.0 / (self.n * self.n) as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
        flip_signs(data, self.n);
    }
}

fn flip_signs(data: &mut [Complex64], n: usize) {
    for a in 0..n {
        for b in 0..n {
            if (a + b) % 2 == 1 {
                data[a * n + b] = -data[a * n + b];
            }
        }
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for a in 0..n {
        for b in a + 1..n {
            data.swap(a * n + b, b * n + a);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel_evaluator, KernelEvaluator};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn single_mode(k: Mode, a: f64) -> DensitySpec {
        DensitySpec::new(vec![(k, a)], 0.0).unwrap()
    }

    fn mixed() -> DensitySpec {
        DensitySpec::new(
            vec![(Mode::new(1, 0), 0.2), (Mode::new(0, -1), -0.2), (Mode::new(2, 1), 0.15), (Mode::new(-1, 3), 0.1)],
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn init_examples() {
        let u = init_field(&DensitySpec::uniform(), 32).unwrap();
        assert_eq!(u.mean(), 1.0);
        assert_eq!(u.coeffs.iter().filter(|z| z.norm() != 0.0).count(), 1);

        let f = single_mode(Mode::new(1, 0), 0.3);
        let s = init_field(&f, 32).unwrap();
        assert_eq!(s.coeffs.iter().filter(|z| z.norm() != 0.0).count(), 3);
        assert_eq!(weak_pairing(&s, Mode::new(1, 0)).unwrap(), 0.3);
        assert_eq!(weak_pairing(&s, Mode::new(-1, 0)).unwrap(), 0.0);

        let m = mixed();
        let s = init_field(&m, 64).unwrap();
        for k in crate::basis::modes_in_disk(4) {
            assert_abs_diff_eq!(weak_pairing(&s, k).unwrap(), m.coefficient(k), epsilon = 1e-15);
        }
        assert_eq!(weak_pairing(&s, Mode::ZERO).unwrap(), 1.0);
    }

    #[test]
    fn init_errors() {
        assert_eq!(init_field(&DensitySpec::uniform(), 16), Err(SpectralError::InvalidGrid(16)));
        assert_eq!(init_field(&DensitySpec::uniform(), 48), Err(SpectralError::InvalidGrid(48)));
        let f = single_mode(Mode::new(11, 0), 0.1);
        assert_eq!(
            init_field(&f, 32),
            Err(SpectralError::ModeOutOfRange { mode: Mode::new(11, 0), cutoff: 10 })
        );
        let s = init_field(&DensitySpec::uniform(), 32).unwrap();
        assert!(weak_pairing(&s, Mode::new(0, 12)).is_err());
    }

    #[test]
    fn grid_values_match_density() {
        let m = mixed();
        let s = init_field(&m, 32).unwrap();
        let g = s.grid_values();
        for (i, j) in [(0, 0), (3, 17), (31, 5), (16, 16)] {
            assert_abs_diff_eq!(g[i * 32 + j], m.value(s.grid_point(i, j)), epsilon = 1e-13);
        }
        let back = SpectralVorticity::from_grid(32, &g).unwrap();
        for k in crate::basis::modes_in_disk(4) {
            assert_abs_diff_eq!(weak_pairing(&back, k).unwrap(), m.coefficient(k), epsilon = 1e-14);
        }
    }

    #[test]
    fn shortened_mantissa() {
        assert_eq!(shorten(1.0, 6), 1.0);
        let x = 0.1f64;
        let y = shorten(x, 6);
        assert_eq!(y.to_bits() & 0x3f, 0);
        assert!((y - x).abs() <= 32.0 * f64::EPSILON * x);
        assert_eq!(spare_bits(128), 6);
        assert_eq!(spare_bits(32), 4);
    }

    #[test]
    fn constant_vorticity_has_no_velocity() {
        let s = init_field(&DensitySpec::uniform(), 32).unwrap();
        assert_eq!(velocity_from_vorticity(&s).max_speed(), 0.0);
    }

    #[test]
    fn single_mode_is_a_steady_state_of_the_nonlinearity() {
        // psi is proportional to xi, so u.grad xi vanishes
        let s = init_field(&single_mode(Mode::new(2, 1), 0.3), 32).unwrap();
        let mut solver = NsSolver::new(SolverConfig { n: 32, dt: 1e-3, nu: 0.0 }).unwrap();
        let (nl, speed) = solver.nonlinear(&s.coeffs);
        assert!(speed > 0.0);
        assert!(nl.iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn velocity_is_divergence_free() {
        let s = init_field(&mixed(), 64).unwrap();
        assert_eq!(SpectralVelocity::new(&s).divergence_residual(), 0.0);
        let b = SpectralVorticity::gaussian_vortex(64, TorusPoint::new(0.1, -0.2).unwrap(), 0.05).unwrap();
        assert_eq!(SpectralVelocity::new(&b).divergence_residual(), 0.0);
    }

    #[test]
    fn velocity_matches_mode_formula() {
        // xi = 1 + a e_k with k upper: u = a sqrt2 k_perp sin(2 pi k.x) / (2 pi |k|^2)
        let k = Mode::new(1, 2);
        let s = init_field(&single_mode(k, 0.3), 32).unwrap();
        let v = velocity_from_vorticity(&s);
        for (i, j) in [(1, 2), (7, 30), (20, 11)] {
            let x = s.grid_point(i, j);
            let c = 0.3 * SQRT_2 * k.phase(x).sin() / (2.0 * PI * 5.0);
            let exp = k.perp() * c;
            let got = v.at(i, j);
            assert_abs_diff_eq!(got.x, exp.x, epsilon = 1e-15);
            assert_abs_diff_eq!(got.y, exp.y, epsilon = 1e-15);
        }
    }

    fn evaluator() -> &'static KernelEvaluator {
        static EV: OnceLock<KernelEvaluator> = OnceLock::new();
        EV.get_or_init(|| build_kernel_evaluator(256, 512).unwrap())
    }

    #[test]
    fn mollified_vortex_velocity_matches_kernel() {
        let n = 256;
        let blob = SpectralVorticity::gaussian_vortex(n, TorusPoint::ORIGIN, 0.01).unwrap();
        let v = velocity_from_vorticity(&blob);
        let center = n / 2;
        let mut checked = 0;
        for (di, dj) in [(26, 0), (0, 40), (-30, 30), (64, -13), (-100, 77), (128 - 1, 128 - 1), (51, 90)] {
            let (i, j) = ((center as i64 + di) as usize % n, (center as i64 + dj) as usize % n);
            let x = blob.grid_point(i, j);
            assert!(x.as_vec().norm() >= 0.1);
            let k = evaluator().velocity(x.as_vec());
            let u = v.at(i, j);
            assert!((u - k).norm() <= 0.01 * k.norm(), "{x:?}: {u:?} vs {k:?}");
            checked += 1;
        }
        assert_eq!(checked, 7);
    }

    #[test]
    fn single_mode_decays_exactly() {
        let cfg = SolverConfig { n: 64, dt: 1e-4, nu: 0.01 };
        let out = solve(&single_mode(Mode::new(1, 0), 0.3), &cfg, &[0.1, 1.0], &[Mode::new(1, 0)]).unwrap();
        let exact = |t: f64| 0.3 * (-4.0 * PI * PI * 0.01 * t).exp();
        assert!((out[0].values[0] / exact(0.1) - 1.0).abs() <= 1e-6);
        assert_abs_diff_eq!(out[1].values[0] / 0.3, 0.6738254512314336, epsilon = 1e-9);
        assert_eq!(out[1].time, 10_000.0 * 1e-4);
    }

    #[test]
    fn inviscid_enstrophy_is_conserved() {
        let cfg = SolverConfig { n: 32, dt: 1e-3, nu: 0.0 };
        let mut solver = NsSolver::new(cfg).unwrap();
        let mut s = init_field(&mixed(), 32).unwrap();
        let e0 = s.enstrophy();
        let m0 = s.coeffs[0];
        let mut moved = 0.0f64;
        let start = s.clone();
        for _ in 0..100 {
            solver.step(&mut s).unwrap();
            assert_eq!(s.coeffs[0], m0);
            assert!(s.is_conjugate_symmetric());
        }
        for (a, b) in s.coeffs.iter().zip(&start.coeffs) {
            moved = moved.max((a - b).norm());
        }
        assert!(moved > 1e-4, "nonlinear dynamics inactive");
        assert!(((s.enstrophy() - e0) / e0).abs() <= 1e-8);
    }

    #[test]
    fn refinement_leaves_low_modes_unchanged() {
        let times = [0.05];
        let modes = crate::basis::modes_in_disk(3);
        let a = solve(&mixed(), &SolverConfig { n: 64, dt: 1e-3, nu: 0.05 }, &times, &modes).unwrap();
        let b = solve(&mixed(), &SolverConfig { n: 128, dt: 1e-3, nu: 0.05 }, &times, &modes).unwrap();
        for (x, y) in a[0].values.iter().zip(&b[0].values) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn fourth_order_in_time() {
        let modes = crate::basis::modes_in_disk(3);
        let run = |dt: f64| solve(&mixed(), &SolverConfig { n: 32, dt, nu: 0.05 }, &[0.2], &modes).unwrap().remove(0);
        let (a, b, c) = (run(0.02), run(0.01), run(0.005));
        let diff = |x: &ModeRecord, y: &ModeRecord| {
            x.values.iter().zip(&y.values).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
        };
        let ratio = diff(&a, &b) / diff(&b, &c);
        assert!(ratio > 10.0 && ratio < 16.0 * 1.5, "ratio {ratio}");
    }

    #[test]
    fn cfl_violation_is_reported() {
        let blob = SpectralVorticity::gaussian_vortex(64, TorusPoint::ORIGIN, 0.05).unwrap();
        let mut solver = NsSolver::new(SolverConfig { n: 64, dt: 0.5, nu: 0.0 }).unwrap();
        let mut f = blob.clone();
        match solver.step(&mut f) {
            Err(SpectralError::Cfl { max_speed, courant }) => {
                assert!(max_speed > 0.0);
                assert_abs_diff_eq!(courant, 0.5 * max_speed * 64.0, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(f, blob);
    }

    #[test]
    fn schedule_checks() {
        assert_eq!(steps_for_time(0.1, 1e-4), Ok(1000));
        assert!(steps_for_time(0.10005, 1e-4).is_err());
        let cfg = SolverConfig { n: 32, dt: 1e-3, nu: 0.01 };
        assert!(solve(&mixed(), &cfg, &[0.2, 0.1], &[]).is_err());
        assert!(solve(&mixed(), &cfg, &[0.1], &[Mode::new(20, 0)]).is_err());
        let bad = SolverConfig { n: 32, dt: -1.0, nu: 0.01 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn solve_is_deterministic() {
        let cfg = SolverConfig { n: 32, dt: 1e-3, nu: 0.05 };
        let modes = crate::basis::modes_in_disk(3);
        let a = solve(&mixed(), &cfg, &[0.0, 0.05, 0.1], &modes).unwrap();
        let b = solve(&mixed(), &cfg, &[0.0, 0.05, 0.1], &modes).unwrap();
        assert_eq!(a, b);
        let absent = modes.iter().position(|&k| k == Mode::new(2, 2)).unwrap();
        assert_eq!(a[0].values[absent], 0.0);
        assert!(a[2].values[absent] != 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn steps_preserve_mean_and_symmetry(
            a in -0.3f64..0.3, b in -0.3f64..0.3, c in -0.2f64..0.2,
        ) {
            let f = DensitySpec::new(
                vec![(Mode::new(1, 1), a), (Mode::new(-2, 1), b), (Mode::new(0, 3), c)],
                0.0,
            );
            prop_assume!(f.is_ok());
            let f = f.unwrap();
            let mut s = init_field(&f, 32).unwrap();
            let mut solver = NsSolver::new(SolverConfig { n: 32, dt: 1e-3, nu: 0.02 }).unwrap();
            for _ in 0..5 {
                solver.step(&mut s).unwrap();
                prop_assert_eq!(s.mean(), 1.0);
                prop_assert!(s.is_conjugate_symmetric());
                prop_assert_eq!(SpectralVelocity::new(&s).divergence_residual(), 0.0);
            }
        }
    }
}
