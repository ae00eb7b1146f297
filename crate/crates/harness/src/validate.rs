//! Self-checks of the kernel, the noise spectra and the reference solver.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vortexmf_core::basis::Mode;
use vortexmf_core::density::DensitySpec;
use vortexmf_core::kernel::{
    build_kernel_evaluator, kernel_rows, validation_points, KernelError, KernelEvaluator, ORACLE_ROWS,
};
use vortexmf_core::noise::{make_theta, verify_decay_condition, verify_isotropy, NoiseError, Profile, ThetaSpec};
use vortexmf_core::spectral::{
    solve, velocity_from_vorticity, SolverConfig, SpectralError, SpectralVorticity,
};
use vortexmf_core::torus::{TorusPoint, Vec2};

use crate::report::{fmt_f64, Check, Outputs, Table};

/// Number of points in the near-origin scan.
pub const ASYMPTOTIC_POINTS: usize = 100;
const ASYMPTOTIC_TOLERANCE: f64 = 0.05;

/// Seeded points with `|x|` log-uniform in `[1e-3, 1e-2]`.
pub fn asymptotic_points() -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6173_796d);
    (0..ASYMPTOTIC_POINTS)
        .map(|_| {
            let r = 10f64.powf(rng.random_range(-3.0..=-2.0));
            let a = rng.random_range(0.0..2.0 * PI);
            Vec2::new(r * a.cos(), r * a.sin())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct KernelValidation {
    /// Sup error against the row-summed series over the validation set.
    pub oracle_error: f64,
    /// Largest `| 2 pi |x| |K(x)| - 1 |` over the near-origin scan.
    pub asymptotic_deviation: f64,
    /// `K(-x) = -K(x)` bitwise on every checked point.
    pub antisymmetric: bool,
    pub table: Table,
}

impl KernelValidation {
    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::new("all", 1, "kernel_oracle_sup_error", self.oracle_error, 1e-6, self.oracle_error <= 1e-6),
            Check::new(
                "all",
                1,
                "kernel_asymptotic_relative_deviation",
                self.asymptotic_deviation,
                ASYMPTOTIC_TOLERANCE,
                self.asymptotic_deviation <= ASYMPTOTIC_TOLERANCE,
            ),
            Check::new("all", 1, "kernel_antisymmetry_violations", if self.antisymmetric { 0.0 } else { 1.0 }, 0.0, self.antisymmetric),
        ]
    }
}

pub fn validate_kernel(cutoff: usize, resolution: usize) -> Result<KernelValidation, KernelError> {
    let ev = build_kernel_evaluator(cutoff, resolution)?;
    Ok(validate_evaluator(&ev))
}

pub fn validate_evaluator(ev: &KernelEvaluator) -> KernelValidation {
    let mut table = Table::plain(&["check", "x1", "x2", "value1", "value2", "reference1", "reference2", "abs_error"]);
    let mut oracle_error: f64 = 0.0;
    let mut antisymmetric = true;
    let mut check_antisymmetry = |x: Vec2, k: Vec2| {
        let m = ev.velocity(-x);
        if m.x != -k.x || m.y != -k.y {
            antisymmetric = false;
        }
    };
    for x in validation_points() {
        let k = ev.velocity(x);
        let o = kernel_rows(x, ORACLE_ROWS);
        let err = (k.x - o.x).abs().max((k.y - o.y).abs());
        oracle_error = oracle_error.max(err);
        check_antisymmetry(x, k);
        table.push(vec![
            "oracle".into(),
            fmt_f64(x.x),
            fmt_f64(x.y),
            fmt_f64(k.x),
            fmt_f64(k.y),
            fmt_f64(o.x),
            fmt_f64(o.y),
            fmt_f64(err),
        ]);
    }
    let mut asymptotic_deviation: f64 = 0.0;
    let target = 1.0 / (2.0 * PI);
    for x in asymptotic_points() {
        let k = ev.velocity(x);
        let ratio = x.norm() * k.norm();
        let dev = (ratio / target - 1.0).abs();
        asymptotic_deviation = asymptotic_deviation.max(dev);
        check_antisymmetry(x, k);
        table.push(vec![
            "asymptotic".into(),
            fmt_f64(x.x),
            fmt_f64(x.y),
            fmt_f64(ratio),
            String::new(),
            fmt_f64(target),
            String::new(),
            fmt_f64(dev),
        ]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x616e_7469);
    for _ in 0..1000 {
        let x = Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        check_antisymmetry(x, ev.velocity(x));
    }
    KernelValidation { oracle_error, asymptotic_deviation, antisymmetric, table }
}

/// Cutoffs of the isotropy check.
pub const ISOTROPY_CUTOFFS: [u32; 3] = [8, 64, 256];
/// Cutoffs of the decay table.
pub const DECAY_CUTOFFS: [u32; 4] = [8, 32, 128, 512];
/// Point of the decay table.
pub const DECAY_POINT: Vec2 = Vec2::new(0.3, 0.2);

#[derive(Debug, Clone)]
pub struct NoiseValidation {
    /// `(cutoff, |Q(0) - |theta|^2 I / 2|_max / |theta|^2)` for the default profile.
    pub isotropy: Vec<(u32, f64)>,
    /// Largest `|eps^2 |theta|^2 / (4 nu) - 1|` over every constructed spectrum.
    pub scaling_error: f64,
    /// `|eps^2 Q(x)|` at the decay point, one entry per decay cutoff.
    pub decay: Vec<f64>,
    /// Largest `|eps^2 Q(x)|` over the decay point and the random points.
    pub decay_max: f64,
    pub nu: f64,
    pub table: Table,
}

impl NoiseValidation {
    pub fn isotropy_max(&self) -> f64 {
        self.isotropy.iter().map(|r| r.1).fold(0.0, f64::max)
    }

    pub fn decay_strictly_decreasing(&self) -> bool {
        self.decay.windows(2).all(|w| w[1] < w[0])
    }

    pub fn checks(&self) -> Vec<Check> {
        let iso = self.isotropy_max();
        let bound = 2.0 * self.nu;
        vec![
            Check::new("all", 1, "isotropy_relative_residual", iso, 1e-12, iso <= 1e-12),
            Check::new("all", 1, "scaling_identity_relative_error", self.scaling_error, 1e-12, self.scaling_error <= 1e-12),
            Check::new(
                "all",
                1,
                "decay_table_strictly_decreasing",
                if self.decay_strictly_decreasing() { 1.0 } else { 0.0 },
                1.0,
                self.decay_strictly_decreasing(),
            ),
            Check::new("all", 1, "decay_max_over_2nu", self.decay_max / bound, 1.0, self.decay_max <= bound),
        ]
    }
}

/// Isotropy at the origin, the `eps^2 |theta|^2 = 4 nu` identity, and the
/// decay of `eps^2 Q(x)`, for the standard cutoffs plus `cutoff`.
pub fn validate_noise(cutoff: u32, nu: f64, points: usize) -> Result<NoiseValidation, NoiseError> {
    let mut table = Table::plain(&["check", "profile", "cutoff", "x1", "x2", "value", "reference"]);
    let mut iso_cutoffs: Vec<u32> = ISOTROPY_CUTOFFS.to_vec();
    iso_cutoffs.push(cutoff);
    iso_cutoffs.sort_unstable();
    iso_cutoffs.dedup();

    let mut isotropy = Vec::new();
    let mut scaling_error: f64 = 0.0;
    let mut spectra: Vec<(Profile, ThetaSpec)> = Vec::new();
    for profile in [Profile::InverseNorm, Profile::Constant, Profile::SingleShell] {
        let mut cs: Vec<u32> = iso_cutoffs.iter().chain(DECAY_CUTOFFS.iter()).copied().collect();
        cs.sort_unstable();
        cs.dedup();
        for c in cs {
            spectra.push((profile, make_theta(c, profile)?));
        }
    }
    for (profile, th) in &spectra {
        let name = profile_name(*profile);
        let eps2 = 4.0 * nu / th.norm2();
        let err = if nu > 0.0 { (eps2 * th.norm2() / (4.0 * nu) - 1.0).abs() } else { 0.0 };
        scaling_error = scaling_error.max(err);
        table.push(vec![
            "scaling".into(),
            name.into(),
            th.cutoff().to_string(),
            String::new(),
            String::new(),
            fmt_f64(eps2 * th.norm2()),
            fmt_f64(4.0 * nu),
        ]);
        if *profile == Profile::InverseNorm && iso_cutoffs.contains(&th.cutoff()) {
            let rel = verify_isotropy(th) / th.norm2();
            isotropy.push((th.cutoff(), rel));
            table.push(vec![
                "isotropy".into(),
                name.into(),
                th.cutoff().to_string(),
                "0".into(),
                "0".into(),
                fmt_f64(rel),
                "0".into(),
            ]);
        }
    }

    let default: Vec<ThetaSpec> = DECAY_CUTOFFS
        .iter()
        .map(|&c| make_theta(c, Profile::InverseNorm))
        .collect::<Result<_, _>>()?;
    let rows = verify_decay_condition(&default, DECAY_POINT, nu)?;
    let decay: Vec<f64> = rows.iter().map(|r| r.norm).collect();
    let mut decay_max = decay.iter().copied().fold(0.0, f64::max);
    for r in &rows {
        table.push(vec![
            "decay".into(),
            "inverse_norm".into(),
            r.cutoff.to_string(),
            fmt_f64(DECAY_POINT.x),
            fmt_f64(DECAY_POINT.y),
            fmt_f64(r.norm),
            fmt_f64(2.0 * nu),
        ]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e6f_6973);
    let extra = make_theta(cutoff, Profile::InverseNorm)?;
    for _ in 0..points {
        let x = Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        if x.norm() < 1e-3 {
            continue;
        }
        let r = verify_decay_condition(std::slice::from_ref(&extra), x, nu)?[0];
        decay_max = decay_max.max(r.norm);
        table.push(vec![
            "decay".into(),
            "inverse_norm".into(),
            r.cutoff.to_string(),
            fmt_f64(x.x),
            fmt_f64(x.y),
            fmt_f64(r.norm),
            fmt_f64(2.0 * nu),
        ]);
    }
    Ok(NoiseValidation { isotropy, scaling_error, decay, decay_max, nu, table })
}

fn profile_name(p: Profile) -> &'static str {
    match p {
        Profile::InverseNorm => "inverse_norm",
        Profile::Constant => "constant",
        Profile::SingleShell => "single_shell",
    }
}

/// Exact-decay configuration: single mode, `nu = 0.01`, `n = 64`, `dt = 1e-4`.
pub const DECAY_CONFIG: SolverConfig = SolverConfig { n: 64, dt: 1e-4, nu: 0.01 };
pub const DECAY_TIME: f64 = 0.1;
/// Width and grid of the mollified vortex in the velocity comparison.
pub const VORTEX_WIDTH: f64 = 0.01;
pub const VORTEX_GRID: usize = 256;
/// Smallest probe distance from the vortex.
pub const PROBE_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct NsValidation {
    /// `|a(t) / (a(0) exp(-4 pi^2 nu t)) - 1|` for a single mode.
    pub decay_error: f64,
    /// Largest low-mode change between grids 64 and 128.
    pub refinement_change: f64,
    /// Largest `|u - K| / |K|` over the probes.
    pub velocity_error: f64,
    pub probes: usize,
    pub table: Table,
}

impl NsValidation {
    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::new("all", 1, "pde_exact_decay_relative_error", self.decay_error, 1e-6, self.decay_error <= 1e-6),
            Check::new("all", 1, "pde_refinement_change", self.refinement_change, 1e-6, self.refinement_change <= 1e-6),
            Check::new("all", 1, "vortex_velocity_relative_error", self.velocity_error, 0.01, self.velocity_error <= 0.01),
        ]
    }
}

/// Decay of a single Laplacian eigenmode against `exp(-4 pi^2 nu t)`.
pub fn exact_decay_error(config: &SolverConfig, t: f64) -> Result<f64, SpectralError> {
    let k = Mode::new(1, 0);
    let f0 = DensitySpec::new(vec![(k, 0.3)], 0.0).expect("valid density");
    let out = solve(&f0, config, &[t], &[k])?;
    let exact = 0.3 * (-4.0 * PI * PI * config.nu * t).exp();
    Ok((out[0].values[0] / exact - 1.0).abs())
}

/// Largest change of the modes `|k| <= 3` at `t = 0.05` between grids 64 and 128.
pub fn refinement_change() -> Result<f64, SpectralError> {
    let f0 = DensitySpec::new(
        vec![(Mode::new(1, 0), 0.2), (Mode::new(0, -1), -0.2), (Mode::new(2, 1), 0.15)],
        0.0,
    )
    .expect("valid density");
    let modes = vortexmf_core::basis::modes_in_disk(3);
    let run = |n| solve(&f0, &SolverConfig { n, dt: 1e-3, nu: 0.05 }, &[0.05], &modes);
    let (a, b) = (run(64)?, run(128)?);
    Ok(a[0].values.iter().zip(&b[0].values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Grid velocity of a mollified unit vortex at the origin against `K` at
/// grid probes at least [`PROBE_DISTANCE`] away. Returns the largest relative
/// error, the number of probes and one table row per probe.
pub fn vortex_velocity_check(ev: &KernelEvaluator) -> Result<(f64, usize, Vec<Vec<String>>), SpectralError> {
    let n = VORTEX_GRID;
    let blob = SpectralVorticity::gaussian_vortex(n, TorusPoint::ORIGIN, VORTEX_WIDTH)?;
    let u = velocity_from_vorticity(&blob);
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    // every 16th grid line
    for i in (0..n).step_by(16) {
        for j in (0..n).step_by(16) {
            let x = blob.grid_point(i, j);
            if x.as_vec().norm() < PROBE_DISTANCE {
                continue;
            }
            let k = ev.velocity(x.as_vec());
            let v = u.at(i, j);
            if k.norm() == 0.0 {
                continue;
            }
            let rel = (v - k).norm() / k.norm();
            worst = worst.max(rel);
            rows.push(vec![
                "velocity".into(),
                fmt_f64(x.x1()),
                fmt_f64(x.x2()),
                fmt_f64(v.x),
                fmt_f64(v.y),
                fmt_f64(k.x),
                fmt_f64(k.y),
                fmt_f64(rel),
            ]);
        }
    }
    let count = rows.len();
    Ok((worst, count, rows))
}

pub fn validate_ns(ev: &KernelEvaluator) -> Result<NsValidation, SpectralError> {
    let mut table = Table::plain(&["check", "x1", "x2", "value1", "value2", "reference1", "reference2", "error"]);
    let decay_error = exact_decay_error(&DECAY_CONFIG, DECAY_TIME)?;
    table.push(vec![
        "exact_decay".into(),
        String::new(),
        String::new(),
        fmt_f64(DECAY_TIME),
        String::new(),
        fmt_f64((-4.0 * PI * PI * DECAY_CONFIG.nu * DECAY_TIME).exp()),
        String::new(),
        fmt_f64(decay_error),
    ]);
    let refinement = refinement_change()?;
    table.push(vec![
        "refinement".into(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        fmt_f64(refinement),
    ]);
    let (velocity_error, probes, rows) = vortex_velocity_check(ev)?;
    for r in rows {
        table.push(r);
    }
    Ok(NsValidation { decay_error, refinement_change: refinement, velocity_error, probes, table })
}

pub fn kernel_outputs(v: &KernelValidation) -> Outputs {
    let mut o = Outputs::default();
    o.add("kernel_validation.csv", v.table.clone());
    o.checks = v.checks();
    o
}

pub fn noise_outputs(v: &NoiseValidation) -> Outputs {
    let mut o = Outputs::default();
    o.add("noise_validation.csv", v.table.clone());
    o.checks = v.checks();
    o
}

pub fn ns_outputs(v: &NsValidation) -> Outputs {
    let mut o = Outputs::default();
    o.add("ns_validation.csv", v.table.clone());
    o.checks = v.checks();
    o
}
