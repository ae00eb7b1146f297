//! Experiment configuration: one JSON document with the sections `density`,
//! `noise`, `integrator` and `experiment`. Unknown fields are rejected and
//! every error names the offending field.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use vortexmf_core::basis::Mode;
use vortexmf_core::density::DensitySpec;
use vortexmf_core::diagnostics::DiagnosticsConfig;
use vortexmf_core::dynamics::{IntegratorConfig, Scheme};
use vortexmf_core::kernel::{DEFAULT_CLAMP, MIN_MODE_CUTOFF, MIN_TABLE_RESOLUTION};
use vortexmf_core::noise::Profile;
use vortexmf_core::spectral::{steps_for_time, SolverConfig};

/// File the filled-in configuration is echoed to.
pub const ECHO_FILE: &str = "config_echo.json";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Simulate,
    Converge,
    Martingale,
    Hamiltonian,
    Entropy,
    Moments,
    Solve,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Converge => "converge",
            Kind::Martingale => "martingale",
            Kind::Hamiltonian => "hamiltonian",
            Kind::Entropy => "entropy",
            Kind::Moments => "moments",
            Kind::Solve => "solve",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the noise cutoff `N_theta` follows the particle number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutoffRule {
    /// `N_theta = N`.
    Particles,
    /// `N_theta = ceil(sqrt(N))`.
    Sqrt,
    /// The same cutoff for every `N`.
    Fixed(u32),
}

impl CutoffRule {
    pub fn cutoff(self, n: usize) -> u32 {
        match self {
            CutoffRule::Particles => n as u32,
            CutoffRule::Sqrt => {
                let mut c = (n as f64).sqrt().ceil() as u32;
                while c > 1 && ((c - 1) as usize).pow(2) >= n {
                    c -= 1;
                }
                c.max(1)
            }
            CutoffRule::Fixed(c) => c,
        }
    }
}

impl Serialize for CutoffRule {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CutoffRule::Particles => s.serialize_str("N"),
            CutoffRule::Sqrt => s.serialize_str("sqrt"),
            CutoffRule::Fixed(c) => s.serialize_u32(*c),
        }
    }
}

impl<'de> Deserialize<'de> for CutoffRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RuleVisitor;
        impl Visitor<'_> for RuleVisitor {
            type Value = CutoffRule;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"N\", \"sqrt\" or a positive integer")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<CutoffRule, E> {
                match v {
                    "N" => Ok(CutoffRule::Particles),
                    "sqrt" => Ok(CutoffRule::Sqrt),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<CutoffRule, E> {
                match u32::try_from(v) {
                    Ok(c) if c > 0 => Ok(CutoffRule::Fixed(c)),
                    _ => Err(E::invalid_value(de::Unexpected::Unsigned(v), &self)),
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<CutoffRule, E> {
                Err(E::invalid_value(de::Unexpected::Signed(v), &self))
            }
        }
        d.deserialize_any(RuleVisitor)
    }
}

/// One Fourier coefficient `a` of `e_k` in `f0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub k: [i32; 2],
    pub a: f64,
}

fn default_coefficients() -> Vec<Coefficient> {
    // 1 + 0.3 sqrt2 cos(2 pi x1) + 0.3 sqrt2 sin(2 pi x2); e_(0,-1) = -sqrt2 sin(2 pi x2)
    vec![Coefficient { k: [1, 0], a: 0.3 }, Coefficient { k: [0, -1], a: -0.3 }]
}
fn default_min() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    #[serde(default = "default_coefficients")]
    pub coefficients: Vec<Coefficient>,
    /// Declared lower bound of `f0`.
    #[serde(default = "default_min")]
    pub min: f64,
}

impl Default for DensitySection {
    fn default() -> Self {
        DensitySection { coefficients: default_coefficients(), min: default_min() }
    }
}

impl DensitySection {
    pub fn spec(&self) -> Result<DensitySpec, ConfigError> {
        let table = self
            .coefficients
            .iter()
            .map(|c| (Mode::new(c.k[0], c.k[1]), c.a))
            .collect();
        DensitySpec::new(table, self.min).map_err(|e| invalid("density", e.to_string()))
    }
}

fn default_nu() -> f64 {
    0.05
}
fn default_rule() -> CutoffRule {
    CutoffRule::Sqrt
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub profile: Profile,
    /// `"N"`, `"sqrt"` or a fixed integer cutoff.
    #[serde(default = "default_rule")]
    pub cutoff: CutoffRule,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { nu: default_nu(), profile: Profile::default(), cutoff: default_rule() }
    }
}

fn default_dt() -> f64 {
    1e-3
}
fn default_clamp() -> f64 {
    DEFAULT_CLAMP
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_clamp")]
    pub delta_min: f64,
    #[serde(default = "default_true")]
    pub drift: bool,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection { dt: default_dt(), scheme: Scheme::default(), delta_min: default_clamp(), drift: true }
    }
}

fn default_mode_cutoff() -> usize {
    MIN_MODE_CUTOFF
}
fn default_resolution() -> usize {
    MIN_TABLE_RESOLUTION
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "default_mode_cutoff")]
    pub mode_cutoff: usize,
    #[serde(default = "default_resolution")]
    pub table_resolution: usize,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { mode_cutoff: default_mode_cutoff(), table_resolution: default_resolution() }
    }
}

fn default_grid() -> usize {
    128
}
fn default_pde_dt() -> f64 {
    1e-4
}

/// Reference solver settings; the viscosity is taken from the noise section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeSection {
    #[serde(default = "default_grid")]
    pub n: usize,
    #[serde(default = "default_pde_dt")]
    pub dt: f64,
}

impl Default for PdeSection {
    fn default() -> Self {
        PdeSection { n: default_grid(), dt: default_pde_dt() }
    }
}

fn default_ladder() -> Vec<usize> {
    vec![250, 1000, 4000]
}
fn default_realizations() -> usize {
    16
}
fn default_t_final() -> f64 {
    0.2
}
fn default_bins() -> usize {
    16
}
fn default_lags() -> Vec<usize> {
    vec![1, 2, 4, 8, 16, 32]
}
fn default_moment_mode() -> [i32; 2] {
    [1, 0]
}
fn default_error_window() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Kind,
    pub seed: u64,
    /// Particle numbers, strictly increasing.
    #[serde(default = "default_ladder")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Number of evenly spaced records after `t = 0`; ignored when `schedule`
    /// is given. Defaults to 10, or 50 for `simulate`.
    #[serde(default)]
    pub records: Option<u64>,
    /// Explicit record steps.
    #[serde(default)]
    pub schedule: Option<Vec<u64>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Modes `0 < |k| <= error_window` enter the convergence error.
    #[serde(default = "default_error_window")]
    pub error_window: u32,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub pde: PdeSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    /// Histogram cells per axis for the pair entropy.
    #[serde(default = "default_bins")]
    pub entropy_bins: usize,
    /// Lags, in steps, of the increment moment scan.
    #[serde(default = "default_lags")]
    pub moment_lags: Vec<usize>,
    #[serde(default = "default_moment_mode")]
    pub moment_mode: [i32; 2],
    /// Write `trajectory_<rid>.csv` in `simulate`.
    #[serde(default)]
    pub trajectories: bool,
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub density: DensitySection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    /// Defaults for `kind` with the given seed.
    pub fn minimal(kind: Kind, seed: u64) -> Self {
        let json = format!("{{\"experiment\": {{\"kind\": \"{kind}\", \"seed\": {seed}}}}}");
        Self::from_json(&json).expect("defaults are valid")
    }

    /// Parse and validate a JSON document.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Schema { path, message: e.into_inner().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ex = &self.experiment;
        self.density.spec()?;
        if !(self.noise.nu >= 0.0 && self.noise.nu.is_finite()) {
            return Err(invalid("noise.nu", format!("must be finite and non-negative, got {}", self.noise.nu)));
        }
        if !(self.integrator.dt > 0.0 && self.integrator.dt.is_finite()) {
            return Err(invalid("integrator.dt", format!("must be positive, got {}", self.integrator.dt)));
        }
        if !(self.integrator.delta_min > 0.0 && self.integrator.delta_min.is_finite()) {
            return Err(invalid("integrator.delta_min", "must be positive"));
        }
        if ex.n_values.is_empty() {
            return Err(invalid("experiment.n_values", "must not be empty"));
        }
        if ex.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("experiment.n_values", format!("must be strictly increasing, got {:?}", ex.n_values)));
        }
        let min_n = if matches!(ex.kind, Kind::Simulate | Kind::Solve) { 1 } else { 2 };
        if ex.n_values[0] < min_n {
            return Err(invalid("experiment.n_values", format!("particle numbers must be at least {min_n}")));
        }
        if ex.realizations == 0 {
            return Err(invalid("experiment.realizations", "must be at least 1"));
        }
        if matches!(ex.kind, Kind::Martingale | Kind::Moments) && ex.realizations < 32 {
            return Err(invalid(
                "experiment.realizations",
                format!("{} needs at least 32 realizations, got {}", ex.kind, ex.realizations),
            ));
        }
        if !(ex.t_final >= 0.0 && ex.t_final.is_finite()) {
            return Err(invalid("experiment.t_final", "must be finite and non-negative"));
        }
        let steps = self.n_steps()?;
        if let Some(s) = &ex.schedule {
            if let Some(&bad) = s.iter().find(|&&v| v > steps) {
                return Err(invalid("experiment.schedule", format!("step {bad} exceeds the {steps} steps of the run")));
            }
        }
        if ex.records == Some(0) {
            return Err(invalid("experiment.records", "must be at least 1"));
        }
        if ex.error_window == 0 {
            return Err(invalid("experiment.error_window", "must be at least 1"));
        }
        ex.diagnostics
            .validate()
            .map_err(|e| invalid("experiment.diagnostics", e.to_string()))?;
        if ex.kernel.mode_cutoff < MIN_MODE_CUTOFF {
            return Err(invalid("experiment.kernel.mode_cutoff", format!("must be at least {MIN_MODE_CUTOFF}")));
        }
        if ex.kernel.table_resolution < MIN_TABLE_RESOLUTION || ex.kernel.table_resolution % 2 != 0 {
            return Err(invalid(
                "experiment.kernel.table_resolution",
                format!("must be even and at least {MIN_TABLE_RESOLUTION}"),
            ));
        }
        if matches!(ex.kind, Kind::Converge | Kind::Solve) {
            self.solver_config()
                .validate()
                .map_err(|e| invalid("experiment.pde", e.to_string()))?;
            for t in self.record_times()? {
                steps_for_time(t, ex.pde.dt).map_err(|_| {
                    invalid("experiment.pde.dt", format!("record time {t} is not a multiple of {}", ex.pde.dt))
                })?;
            }
        }
        if ex.kind == Kind::Entropy {
            if ex.entropy_bins == 0 {
                return Err(invalid("experiment.entropy_bins", "must be at least 1"));
            }
            let cells = (ex.entropy_bins as u128).pow(4);
            for &n in &ex.n_values {
                let samples = (n as u128) * (n as u128 - 1) * ex.realizations as u128;
                if samples < 100 * cells {
                    return Err(invalid(
                        "experiment.realizations",
                        format!("{samples} pooled pairs at N = {n} are fewer than 100 x {cells} histogram cells"),
                    ));
                }
            }
        }
        if ex.kind == Kind::Moments {
            if ex.moment_lags.is_empty() || ex.moment_lags.contains(&0) {
                return Err(invalid("experiment.moment_lags", "lags must be positive"));
            }
            let max = *ex.moment_lags.iter().max().expect("non-empty");
            if max as u64 >= steps {
                return Err(invalid("experiment.moment_lags", format!("lag {max} needs more than {steps} steps")));
            }
            if ex.moment_mode == [0, 0] {
                return Err(invalid("experiment.moment_mode", "must be nonzero"));
            }
        }
        Ok(())
    }

    /// `T / dt`, which must be a whole number.
    pub fn n_steps(&self) -> Result<u64, ConfigError> {
        let dt = self.integrator.dt;
        let t = self.experiment.t_final;
        let s = (t / dt).round();
        if (s * dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(invalid("experiment.t_final", format!("{t} is not a multiple of integrator.dt = {dt}")));
        }
        Ok(s as u64)
    }

    /// Record steps, always including step 0.
    pub fn schedule(&self) -> Result<vortexmf_core::dynamics::Schedule, ConfigError> {
        use vortexmf_core::dynamics::Schedule;
        let steps = self.n_steps()?;
        Ok(match (&self.experiment.schedule, self.experiment.kind) {
            (Some(s), _) => Schedule::from_steps(s.clone()),
            (None, Kind::Moments) => Schedule::from_steps((0..=steps).collect()),
            (None, kind) => {
                let default = if kind == Kind::Simulate { 50 } else { 10 };
                Schedule::evenly(steps, self.experiment.records.unwrap_or(default))
            }
        })
    }

    pub fn record_times(&self) -> Result<Vec<f64>, ConfigError> {
        Ok(self
            .schedule()?
            .steps()
            .iter()
            .map(|&s| s as f64 * self.integrator.dt)
            .collect())
    }

    pub fn integrator_config(&self) -> Result<IntegratorConfig, ConfigError> {
        Ok(IntegratorConfig {
            dt: self.integrator.dt,
            n_steps: self.n_steps()?,
            scheme: self.integrator.scheme,
            delta_min: self.integrator.delta_min,
            drift: self.integrator.drift,
        })
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { n: self.experiment.pde.n, dt: self.experiment.pde.dt, nu: self.noise.nu }
    }

    /// Output directory: the CLI value, else the configured one, else `out`.
    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.experiment.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Pretty JSON of the fully filled configuration.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}

/// Read, parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    ExperimentConfig::from_json(&text)
}

/// [`load_config`] followed by writing the filled configuration to
/// `<dir>/config_echo.json`.
pub fn load_and_echo(path: &Path, dir: &Path) -> Result<ExperimentConfig, ConfigError> {
    let cfg = load_config(path)?;
    write_echo(&cfg, dir)?;
    Ok(cfg)
}

pub fn write_echo(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf, ConfigError> {
    let io = |source| ConfigError::Io { path: dir.to_path_buf(), source };
    std::fs::create_dir_all(dir).map_err(io)?;
    let p = dir.join(ECHO_FILE);
    std::fs::write(&p, cfg.echo()).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
    Ok(p)
}
