//! Time integration of the point-vortex system
//!
//! ```text
//! dX^i = (1/N) sum_{j != i} K(X^i - X^j) dt + eps sum_k theta_k sigma_k(X^i) dW^k
//! ```
//!
//! with one set of Brownian motions `W^k` shared by all particles.
//!
//! The noise fields `sigma_k` are divergence free and `sigma_k . grad sigma_k`
//! summed against `theta_k^2` vanishes, so the Ito and Stratonovich forms
//! coincide and plain Euler-Maruyama is consistent without a correction term.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::Mode;
use crate::density::{DensityError, DensitySpec};
use crate::diagnostics::{Diagnostics, DiagnosticsError, DiagnosticsRecord, MartingaleTracker};
use crate::kernel::{pairwise_drift_with_min_distance, KernelError, KernelEvaluator, DEFAULT_CLAMP};
use crate::noise::{sample_increment, NoiseError, NoiseField, NoiseIncrement, NoiseSpec};
use crate::rng::StreamKey;
use crate::torus::{TorusPoint, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("ensemble must contain at least one particle")]
    Empty,
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error(
        "particle {particle} left the finite range at step {step} (minimum pair distance {min_pair_distance:.3e})"
    )]
    NonFinite { particle: usize, step: u64, min_pair_distance: f64 },
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// Positions of `N` vortices at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexEnsemble {
    pub positions: Vec<TorusPoint>,
    pub realization: u64,
    pub step: u64,
    pub time: f64,
}

impl VortexEnsemble {
    pub fn new(positions: Vec<TorusPoint>, realization: u64) -> Result<Self, DynamicsError> {
        if positions.is_empty() {
            return Err(DynamicsError::Empty);
        }
        Ok(VortexEnsemble { positions, realization, step: 0, time: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `N` i.i.d. draws from `f0`, using the initial-condition stream of `key`.
pub fn sample_initial(f0: &DensitySpec, n: usize, key: &StreamKey) -> Result<VortexEnsemble, DynamicsError> {
    if n == 0 {
        return Err(DynamicsError::Empty);
    }
    let mut rng = key.init_stream();
    let positions = (0..n).map(|_| f0.sample(&mut rng)).collect();
    VortexEnsemble::new(positions, key.realization)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
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
pub struct IntegratorConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub n_steps: u64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Pair distance below which the kernel is capped.
    #[serde(default = "default_clamp")]
    pub delta_min: f64,
    /// Whether the pairwise interaction is switched on.
    #[serde(default = "default_true")]
    pub drift: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: default_dt(),
            n_steps: 0,
            scheme: Scheme::EulerMaruyama,
            delta_min: DEFAULT_CLAMP,
            drift: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::InvalidTimeStep(self.dt));
        }
        if !(self.delta_min > 0.0 && self.delta_min.is_finite()) {
            return Err(KernelError::InvalidClamp(self.delta_min).into());
        }
        Ok(())
    }
}

/// What one step produced besides the new positions.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub min_pair_distance: f64,
    /// Martingale and quadratic-variation increments, one per probe mode.
    pub martingale: Vec<(f64, f64)>,
    /// Pairwise drift at the start of the step, if the interaction is on.
    pub drift: Option<Vec<Vec2>>,
}

/// Reusable stepping context for one noise spectrum.
#[derive(Debug, Clone)]
pub struct Stepper {
    config: IntegratorConfig,
    evaluator: KernelEvaluator,
    field: Arc<NoiseField>,
}

impl Stepper {
    pub fn new(
        config: IntegratorConfig,
        evaluator: &KernelEvaluator,
        field: Arc<NoiseField>,
    ) -> Result<Self, DynamicsError> {
        config.validate()?;
        let evaluator = if evaluator.singular_clamp() == config.delta_min {
            evaluator.clone()
        } else {
            evaluator.with_clamp(config.delta_min)?
        };
        Ok(Stepper { config, evaluator, field })
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn field(&self) -> &NoiseField {
        &self.field
    }

    /// One Euler-Maruyama step in place:
    /// `x_i <- wrap(x_i + drift_i dt + eps sum_k theta_k sigma_k(x_i) dW^k)`.
    pub fn step(
        &self,
        ens: &mut VortexEnsemble,
        inc: &NoiseIncrement,
        probes: &[Mode],
    ) -> Result<StepReport, DynamicsError> {
        let dt = self.config.dt;
        let (drift, min_pair_distance) = if self.config.drift {
            let (d, m) = pairwise_drift_with_min_distance(&self.evaluator, &ens.positions);
            (Some(d), m)
        } else {
            (None, f64::INFINITY)
        };
        let noise = self.field.evaluate(inc, &ens.positions, probes)?;
        let martingale = self.field.martingale_increments(inc, &noise.projections);
        let mut next = Vec::with_capacity(ens.len());
        for (i, (x, dn)) in ens.positions.iter().zip(&noise.displacements).enumerate() {
            let mut dx = *dn;
            if let Some(d) = &drift {
                dx += d[i] * dt;
            }
            let y = x.translate(dx).map_err(|_| DynamicsError::NonFinite {
                particle: i,
                step: ens.step,
                min_pair_distance,
            })?;
            next.push(y);
        }
        ens.positions = next;
        ens.step += 1;
        ens.time = ens.step as f64 * dt;
        Ok(StepReport { min_pair_distance, martingale, drift })
    }
}

/// One Euler-Maruyama step with the increment `inc`, which must belong to
/// `spec`. The same increment moves every particle.
pub fn em_step(
    ens: &VortexEnsemble,
    config: &IntegratorConfig,
    evaluator: &KernelEvaluator,
    spec: &NoiseSpec,
    inc: &NoiseIncrement,
) -> Result<VortexEnsemble, DynamicsError> {
    let stepper = Stepper::new(config.clone(), evaluator, Arc::new(NoiseField::new(spec.clone())))?;
    let mut next = ens.clone();
    stepper.step(&mut next, inc, &[])?;
    Ok(next)
}

/// Steps at which records are taken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    steps: Vec<u64>,
}

impl Schedule {
    /// `count` evenly spaced records over `n_steps` steps, plus `t = 0`.
    pub fn evenly(n_steps: u64, count: u64) -> Self {
        let count = count.max(1);
        let mut steps: Vec<u64> = (0..=count)
            .map(|i| ((i as u128 * n_steps as u128 + count as u128 / 2) / count as u128) as u64)
            .collect();
        steps.dedup();
        Schedule { steps }
    }

    /// Explicit steps; sorted, deduplicated, and always including step 0.
    pub fn from_steps(mut steps: Vec<u64>) -> Self {
        steps.push(0);
        steps.sort_unstable();
        steps.dedup();
        Schedule { steps }
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn contains(&self, step: u64) -> bool {
        self.steps.binary_search(&step).is_ok()
    }
}

/// Everything needed to run one realization.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub f0: DensitySpec,
    pub n: usize,
    pub noise: Arc<NoiseField>,
    pub integrator: IntegratorConfig,
    pub schedule: Schedule,
    pub key: StreamKey,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Completion {
    Complete,
    /// The run stopped at `step`; records up to that point are kept.
    Aborted { step: u64, reason: String },
}

impl Completion {
    pub fn is_complete(&self) -> bool {
        matches!(self, Completion::Complete)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub status: Completion,
    pub final_ensemble: VortexEnsemble,
}

/// Run one realization, calling `observer` at every scheduled step with the
/// record and the ensemble. Deterministic given `run.key`.
pub fn simulate(
    run: &RunConfig,
    evaluator: &KernelEvaluator,
    diagnostics: &Diagnostics,
    mut observer: impl FnMut(&DiagnosticsRecord, &VortexEnsemble),
) -> Result<RunOutput, DynamicsError> {
    let stepper = Stepper::new(run.integrator.clone(), evaluator, run.noise.clone())?;
    let theta = run.noise.spec().theta();
    let nu = run.noise.spec().nu();
    let dt = run.integrator.dt;
    let probes = diagnostics.config.martingale_modes();
    let mut ens = sample_initial(&run.f0, run.n, &run.key)?;
    let mut tracker = MartingaleTracker::new(&probes, &ens.positions);
    let mut records = Vec::new();
    let mut min_dist = f64::INFINITY;

    let mut emit = |ens: &VortexEnsemble, tracker: &MartingaleTracker, min_dist: &mut f64, records: &mut Vec<DiagnosticsRecord>| {
        let rec = diagnostics.record(ens.step, ens.time, &ens.positions, Some(tracker), *min_dist);
        observer(&rec, ens);
        records.push(rec);
        *min_dist = f64::INFINITY;
    };

    if run.schedule.contains(0) {
        emit(&ens, &tracker, &mut min_dist, &mut records);
    }
    for step in 0..run.integrator.n_steps {
        let inc = sample_increment(theta, dt, &run.key, step)?;
        let before = ens.positions.clone();
        match stepper.step(&mut ens, &inc, &probes) {
            Ok(rep) => {
                min_dist = min_dist.min(rep.min_pair_distance);
                tracker.observe_step(&before, rep.drift.as_deref(), dt, nu, &rep.martingale);
            }
            Err(e) => {
                return Ok(RunOutput {
                    records,
                    status: Completion::Aborted { step, reason: e.to_string() },
                    final_ensemble: ens,
                });
            }
        }
        if run.schedule.contains(ens.step) {
            emit(&ens, &tracker, &mut min_dist, &mut records);
        }
    }
    Ok(RunOutput { records, status: Completion::Complete, final_ensemble: ens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{hamiltonian, hamiltonian_offset, DiagnosticsConfig};
    use crate::kernel::build_kernel_evaluator;
    use crate::noise::{make_theta, Profile};
    use crate::torus::torus_diff;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn ev() -> &'static KernelEvaluator {
        static EV: OnceLock<KernelEvaluator> = OnceLock::new();
        EV.get_or_init(|| build_kernel_evaluator(64, 256).unwrap())
    }

    fn pt(a: f64, b: f64) -> TorusPoint {
        TorusPoint::new(a, b).unwrap()
    }

    fn spec(cutoff: u32, nu: f64) -> NoiseSpec {
        NoiseSpec::new(make_theta(cutoff, Profile::InverseNorm).unwrap(), nu).unwrap()
    }

    fn cfg(dt: f64, drift: bool) -> IntegratorConfig {
        IntegratorConfig { dt, drift, ..IntegratorConfig::default() }
    }

    #[test]
    fn sampling_examples() {
        let f0 = DensitySpec::new(vec![(Mode::new(1, 0), 0.3)], 0.5).unwrap();
        let key = StreamKey::new(1, 0);
        let a = sample_initial(&f0, 10, &key).unwrap();
        assert_eq!(a, sample_initial(&f0, 10, &key).unwrap());
        assert_eq!(sample_initial(&f0, 1, &key).unwrap().len(), 1);
        assert!(sample_initial(&f0, 0, &key).is_err());
        // mean of <S_0, e_(1,0)> over realizations
        let r = 400;
        let n = 100;
        let mean = (0..r)
            .map(|i| {
                let e = sample_initial(&f0, n, &StreamKey::new(9, i)).unwrap();
                crate::diagnostics::empirical_mode(&e.positions, Mode::new(1, 0))
            })
            .sum::<f64>()
            / r as f64;
        assert!((mean - 0.3).abs() < 4.0 * (2.0 / (r as usize * n) as f64).sqrt());
    }

    #[test]
    fn uniform_initial_modes_fluctuate_at_clt_scale() {
        let n = 400;
        let bound = 3.0 * SQRT_2_F / (n as f64).sqrt();
        let hits = (0..200)
            .filter(|&s| {
                let e = sample_initial(&DensitySpec::uniform(), n, &StreamKey::new(s, 0)).unwrap();
                crate::diagnostics::empirical_mode(&e.positions, Mode::new(1, 0)).abs() <= bound
            })
            .count();
        assert!(hits >= 198);
    }

    const SQRT_2_F: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn zero_increment_without_drift_is_identity() {
        let s = spec(3, 0.05);
        let ens = VortexEnsemble::new(vec![pt(0.1, 0.2)], 0).unwrap();
        let inc = NoiseIncrement::zero(s.theta(), 0, 1e-3);
        let next = em_step(&ens, &cfg(1e-3, false), ev(), &s, &inc).unwrap();
        assert_eq!(next.positions, ens.positions);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn every_particle_sees_the_same_field() {
        let s = spec(3, 0.05);
        let th = s.theta();
        let k = Mode::new(2, -1);
        let idx = th.modes().binary_search(&k).unwrap();
        let mut vals = vec![0.0; th.len()];
        vals[idx] = 0.01;
        let inc = NoiseIncrement::from_values(th, 0, 1e-3, vals).unwrap();
        let pts: Vec<TorusPoint> = (0..20).map(|i| pt(0.05 * i as f64, -0.03 * i as f64)).collect();
        let ens = VortexEnsemble::new(pts.clone(), 0).unwrap();
        let next = em_step(&ens, &cfg(1e-3, false), ev(), &s, &inc).unwrap();
        let amp = s.epsilon() * th.theta(k) * 0.01;
        for (x, y) in pts.iter().zip(&next.positions) {
            let expect = crate::noise::sigma_eval(k, *x).unwrap() * amp;
            let got = torus_diff(*y, *x);
            assert_abs_diff_eq!(got.x, expect.x, epsilon = 1e-15);
            assert_abs_diff_eq!(got.y, expect.y, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_particle_noise_variance() {
        let nu = 0.05;
        let s = spec(4, nu);
        let field = Arc::new(NoiseField::new(s.clone()));
        let dt = 1e-2;
        let stepper = Stepper::new(cfg(dt, false), ev(), field).unwrap();
        let reps = 20_000;
        let mut sq = [0.0, 0.0];
        for r in 0..reps {
            let mut e = VortexEnsemble::new(vec![pt(0.1, -0.2)], r).unwrap();
            let inc = sample_increment(s.theta(), dt, &StreamKey::new(3, r), 0).unwrap();
            stepper.step(&mut e, &inc, &[]).unwrap();
            let d = torus_diff(e.positions[0], pt(0.1, -0.2));
            sq[0] += d.x * d.x;
            sq[1] += d.y * d.y;
        }
        for v in sq {
            let var = v / reps as f64 / dt;
            // each coordinate has variance 2 nu dt; the relative standard error is sqrt(2/reps)
            assert!((var - 2.0 * nu).abs() < 3.0 * 2.0 * nu * (2.0 / reps as f64).sqrt(), "var {var}");
        }
    }

    #[test]
    fn vortex_pair_keeps_its_separation() {
        let s = spec(2, 0.0);
        let inc = NoiseIncrement::zero(s.theta(), 0, 1e-4);
        let mut e = VortexEnsemble::new(vec![pt(0.05, 0.0), pt(-0.05, 0.0)], 0).unwrap();
        let c = cfg(1e-4, true);
        for _ in 0..1000 {
            e = em_step(&e, &c, ev(), &s, &inc).unwrap();
        }
        let d = torus_diff(e.positions[0], e.positions[1]).norm();
        // explicit Euler spirals outward by O(dt) per unit time
        assert!((d - 0.1).abs() < 1e-3, "d {d}");
        // the pair rotates about its (fixed) midpoint
        let mid = e.positions[0].as_vec() + torus_diff(e.positions[1], e.positions[0]) * 0.5;
        assert!(mid.norm() < 1e-12);
        assert!(torus_diff(e.positions[0], pt(0.05, 0.0)).norm() > 0.01);
    }

    #[test]
    fn schedule() {
        assert_eq!(Schedule::evenly(0, 50).steps(), &[0]);
        assert_eq!(Schedule::evenly(10, 5).steps(), &[0, 2, 4, 6, 8, 10]);
        assert_eq!(Schedule::evenly(200, 10).steps().len(), 11);
        assert_eq!(Schedule::from_steps(vec![5, 3, 5]).steps(), &[0, 3, 5]);
    }

    fn small_run(n_steps: u64, seed: u64) -> (RunConfig, Diagnostics) {
        let f0 = DensitySpec::new(vec![(Mode::new(1, 0), 0.3)], 0.5).unwrap();
        let run = RunConfig {
            f0,
            n: 16,
            noise: Arc::new(NoiseField::new(spec(4, 0.05))),
            integrator: IntegratorConfig { n_steps, ..cfg(1e-3, true) },
            schedule: Schedule::evenly(n_steps, 5),
            key: StreamKey::new(seed, 0),
        };
        let diag = Diagnostics::new(DiagnosticsConfig::default(), ev().clone(), hamiltonian_offset(ev()));
        (run, diag)
    }

    #[test]
    fn simulate_is_deterministic() {
        let (run, diag) = small_run(20, 7);
        let a = simulate(&run, ev(), &diag, |_, _| {}).unwrap();
        let b = simulate(&run, ev(), &diag, |_, _| {}).unwrap();
        assert_eq!(a.records, b.records);
        assert!(a.status.is_complete());
        assert_eq!(a.records.len(), 6);
        assert_abs_diff_eq!(a.records.last().unwrap().time, 0.02, epsilon = 1e-15);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = one.install(|| simulate(&run, ev(), &diag, |_, _| {}).unwrap());
        assert_eq!(a.records, c.records);
    }

    #[test]
    fn simulate_without_steps() {
        let (run, diag) = small_run(0, 1);
        let mut seen = 0;
        let out = simulate(&run, ev(), &diag, |_, _| seen += 1).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(seen, 1);
        assert_eq!(out.records[0].time, 0.0);
        assert!(out.records[0].martingale.iter().all(|m| m.value == 0.0));
    }

    #[test]
    fn weak_formulation_residual_is_small() {
        let (mut run, diag) = small_run(200, 3);
        run.n = 64;
        let out = simulate(&run, ev(), &diag, |_, _| {}).unwrap();
        for rec in &out.records {
            for m in &rec.martingale {
                // second-order Ito remainder, fluctuating at sqrt(T dt) scale
                assert!(m.weak_residual.abs() < 0.05, "{:?}", m);
            }
        }
    }

    fn vortex_ring() -> Vec<TorusPoint> {
        (0..8)
            .map(|i| {
                let a = i as f64 * 0.77;
                pt(0.3 * a.cos() + 0.01 * i as f64, 0.25 * a.sin())
            })
            .collect()
    }

    /// Relative change of `H_N` over `t in [0, 0.2]` without noise.
    fn hamiltonian_drift(dt: f64) -> f64 {
        let pts = vortex_ring();
        let s = spec(2, 0.0);
        let c0 = hamiltonian_offset(ev());
        let h0 = hamiltonian(&pts, ev(), c0);
        let steps = (0.2 / dt).round() as u64;
        let field = Arc::new(NoiseField::new(s.clone()));
        let st = Stepper::new(cfg(dt, true), ev(), field).unwrap();
        let mut e = VortexEnsemble::new(pts, 0).unwrap();
        let inc = NoiseIncrement::zero(s.theta(), 0, dt);
        for _ in 0..steps {
            st.step(&mut e, &inc, &[]).unwrap();
        }
        (hamiltonian(&e.positions, ev(), c0) - h0).abs() / h0
    }

    #[test]
    fn hamiltonian_is_nearly_conserved_without_noise() {
        let d1 = hamiltonian_drift(1e-4);
        let d2 = hamiltonian_drift(5e-5);
        assert!(d1 <= 1e-4, "relative drift {d1}");
        // Euler is first order: the drift is proportional to dt
        let ratio = d1 / d2;
        assert!((1.8..2.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    #[ignore = "a first-order scheme halves the drift (ratio 2.0), it cannot reach 3"]
    fn halving_dt_cuts_hamiltonian_drift_threefold() {
        let d1 = hamiltonian_drift(1e-4);
        let d2 = hamiltonian_drift(5e-5);
        assert!(d1 >= 3.0 * d2, "ratio {}", d1 / d2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn positions_stay_wrapped(seed in 0u64..1000) {
            let (mut run, diag) = small_run(10, seed);
            run.noise = Arc::new(NoiseField::new(spec(6, 2.0)));
            let out = simulate(&run, ev(), &diag, |_, _| {}).unwrap();
            for p in &out.final_ensemble.positions {
                prop_assert!((-0.5..0.5).contains(&p.x1()) && (-0.5..0.5).contains(&p.x2()));
            }
        }

        #[test]
        fn relabelling_particles_relabels_trajectories(seed in 0u64..1000, shift in 1usize..11) {
            let s = spec(3, 0.1);
            let field = Arc::new(NoiseField::new(s.clone()));
            let st = Stepper::new(cfg(1e-3, true), ev(), field).unwrap();
            let f0 = DensitySpec::uniform();
            let a0 = sample_initial(&f0, 12, &StreamKey::new(seed, 0)).unwrap();
            let mut b0 = a0.clone();
            b0.positions.rotate_left(shift);
            let (mut a, mut b) = (a0, b0);
            for step in 0..5 {
                let inc = sample_increment(s.theta(), 1e-3, &StreamKey::new(seed, 1), step).unwrap();
                st.step(&mut a, &inc, &[]).unwrap();
                st.step(&mut b, &inc, &[]).unwrap();
            }
            b.positions.rotate_right(shift);
            prop_assert_eq!(a.positions, b.positions);
        }
    }
}
