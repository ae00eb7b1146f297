//! Monte-Carlo experiments over a ladder of particle numbers.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use vortexmf_core::basis::Mode;
use vortexmf_core::density::DensitySpec;
use vortexmf_core::diagnostics::{
    concentration_bound, entropy2_estimate, green_pairing_quadrature, hamiltonian_offset,
    increment_moment_scan, Diagnostics, DiagnosticsConfig, DiagnosticsError, DiagnosticsRecord, MomentScan,
    PairHistogram,
};
use vortexmf_core::dynamics::{simulate, Completion, DynamicsError, RunConfig, Schedule};
use vortexmf_core::kernel::{build_kernel_evaluator, KernelError, KernelEvaluator};
use vortexmf_core::noise::{make_theta, NoiseError, NoiseField, NoiseSpec};
use vortexmf_core::rng::StreamKey;
use vortexmf_core::spectral::{solve, SpectralError};

use crate::config::{ConfigError, ExperimentConfig, Kind};
use crate::report::{fmt_f64, mean_and_se, monotone_decreasing, Check, Outputs, Provenance, Table};

/// Grid of the quadrature behind the initial Hamiltonian oracle.
pub const QUADRATURE_GRID: usize = 512;
/// Allowed growth of the mean Hamiltonian over its initial value.
pub const HAMILTONIAN_GROWTH: f64 = 2.0;
pub const HAMILTONIAN_TOLERANCE: f64 = 0.05;
pub const ENTROPY_TOLERANCE: f64 = 0.05;
pub const ENTROPY_ORACLE_TOLERANCE: f64 = 0.1;
pub const SLOPE_RANGE: (f64, f64) = (1.6, 2.4);

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{0} runs are not supported by this command")]
    WrongKind(Kind),
}

/// Shared, read-only state of one experiment.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub f0: DensitySpec,
    pub evaluator: KernelEvaluator,
    pub diagnostics: Diagnostics,
    pub schedule: Schedule,
    pub fields: Vec<Arc<NoiseField>>,
    pub provenance: Provenance,
}

/// Diagnostics needed by each experiment kind.
pub fn diagnostics_for(cfg: &ExperimentConfig) -> DiagnosticsConfig {
    let ex = &cfg.experiment;
    let mut d = ex.diagnostics.clone();
    match ex.kind {
        Kind::Entropy => {
            d.sobolev_orders.clear();
            d.concentration_radii.clear();
            d.martingale_modes.clear();
            d.hamiltonian = false;
        }
        Kind::Moments => {
            let k = Mode::new(ex.moment_mode[0], ex.moment_mode[1]);
            d.mode_window = k.norm().ceil() as u32;
            d.sobolev_orders.clear();
            d.concentration_radii.clear();
            d.martingale_modes.clear();
            d.hamiltonian = false;
        }
        _ => d.mode_window = d.mode_window.max(ex.error_window),
    }
    d
}

impl Context {
    pub fn new(config: &ExperimentConfig) -> Result<Self, ExperimentError> {
        let ex = &config.experiment;
        let f0 = config.density.spec()?;
        let evaluator = build_kernel_evaluator(ex.kernel.mode_cutoff, ex.kernel.table_resolution)?;
        let c0 = hamiltonian_offset(&evaluator);
        let diagnostics = Diagnostics::new(diagnostics_for(config), evaluator.clone(), c0);
        let schedule = config.schedule()?;
        let mut cache: BTreeMap<u32, Arc<NoiseField>> = BTreeMap::new();
        let mut fields = Vec::new();
        for &n in &ex.n_values {
            let cutoff = config.noise.cutoff.cutoff(n);
            let field = match cache.get(&cutoff) {
                Some(f) => f.clone(),
                None => {
                    let theta = make_theta(cutoff, config.noise.profile)?;
                    let f = Arc::new(NoiseField::new(NoiseSpec::new(theta, config.noise.nu)?));
                    cache.insert(cutoff, f.clone());
                    f
                }
            };
            fields.push(field);
        }
        Ok(Context {
            config: config.clone(),
            f0,
            evaluator,
            diagnostics,
            schedule,
            fields,
            provenance: Provenance::new(ex.seed),
        })
    }

    pub fn c0(&self) -> f64 {
        self.diagnostics.c0
    }

    pub fn n_values(&self) -> &[usize] {
        &self.config.experiment.n_values
    }

    fn run_config(&self, level: usize, realization: usize) -> Result<RunConfig, ExperimentError> {
        Ok(RunConfig {
            f0: self.f0.clone(),
            n: self.n_values()[level],
            noise: self.fields[level].clone(),
            integrator: self.config.integrator_config()?,
            schedule: self.schedule.clone(),
            key: StreamKey::new(self.config.experiment.seed, realization as u64),
        })
    }
}

/// Per-record extras gathered while a realization runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extra {
    None,
    /// Pair histogram of the positions with this many cells per axis.
    PairHistogram(usize),
    /// Positions at every record.
    Positions,
}

#[derive(Debug, Clone)]
pub struct Realization {
    pub n: usize,
    pub index: usize,
    pub records: Vec<DiagnosticsRecord>,
    pub status: Completion,
    pub histograms: Vec<PairHistogram>,
    /// `(time, positions)` per record when requested.
    pub positions: Vec<(f64, Vec<vortexmf_core::torus::TorusPoint>)>,
}

impl Realization {
    pub fn is_complete(&self) -> bool {
        self.status.is_complete()
    }
}

/// All realizations of one particle number, in realization order.
#[derive(Debug, Clone)]
pub struct Level {
    pub n: usize,
    pub cutoff: u32,
    pub realizations: Vec<Realization>,
}

impl Level {
    pub fn complete(&self) -> impl Iterator<Item = &Realization> {
        self.realizations.iter().filter(|r| r.is_complete())
    }

    pub fn complete_count(&self) -> usize {
        self.complete().count()
    }

    pub fn is_complete(&self) -> bool {
        self.complete_count() == self.realizations.len()
    }
}

pub fn run_realization(ctx: &Context, level: usize, index: usize, extra: Extra) -> Result<Realization, ExperimentError> {
    let run = ctx.run_config(level, index)?;
    let mut histograms = Vec::new();
    let mut positions = Vec::new();
    let out = simulate(&run, &ctx.evaluator, &ctx.diagnostics, |rec, ens| match extra {
        Extra::None => {}
        Extra::PairHistogram(b) => {
            let mut h = PairHistogram::new(b);
            h.add_ensemble(&ens.positions);
            histograms.push(h);
        }
        Extra::Positions => positions.push((rec.time, ens.positions.clone())),
    })?;
    Ok(Realization {
        n: run.n,
        index,
        records: out.records,
        status: out.status,
        histograms,
        positions,
    })
}

/// Every realization of every particle number. Realizations run in parallel
/// on the current rayon pool; the result does not depend on its size.
pub fn run_ladder(ctx: &Context, extra: Extra) -> Result<Vec<Level>, ExperimentError> {
    let r = ctx.config.experiment.realizations;
    let jobs: Vec<(usize, usize)> = (0..ctx.n_values().len()).flat_map(|l| (0..r).map(move |i| (l, i))).collect();
    let done: Vec<Realization> = jobs
        .into_par_iter()
        .map(|(l, i)| run_realization(ctx, l, i, extra))
        .collect::<Result<_, _>>()?;
    let mut levels: Vec<Level> = ctx
        .n_values()
        .iter()
        .zip(&ctx.fields)
        .map(|(&n, f)| Level { n, cutoff: f.spec().theta().cutoff(), realizations: Vec::with_capacity(r) })
        .collect();
    for (j, real) in done.into_iter().enumerate() {
        levels[j / r].realizations.push(real);
    }
    Ok(levels)
}

fn bool_cell(b: bool) -> String {
    b.to_string()
}

/// Errors against the reference solution.
#[derive(Debug, Clone)]
pub struct ConvergenceSummary {
    /// `(N, aggregated RMS error, standard error, complete)`.
    pub aggregate: Vec<(usize, f64, f64, bool)>,
    pub check: crate::report::MonotoneCheck,
}

/// Reference mode values at the record times.
pub fn reference_modes(ctx: &Context, modes: &[Mode]) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let times = ctx.config.record_times()?;
    let recs = solve(&ctx.f0, &ctx.config.solver_config(), &times, modes)?;
    Ok(recs.into_iter().map(|r| r.values).collect())
}

fn error_modes(ctx: &Context) -> Vec<Mode> {
    vortexmf_core::basis::modes_in_disk(ctx.config.experiment.error_window)
}

fn mode_value(rec: &DiagnosticsRecord, k: Mode) -> f64 {
    rec.modes.iter().find(|(m, _)| *m == k).map(|p| p.1).expect("mode is recorded")
}

pub fn convergence(ctx: &Context, levels: &[Level], out: &mut Outputs) -> Result<ConvergenceSummary, ExperimentError> {
    let modes = error_modes(ctx);
    let reference = reference_modes(ctx, &modes)?;
    let times = ctx.config.record_times()?;
    let prov = &ctx.provenance;

    let mut pde = Table::with_provenance(&["t", "mode", "value"]);
    for (t, vals) in times.iter().zip(&reference) {
        for (k, v) in modes.iter().zip(vals) {
            let mut row = prov.cells("pde", 0);
            row.extend([fmt_f64(*t), k.label(), fmt_f64(*v)]);
            pde.push(row);
        }
    }

    let mut detail = Table::with_provenance(&["t", "mode", "pde", "mean", "rms_error"]);
    let mut agg = Table::with_provenance(&["cutoff", "complete", "rms_error", "se"]);
    let mut aggregate = Vec::new();
    for level in levels {
        let reals: Vec<&Realization> = level.complete().collect();
        let r = reals.len();
        let mut per_real = vec![0.0; r];
        for (j, t) in times.iter().enumerate() {
            for (m, &k) in modes.iter().enumerate() {
                let exact = reference[j][m];
                let mut sum = 0.0;
                let mut sq = 0.0;
                for (ri, real) in reals.iter().enumerate() {
                    let v = mode_value(&real.records[j], k);
                    sum += v;
                    let d2 = (v - exact).powi(2);
                    sq += d2;
                    per_real[ri] += d2;
                }
                let mut row = prov.cells(level.n, r);
                row.extend([
                    fmt_f64(*t),
                    k.label(),
                    fmt_f64(exact),
                    fmt_f64(sum / r as f64),
                    fmt_f64((sq / r as f64).sqrt()),
                ]);
                detail.push(row);
            }
        }
        let cells = (times.len() * modes.len()) as f64;
        for v in &mut per_real {
            *v /= cells;
        }
        let (mse, mse_se) = mean_and_se(&per_real);
        let rms = mse.sqrt();
        let se = mse_se / (2.0 * rms);
        let complete = level.is_complete();
        let mut row = prov.cells(level.n, r);
        row.extend([level.cutoff.to_string(), bool_cell(complete), fmt_f64(rms), fmt_f64(se)]);
        agg.push(row);
        aggregate.push((level.n, rms, se, complete));
    }
    let values: Vec<f64> = aggregate.iter().map(|a| a.1).collect();
    let ses: Vec<f64> = aggregate.iter().map(|a| a.2).collect();
    let check = monotone_decreasing(&values, &ses);
    let all_complete = aggregate.iter().all(|a| a.3);
    out.checks.push(Check::new(
        "all",
        ctx.config.experiment.realizations,
        "convergence_rms_decreasing_excess_se",
        check.worst_excess,
        1.0,
        check.pass && all_complete,
    ));
    out.add("pde_modes.csv", pde);
    out.add("convergence.csv", detail);
    out.add("convergence_aggregate.csv", agg);
    Ok(ConvergenceSummary { aggregate, check })
}

/// `16 pi^2 4 nu |k|^2 T`: the quadratic-variation bound times the maximal
/// inequality factor 4.
pub fn martingale_bound(nu: f64, k: Mode, t: f64) -> f64 {
    16.0 * PI * PI * 4.0 * nu * k.norm2() as f64 * t
}

#[derive(Debug, Clone)]
pub struct MartingaleSummary {
    /// Per mode: `(N, estimate, se)` along the ladder.
    pub estimates: Vec<(Mode, Vec<(usize, f64, f64)>)>,
    pub bounds: Vec<(Mode, f64)>,
}

impl MartingaleSummary {
    pub fn for_mode(&self, k: Mode) -> Option<&[(usize, f64, f64)]> {
        self.estimates.iter().find(|e| e.0 == k).map(|e| e.1.as_slice())
    }

    pub fn bound(&self, k: Mode) -> Option<f64> {
        self.bounds.iter().find(|b| b.0 == k).map(|b| b.1)
    }
}

pub fn martingale(ctx: &Context, levels: &[Level], out: &mut Outputs) -> MartingaleSummary {
    let prov = &ctx.provenance;
    let modes = ctx.diagnostics.config.martingale_modes();
    let t = ctx.config.experiment.t_final;
    let nu = ctx.config.noise.nu;
    let mut table = Table::with_provenance(&["cutoff", "mode", "estimate", "se", "bound", "qv_mean"]);
    let mut estimates = Vec::new();
    let mut bounds = Vec::new();
    for (m, &k) in modes.iter().enumerate() {
        let bound = martingale_bound(nu, k, t);
        let mut rows = Vec::new();
        for level in levels {
            let finals: Vec<_> = level
                .complete()
                .filter_map(|r| r.records.last().map(|rec| rec.martingale[m]))
                .collect();
            let sup: Vec<f64> = finals.iter().map(|v| v.sup_sq).collect();
            let qv: Vec<f64> = finals.iter().map(|v| v.qv).collect();
            let (est, se) = mean_and_se(&sup);
            let mut row = prov.cells(level.n, sup.len());
            row.extend([
                level.cutoff.to_string(),
                k.label(),
                fmt_f64(est),
                fmt_f64(se),
                fmt_f64(bound),
                fmt_f64(mean_and_se(&qv).0),
            ]);
            table.push(row);
            out.checks.push(Check::new(level.n, sup.len(), format!("martingale_{}_over_bound", k.label()), est / bound, 1.0, est <= bound));
            rows.push((level.n, est, se));
        }
        let values: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let ses: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let mono = monotone_decreasing(&values, &ses);
        out.checks.push(Check::new(
            "all",
            ctx.config.experiment.realizations,
            format!("martingale_{}_decreasing_excess_se", k.label()),
            mono.worst_excess,
            1.0,
            mono.pass,
        ));
        estimates.push((k, rows));
        bounds.push((k, bound));
    }
    out.add("martingale.csv", table);
    MartingaleSummary { estimates, bounds }
}

/// `(1 - 1/N) (c0 - int int G f0 (x) f0)`: the mean of `H_N` under i.i.d.
/// initial positions.
pub fn initial_hamiltonian_oracle(ctx: &Context, n: usize, pairing: f64) -> f64 {
    (1.0 - 1.0 / n as f64) * (ctx.c0() - pairing)
}

#[derive(Debug, Clone)]
pub struct HamiltonianSummary {
    /// `(N, initial mean, largest mean, oracle)`.
    pub levels: Vec<(usize, f64, f64, f64)>,
    /// Mean `H_N` per record, per level.
    pub series: Vec<(usize, Vec<(f64, f64)>)>,
}

pub fn hamiltonian(ctx: &Context, levels: &[Level], out: &mut Outputs) -> HamiltonianSummary {
    let prov = &ctx.provenance;
    let pairing = green_pairing_quadrature(&ctx.f0, &ctx.evaluator, QUADRATURE_GRID);
    let mut table = Table::with_provenance(&["t", "mean_h", "se", "mean_energy"]);
    let mut stats = Table::with_provenance(&["initial_mean", "max_mean", "growth", "oracle", "relative_error"]);
    let mut summary = HamiltonianSummary { levels: Vec::new(), series: Vec::new() };
    for level in levels {
        let reals: Vec<&Realization> = level.complete().collect();
        let r = reals.len();
        let records = reals.iter().map(|x| x.records.len()).min().unwrap_or(0);
        let mut series = Vec::new();
        for j in 0..records {
            let h: Vec<f64> = reals.iter().filter_map(|x| x.records[j].hamiltonian).collect();
            if h.is_empty() {
                continue;
            }
            let e: Vec<f64> = reals.iter().filter_map(|x| x.records[j].energy).collect();
            let t = reals[0].records[j].time;
            let (m, se) = mean_and_se(&h);
            let mut row = prov.cells(level.n, r);
            row.extend([fmt_f64(t), fmt_f64(m), fmt_f64(se), fmt_f64(mean_and_se(&e).0)]);
            table.push(row);
            series.push((t, m));
        }
        let Some(&(_, initial)) = series.first() else { continue };
        let max = series.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        let oracle = initial_hamiltonian_oracle(ctx, level.n, pairing);
        let rel = (initial / oracle - 1.0).abs();
        let growth = max / initial;
        let mut row = prov.cells(level.n, r);
        row.extend([fmt_f64(initial), fmt_f64(max), fmt_f64(growth), fmt_f64(oracle), fmt_f64(rel)]);
        stats.push(row);
        out.checks.push(Check::new(level.n, r, "hamiltonian_growth_ratio", growth, HAMILTONIAN_GROWTH, growth <= HAMILTONIAN_GROWTH));
        out.checks.push(Check::new(
            level.n,
            r,
            "hamiltonian_initial_relative_error",
            rel,
            HAMILTONIAN_TOLERANCE,
            rel <= HAMILTONIAN_TOLERANCE,
        ));
        summary.levels.push((level.n, initial, max, oracle));
        summary.series.push((level.n, series));
    }
    out.add("hamiltonian.csv", table);
    out.add("hamiltonian_summary.csv", stats);
    summary
}

/// `(N, radius, records checked, violations, largest statistic / bound)`.
pub type ConcentrationRow = (usize, f64, usize, usize, f64);

pub fn concentration(ctx: &Context, levels: &[Level], out: &mut Outputs) -> Vec<ConcentrationRow> {
    let prov = &ctx.provenance;
    let mut table = Table::with_provenance(&["radius", "records", "violations", "max_ratio"]);
    let mut rows = Vec::new();
    for level in levels {
        let r = level.complete_count();
        for &radius in &ctx.diagnostics.config.concentration_radii {
            let mut checked = 0;
            let mut violations = 0;
            let mut worst: f64 = 0.0;
            for rec in level.complete().flat_map(|x| &x.records) {
                let (Some(h), Some(&(_, stat))) =
                    (rec.hamiltonian, rec.concentration.iter().find(|c| c.0 == radius))
                else {
                    continue;
                };
                let bound = concentration_bound(level.n, h, radius);
                checked += 1;
                if !(stat <= bound) {
                    violations += 1;
                }
                worst = worst.max(stat / bound);
            }
            let mut row = prov.cells(level.n, r);
            row.extend([fmt_f64(radius), checked.to_string(), violations.to_string(), fmt_f64(worst)]);
            table.push(row);
            out.checks.push(Check::new(
                level.n,
                r,
                format!("concentration_r{}_violations", fmt_f64(radius)),
                violations as f64,
                0.0,
                violations == 0 && checked > 0,
            ));
            rows.push((level.n, radius, checked, violations, worst));
        }
    }
    out.add("concentration.csv", table);
    rows
}

/// Failed realizations, one row each.
pub fn failures(ctx: &Context, levels: &[Level], out: &mut Outputs) {
    let mut table = Table::with_provenance(&["realization", "step", "reason"]);
    for level in levels {
        for real in &level.realizations {
            if let Completion::Aborted { step, reason } = &real.status {
                let mut row = ctx.provenance.cells(level.n, level.realizations.len());
                row.extend([real.index.to_string(), step.to_string(), reason.clone()]);
                table.push(row);
            }
        }
    }
    if !table.rows.is_empty() {
        out.add("failures.csv", table);
    }
}

/// Everything derived from one ladder run.
#[derive(Debug, Clone)]
pub struct LadderReport {
    pub outputs: Outputs,
    pub convergence: Option<ConvergenceSummary>,
    pub martingale: Option<MartingaleSummary>,
    pub hamiltonian: Option<HamiltonianSummary>,
    pub concentration: Vec<ConcentrationRow>,
}

/// Run the ladder and build the tables for `converge`, `martingale` or
/// `hamiltonian`. `converge` produces all of them.
pub fn run_convergence(ctx: &Context) -> Result<LadderReport, ExperimentError> {
    let kind = ctx.config.experiment.kind;
    if !matches!(kind, Kind::Converge | Kind::Martingale | Kind::Hamiltonian) {
        return Err(ExperimentError::WrongKind(kind));
    }
    let levels = run_ladder(ctx, Extra::None)?;
    let mut out = Outputs::default();
    let mut report = LadderReport {
        outputs: Outputs::default(),
        convergence: None,
        martingale: None,
        hamiltonian: None,
        concentration: Vec::new(),
    };
    if kind == Kind::Converge {
        report.convergence = Some(convergence(ctx, &levels, &mut out)?);
    }
    if matches!(kind, Kind::Converge | Kind::Martingale) {
        report.martingale = Some(martingale(ctx, &levels, &mut out));
    }
    if matches!(kind, Kind::Converge | Kind::Hamiltonian) {
        report.hamiltonian = Some(hamiltonian(ctx, &levels, &mut out));
        report.concentration = concentration(ctx, &levels, &mut out);
    }
    failures(ctx, &levels, &mut out);
    report.outputs = out;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct EntropyReport {
    pub outputs: Outputs,
    /// Per level: `(N, [(t, h2_hat)], oracle)`.
    pub series: Vec<(usize, Vec<(f64, f64)>, f64)>,
}

/// Pooled pair-entropy estimate at every record against the binned entropy
/// of `f0`.
pub fn run_entropy(ctx: &Context) -> Result<EntropyReport, ExperimentError> {
    let kind = ctx.config.experiment.kind;
    if kind != Kind::Entropy {
        return Err(ExperimentError::WrongKind(kind));
    }
    let bins = ctx.config.experiment.entropy_bins;
    let levels = run_ladder(ctx, Extra::PairHistogram(bins))?;
    let oracle = ctx.f0.binned_entropy(bins);
    let mut out = Outputs::default();
    let mut table = Table::with_provenance(&["t", "h2_hat", "samples", "bins", "oracle"]);
    let mut series = Vec::new();
    for level in &levels {
        let reals: Vec<&Realization> = level.complete().collect();
        let r = reals.len();
        let records = reals.iter().map(|x| x.histograms.len()).min().unwrap_or(0);
        let mut s = Vec::new();
        for j in 0..records {
            let mut pooled = PairHistogram::new(bins);
            for x in &reals {
                pooled.merge(&x.histograms[j])?;
            }
            let h = entropy2_estimate(&pooled)?;
            let t = reals[0].records[j].time;
            let mut row = ctx.provenance.cells(level.n, r);
            row.extend([fmt_f64(t), fmt_f64(h), pooled.total().to_string(), bins.to_string(), fmt_f64(oracle)]);
            table.push(row);
            s.push((t, h));
        }
        if let Some(&(_, h0)) = s.first() {
            let rel = (h0 / oracle - 1.0).abs();
            out.checks.push(Check::new(
                level.n,
                r,
                "entropy_initial_relative_error",
                rel,
                ENTROPY_ORACLE_TOLERANCE,
                rel <= ENTROPY_ORACLE_TOLERANCE,
            ));
            let excess = s.iter().map(|p| p.1 - h0).fold(f64::NEG_INFINITY, f64::max);
            out.checks.push(Check::new(level.n, r, "entropy_max_excess", excess, ENTROPY_TOLERANCE, excess <= ENTROPY_TOLERANCE));
        }
        series.push((level.n, s, oracle));
    }
    out.add("entropy.csv", table);
    failures(ctx, &levels, &mut out);
    Ok(EntropyReport { outputs: out, series })
}

#[derive(Debug, Clone)]
pub struct MomentReport {
    pub outputs: Outputs,
    /// Per level: `(N, scan)`.
    pub scans: Vec<(usize, MomentScan)>,
}

/// Fourth moments of the increments of one mode against the lag.
pub fn run_moments(ctx: &Context) -> Result<MomentReport, ExperimentError> {
    let ex = &ctx.config.experiment;
    if ex.kind != Kind::Moments {
        return Err(ExperimentError::WrongKind(ex.kind));
    }
    let k = Mode::new(ex.moment_mode[0], ex.moment_mode[1]);
    let levels = run_ladder(ctx, Extra::None)?;
    let mut out = Outputs::default();
    let mut table = Table::with_provenance(&["mode", "lag", "tau", "moment"]);
    let mut slopes = Table::with_provenance(&["mode", "slope"]);
    let mut scans = Vec::new();
    let dt = ctx.config.integrator.dt;
    for level in &levels {
        let series: Vec<Vec<f64>> = level
            .complete()
            .map(|x| x.records.iter().map(|rec| mode_value(rec, k)).collect())
            .collect();
        let r = series.len();
        let scan = increment_moment_scan(&series, &ex.moment_lags)?;
        for (&lag, &m) in scan.lags.iter().zip(&scan.moments) {
            let mut row = ctx.provenance.cells(level.n, r);
            row.extend([k.label(), lag.to_string(), fmt_f64(lag as f64 * dt), fmt_f64(m)]);
            table.push(row);
        }
        let slope = scan.slope.unwrap_or(f64::NAN);
        let mut row = ctx.provenance.cells(level.n, r);
        row.extend([k.label(), fmt_f64(slope)]);
        slopes.push(row);
        let pass = (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&slope);
        out.checks.push(Check::new(level.n, r, format!("moment_slope_{}", k.label()), slope, SLOPE_RANGE.1, pass));
        scans.push((level.n, scan));
    }
    out.add("moments.csv", table);
    out.add("moment_slopes.csv", slopes);
    failures(ctx, &levels, &mut out);
    Ok(MomentReport { outputs: out, scans })
}

fn diagnostics_header(d: &DiagnosticsConfig) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(d.recorded_modes().iter().map(|k| format!("mode_{}", k.label())));
    if d.hamiltonian {
        h.push("H_N".into());
        h.push("energy".into());
    }
    h.extend(d.sobolev_orders.iter().map(|s| format!("hnorm_s{}", fmt_f64(*s))));
    h.extend(d.concentration_radii.iter().map(|r| format!("conc_r{}", fmt_f64(*r))));
    for k in d.martingale_modes() {
        h.push(format!("M_{}", k.label()));
    }
    for k in d.martingale_modes() {
        h.push(format!("qv_{}", k.label()));
    }
    h.push("min_dist".into());
    h
}

/// One `diagnostics_<rid>.csv` table.
pub fn diagnostics_table(ctx: &Context, real: &Realization) -> Table {
    let d = &ctx.diagnostics.config;
    let mut t = Table::with_provenance(&diagnostics_header(d));
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for rec in &real.records {
        let mut row = ctx.provenance.cells(real.n, real.index);
        row.push(fmt_f64(rec.time));
        row.extend(rec.modes.iter().map(|m| fmt_f64(m.1)));
        if d.hamiltonian {
            row.push(opt(rec.hamiltonian));
            row.push(opt(rec.energy));
        }
        row.extend(rec.hminus.iter().map(|v| fmt_f64(v.1)));
        row.extend(rec.concentration.iter().map(|v| fmt_f64(v.1)));
        row.extend(rec.martingale.iter().map(|m| fmt_f64(m.value)));
        row.extend(rec.martingale.iter().map(|m| fmt_f64(m.qv)));
        row.push(fmt_f64(rec.min_pair_distance));
        t.push(row);
    }
    t
}

pub fn trajectory_table(ctx: &Context, real: &Realization) -> Table {
    let mut t = Table::with_provenance(&["t", "particle", "x1", "x2"]);
    for (time, pos) in &real.positions {
        for (i, p) in pos.iter().enumerate() {
            let mut row = ctx.provenance.cells(real.n, real.index);
            row.extend([fmt_f64(*time), i.to_string(), fmt_f64(p.x1()), fmt_f64(p.x2())]);
            t.push(row);
        }
    }
    t
}

/// Realization id used in file names.
pub fn rid(n: usize, index: usize) -> String {
    format!("n{n}_r{index}")
}

/// Per-realization diagnostics (and optionally trajectories) for every `N`
/// and realization.
pub fn run_simulate(ctx: &Context) -> Result<Outputs, ExperimentError> {
    let ex = &ctx.config.experiment;
    if ex.kind != Kind::Simulate {
        return Err(ExperimentError::WrongKind(ex.kind));
    }
    let extra = if ex.trajectories { Extra::Positions } else { Extra::None };
    let levels = run_ladder(ctx, extra)?;
    let mut out = Outputs::default();
    for level in &levels {
        for real in &level.realizations {
            let id = rid(level.n, real.index);
            out.add(format!("diagnostics_{id}.csv"), diagnostics_table(ctx, real));
            if ex.trajectories {
                out.add(format!("trajectory_{id}.csv"), trajectory_table(ctx, real));
            }
        }
    }
    failures(ctx, &levels, &mut out);
    Ok(out)
}

/// Reference solution modes at the record times.
pub fn run_solve(config: &ExperimentConfig) -> Result<Outputs, ExperimentError> {
    let ex = &config.experiment;
    if ex.kind != Kind::Solve {
        return Err(ExperimentError::WrongKind(ex.kind));
    }
    let f0 = config.density.spec()?;
    let modes = vortexmf_core::basis::modes_in_disk(ex.error_window);
    let times = config.record_times()?;
    let recs = solve(&f0, &config.solver_config(), &times, &modes)?;
    let prov = Provenance::new(ex.seed);
    let mut header = vec!["t".to_string()];
    header.extend(modes.iter().map(|k| format!("mode_{}", k.label())));
    let mut t = Table::with_provenance(&header);
    for rec in recs {
        let mut row = prov.cells("pde", 0);
        row.push(fmt_f64(rec.time));
        row.extend(rec.values.iter().map(|v| fmt_f64(*v)));
        t.push(row);
    }
    let mut out = Outputs::default();
    out.add("pde_modes.csv", t);
    Ok(out)
}

/// Series for the optional plots.
#[derive(Debug, Clone, Default)]
pub struct PlotData {
    pub error_vs_n: Vec<(f64, f64)>,
    pub martingale_vs_n: Vec<(f64, f64)>,
    pub hamiltonian_vs_t: Vec<(usize, Vec<(f64, f64)>)>,
}

impl LadderReport {
    pub fn plot_data(&self) -> PlotData {
        let mut p = PlotData::default();
        if let Some(c) = &self.convergence {
            p.error_vs_n = c.aggregate.iter().map(|a| (a.0 as f64, a.1)).collect();
        }
        if let Some(m) = &self.martingale {
            if let Some((_, rows)) = m.estimates.first() {
                p.martingale_vs_n = rows.iter().map(|r| (r.0 as f64, r.1)).collect();
            }
        }
        if let Some(h) = &self.hamiltonian {
            p.hamiltonian_vs_t = h.series.clone();
        }
        p
    }
}
