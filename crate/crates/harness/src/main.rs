use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use vortexmf::config::{load_config, write_echo, ExperimentConfig, Kind};
use vortexmf::experiments::{self, Context, PlotData};
use vortexmf::plot::write_plots;
use vortexmf::report::{Outputs, Provenance, BUILD_ID};
use vortexmf::validate;
use vortexmf_core::kernel::build_kernel_evaluator;

#[derive(Debug, Parser)]
#[command(name = "vortexmf", version, about = "Point-vortex mean-field experiments on the unit torus")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write plots/*.svg.
    #[arg(long, global = true)]
    plots: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare the kernel evaluator with the series oracle and the near-origin asymptote.
    ValidateKernel {
        #[arg(long, default_value_t = 64)]
        cutoff: usize,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check isotropy, the noise scaling identity and the covariance decay.
    ValidateNoise {
        #[arg(long, default_value_t = 64)]
        cutoff: u32,
        #[arg(long, default_value_t = 0.05)]
        nu: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check the reference solver against exact decay, refinement and the kernel.
    ValidateNs {
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Per-realization diagnostics.
    Simulate,
    /// Errors against the reference solution along the particle ladder.
    Converge,
    /// Martingale second moments along the particle ladder.
    Martingale,
    /// Hamiltonian statistics and the concentration check.
    Hamiltonian,
    /// Pooled pair-entropy series.
    Entropy,
    /// Increment fourth moments against the lag.
    Moments,
    /// Reference solution modes.
    Solve,
}

impl Command {
    fn kind(&self) -> Option<Kind> {
        Some(match self {
            Command::Simulate => Kind::Simulate,
            Command::Converge => Kind::Converge,
            Command::Martingale => Kind::Martingale,
            Command::Hamiltonian => Kind::Hamiltonian,
            Command::Entropy => Kind::Entropy,
            Command::Moments => Kind::Moments,
            Command::Solve => Kind::Solve,
            _ => return None,
        })
    }
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    build: &'a str,
    threads: usize,
    wall_seconds: f64,
    all_pass: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => return fail(&format!("cannot start {threads} worker threads: {e}")),
    };
    match pool.install(|| run(&cli, threads)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => fail(&msg),
    }
}

fn fail(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn run(cli: &Cli, threads: usize) -> Result<bool, String> {
    let start = Instant::now();
    let (name, out_dir, outputs, prov, plots) = match &cli.command {
        Command::ValidateKernel { cutoff, resolution, report } => {
            let v = validate::validate_kernel(*cutoff, *resolution).map_err(|e| e.to_string())?;
            let dir = plain_out(cli);
            let mut o = validate::kernel_outputs(&v);
            redirect(&mut o, report.as_deref())?;
            ("validate-kernel", dir, o, Provenance::new(cli.seed.unwrap_or(0)), PlotData::default())
        }
        Command::ValidateNoise { cutoff, nu, points, report } => {
            let v = validate::validate_noise(*cutoff, *nu, *points).map_err(|e| e.to_string())?;
            let dir = plain_out(cli);
            let mut o = validate::noise_outputs(&v);
            redirect(&mut o, report.as_deref())?;
            ("validate-noise", dir, o, Provenance::new(cli.seed.unwrap_or(0)), PlotData::default())
        }
        Command::ValidateNs { report } => {
            let ev = build_kernel_evaluator(64, 256).map_err(|e| e.to_string())?;
            let v = validate::validate_ns(&ev).map_err(|e| e.to_string())?;
            let dir = plain_out(cli);
            let mut o = validate::ns_outputs(&v);
            redirect(&mut o, report.as_deref())?;
            ("validate-ns", dir, o, Provenance::new(cli.seed.unwrap_or(0)), PlotData::default())
        }
        cmd => {
            let kind = cmd.kind().expect("experiment command");
            let cfg = experiment_config(cli, kind)?;
            let dir = cfg.output_dir(cli.out.as_deref());
            write_echo(&cfg, &dir).map_err(|e| e.to_string())?;
            let prov = Provenance::new(cfg.experiment.seed);
            let (o, plots) = run_experiment(&cfg).map_err(|e| e.to_string())?;
            (kind.name(), dir, o, prov, plots)
        }
    };
    let paths = outputs.write(&out_dir, &prov).map_err(|e| format!("{}: {e}", out_dir.display()))?;
    if cli.plots {
        let written = write_plots(&out_dir, &plots).map_err(|e| format!("plots: {e}"))?;
        for p in written {
            println!("wrote {}", p.display());
        }
    }
    for p in &paths {
        println!("wrote {}", p.display());
    }
    for c in &outputs.checks {
        println!(
            "{} N={} {} = {} (threshold {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.n,
            c.metric,
            c.value,
            c.threshold
        );
    }
    let info = RunInfo {
        command: name,
        build: BUILD_ID,
        threads,
        wall_seconds: start.elapsed().as_secs_f64(),
        all_pass: outputs.all_pass(),
    };
    let json = serde_json::to_string_pretty(&info).expect("serializable") + "\n";
    std::fs::write(out_dir.join("run_info.json"), json).map_err(|e| e.to_string())?;
    Ok(outputs.all_pass())
}

fn plain_out(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// Write validation tables to `report` when given instead of the output directory.
fn redirect(o: &mut Outputs, report: Option<&Path>) -> Result<(), String> {
    if let Some(path) = report {
        for (_, t) in o.tables.drain(..) {
            t.write(path).map_err(|e| format!("{}: {e}", path.display()))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn experiment_config(cli: &Cli, kind: Kind) -> Result<ExperimentConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path).map_err(|e| e.to_string())?,
        None => ExperimentConfig::minimal(kind, cli.seed.unwrap_or(0)),
    };
    if cfg.experiment.kind != kind {
        return Err(format!("configuration is for {} runs, not {kind}", cfg.experiment.kind));
    }
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn run_experiment(cfg: &ExperimentConfig) -> Result<(Outputs, PlotData), experiments::ExperimentError> {
    if cfg.experiment.kind == Kind::Solve {
        return Ok((experiments::run_solve(cfg)?, PlotData::default()));
    }
    let ctx = Context::new(cfg)?;
    Ok(match cfg.experiment.kind {
        Kind::Simulate => (experiments::run_simulate(&ctx)?, PlotData::default()),
        Kind::Entropy => (experiments::run_entropy(&ctx)?.outputs, PlotData::default()),
        Kind::Moments => (experiments::run_moments(&ctx)?.outputs, PlotData::default()),
        _ => {
            let rep = experiments::run_convergence(&ctx)?;
            let plots = rep.plot_data();
            (rep.outputs, plots)
        }
    })
}
