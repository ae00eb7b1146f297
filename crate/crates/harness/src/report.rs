//! CSV tables with provenance columns.

use std::path::{Path, PathBuf};

use serde::Serialize;

/// Build identifier baked in at compile time (`git describe` when available).
pub const BUILD_ID: &str = env!("VORTEXMF_BUILD_ID");

/// Columns every report row starts with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub build: String,
}

impl Provenance {
    pub fn new(seed: u64) -> Self {
        Provenance { seed, build: BUILD_ID.to_string() }
    }

    /// `N, R, seed, build` cells; `n` may be a number or a label such as `all`.
    pub fn cells(&self, n: impl ToString, r: usize) -> Vec<String> {
        vec![n.to_string(), r.to_string(), self.seed.to_string(), self.build.clone()]
    }
}

pub const PROVENANCE_COLUMNS: [&str; 4] = ["N", "R", "seed", "build"];

/// Shortest round-trip text for `v`, in scientific notation outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// An in-memory CSV table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Table whose header starts with the provenance columns.
    pub fn with_provenance<S: AsRef<str>>(columns: &[S]) -> Self {
        let mut header: Vec<String> = PROVENANCE_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(columns.iter().map(|c| c.as_ref().to_string()));
        Table { header, rows: Vec::new() }
    }

    pub fn plain<S: AsRef<str>>(columns: &[S]) -> Self {
        Table { header: columns.iter().map(|c| c.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_csv())
    }
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    /// Particle number, or `all` for checks across the ladder.
    pub n: String,
    pub realizations: usize,
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(n: impl ToString, realizations: usize, metric: impl Into<String>, value: f64, threshold: f64, pass: bool) -> Self {
        Check { n: n.to_string(), realizations, metric: metric.into(), value, threshold, pass }
    }
}

pub fn summary_table(prov: &Provenance, checks: &[Check]) -> Table {
    let mut t = Table::with_provenance(&["metric", "value", "threshold", "pass"]);
    for c in checks {
        let mut row = prov.cells(&c.n, c.realizations);
        row.extend([c.metric.clone(), fmt_f64(c.value), fmt_f64(c.threshold), c.pass.to_string()]);
        t.push(row);
    }
    t
}

/// Named tables plus summary checks produced by one command.
#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub tables: Vec<(String, Table)>,
    pub checks: Vec<Check>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, table: Table) {
        self.tables.push((name.into(), table));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Write every table and `summary.csv` into `dir`; returns the paths.
    pub fn write(&self, dir: &Path, prov: &Provenance) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for (name, t) in &self.tables {
            let p = dir.join(name);
            t.write(&p)?;
            paths.push(p);
        }
        if !self.checks.is_empty() {
            let p = dir.join("summary.csv");
            summary_table(prov, &self.checks).write(&p)?;
            paths.push(p);
        }
        Ok(paths)
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Result of a "decreasing along the ladder" check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneCheck {
    /// Adjacent pairs where the value went up.
    pub inversions: usize,
    /// Largest increase measured in standard errors.
    pub worst_excess: f64,
    pub pass: bool,
}

/// Values should decrease; one increase is tolerated when it is within one
/// standard error (the larger of the two estimates' errors).
pub fn monotone_decreasing(values: &[f64], standard_errors: &[f64]) -> MonotoneCheck {
    let mut inversions = 0;
    let mut within = true;
    let mut worst: f64 = 0.0;
    for i in 1..values.len() {
        let rise = values[i] - values[i - 1];
        if rise >= 0.0 {
            inversions += 1;
            let se = standard_errors[i].max(standard_errors[i - 1]);
            let excess = if se > 0.0 { rise / se } else { f64::INFINITY };
            worst = worst.max(excess);
            if !(rise <= se) {
                within = false;
            }
        }
    }
    MonotoneCheck { inversions, worst_excess: worst, pass: inversions == 0 || (inversions == 1 && within) }
}

/// Mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
