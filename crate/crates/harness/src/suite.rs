//! Directory-wide runs with golden comparisons.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::{ExperimentConfig, GoldenSpec};
use crate::experiments::{run, RunEnv};
use crate::output::{RunOutput, RunStamp, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Regression,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Regression => 1,
            Status::Error => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mismatch {
    pub column: String,
    pub rows: Vec<usize>,
    pub max_deviation: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config: String,
    pub id: String,
    pub status: Status,
    pub message: String,
    pub mismatches: Vec<Mismatch>,
    pub flags: Vec<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteReport {
    pub runs: Vec<RunReport>,
}

impl SuiteReport {
    pub fn status(&self) -> Status {
        self.runs.iter().map(|r| r.status).max().unwrap_or(Status::Ok)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.runs {
            s.push_str(&format!("{:?} {} ({:.1}s) {}\n", r.status, r.id, r.seconds, r.message));
            for m in &r.mismatches {
                s.push_str(&format!(
                    "  column {} rows {:?}: deviation {:e} > {:e}\n",
                    m.column, m.rows, m.max_deviation, m.tolerance
                ));
            }
            for f in &r.flags {
                s.push_str(&format!("  flag: {f}\n"));
            }
        }
        s.push_str(&format!("{} runs, status {:?}\n", self.runs.len(), self.status()));
        s
    }
}

/// Writes a run's artifacts and stamp under `dir`.
pub fn write_run(cfg: &ExperimentConfig, env: &RunEnv, out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let stamp = RunStamp {
        id: cfg.id.clone(),
        experiment: cfg.experiment.name().into(),
        config_hash: cfg.hash(),
        seed: env.seed.unwrap_or(cfg.seeds[0]),
        version: env!("CARGO_PKG_VERSION").into(),
        artifacts: vec![],
        flags: vec![],
        notes: vec![],
    };
    out.write(dir, stamp)
}

/// Compares `actual` with `golden`; numeric cells use `|a - g| <= tol max(1, |g|)`.
pub fn compare_tables(actual: &Table, golden: &Table, spec: &GoldenSpec) -> Result<Vec<Mismatch>> {
    if actual.rows.len() != golden.rows.len() {
        bail!("row count {} differs from golden {}", actual.rows.len(), golden.rows.len());
    }
    let mut out = Vec::new();
    for (gk, name) in golden.columns.iter().enumerate() {
        let Some(ak) = actual.col(name) else {
            bail!("column '{name}' missing from output");
        };
        let tol = spec.tolerances.get(name).copied().unwrap_or(spec.default_tolerance);
        let mut rows = Vec::new();
        let mut worst = 0.0f64;
        for (i, (a, g)) in actual.rows.iter().zip(&golden.rows).enumerate() {
            let (a, g) = (&a[ak], &g[gk]);
            match (a.as_f64(), g.as_f64()) {
                (Some(x), Some(y)) => {
                    let dev = if x == y { 0.0 } else { (x - y).abs() / y.abs().max(1.0) };
                    if dev > tol || dev.is_nan() {
                        rows.push(i);
                        worst = worst.max(if dev.is_nan() { f64::INFINITY } else { dev });
                    }
                }
                _ => {
                    if a.render() != g.render() {
                        rows.push(i);
                        worst = f64::INFINITY;
                    }
                }
            }
        }
        if !rows.is_empty() {
            out.push(Mismatch {
                column: name.clone(),
                rows,
                max_deviation: worst,
                tolerance: tol,
            });
        }
    }
    Ok(out)
}

fn run_one(path: &Path, root: &Path, env: &RunEnv) -> RunReport {
    let started = std::time::Instant::now();
    let mut report = RunReport {
        config: path.display().to_string(),
        id: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        status: Status::Error,
        message: String::new(),
        mismatches: vec![],
        flags: vec![],
        seconds: 0.0,
    };
    let result = (|| -> Result<(Status, String)> {
        let cfg = ExperimentConfig::load(path)?;
        report.id = cfg.id.clone();
        let out = run(&cfg, env)?;
        write_run(&cfg, env, &out, &cfg.output_path(root))?;
        report.flags = out.flags.clone();
        let mut status = if out.flags.is_empty() { Status::Ok } else { Status::Regression };
        let mut message = String::from("ok");
        if let Some(g) = &cfg.golden {
            let base = path.parent().unwrap_or(Path::new("."));
            let golden = Table::read_csv(&base.join(&g.file))?;
            let actual = out
                .table(&g.artifact)
                .with_context(|| format!("no artifact table '{}'", g.artifact))?;
            report.mismatches = compare_tables(actual, &golden, g)?;
            if !report.mismatches.is_empty() {
                status = Status::Regression;
                message = format!("{} column(s) differ from {}", report.mismatches.len(), g.file);
            }
        }
        if !report.flags.is_empty() && report.mismatches.is_empty() {
            message = format!("{} flag(s) raised", report.flags.len());
        }
        Ok((status, message))
    })();
    match result {
        Ok((s, m)) => {
            report.status = s;
            report.message = m;
        }
        Err(e) => {
            report.status = Status::Error;
            report.message = format!("{e:#}");
        }
    }
    report.seconds = started.elapsed().as_secs_f64();
    report
}

/// Runs every `*.toml` in `dir` on `threads` workers; reports keep file order.
pub fn run_suite(dir: &Path, root: &Path, env: &RunEnv, threads: usize) -> Result<SuiteReport> {
    let mut configs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    configs.sort();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunReport>>> = Mutex::new(vec![None; configs.len()]);
    std::thread::scope(|s| {
        for _ in 0..threads.max(1).min(configs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let r = run_one(&configs[i], root, env);
                env_log(env, &r);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let runs = slots.into_inner().unwrap().into_iter().map(|r| r.expect("every slot filled")).collect();
    Ok(SuiteReport { runs })
}

fn env_log(env: &RunEnv, r: &RunReport) {
    if env.verbose {
        eprintln!("{:?} {} ({:.1}s)", r.status, r.id, r.seconds);
    }
}
