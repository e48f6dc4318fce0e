//! Config-driven experiment runner for POMDP off-policy evaluation.

pub mod config;
pub mod report;
pub mod run;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub use config::{load_experiment, Experiment, ExperimentConfig};
pub use run::{DynamicsRow, ResultRow};

/// Files written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub dynamics: Option<Vec<DynamicsRow>>,
    pub report: String,
    pub dir: PathBuf,
}

/// Sweep, diagnostics and (if configured) dynamics; writes `results.csv`,
/// `results.jsonl` and `report.md` into `out`.
pub fn run_experiment(exp: &Experiment, out: &Path, with_dynamics: bool) -> Result<RunOutput> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let diag = run::diagnose(exp);
    let hash = run::diagnostics_hash(&diag);
    let rows = run::sweep(exp, &hash);
    let dynamics = if with_dynamics && exp.config.dynamics.is_some() {
        Some(run::dynamics(exp)?)
    } else {
        None
    };
    run::write_csv(&rows, &out.join("results.csv"))?;
    run::write_jsonl(&rows, &out.join("results.jsonl"))?;
    if let Some(d) = &dynamics {
        run::write_jsonl(d, &out.join("dynamics.jsonl"))?;
    }
    let title = exp.config.name.clone().unwrap_or_else(|| "experiment".into());
    let report = report::render(
        &title,
        &rows,
        diag.as_ref().map_err(|e| format!("{e:#}")),
        dynamics.as_deref(),
    );
    fs::write(out.join("report.md"), &report)?;
    Ok(RunOutput {
        rows,
        dynamics,
        report,
        dir: out.to_path_buf(),
    })
}

/// A rayon pool of `jobs` threads (all cores when `None`).
pub fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j.max(1));
    }
    Ok(b.build()?)
}
