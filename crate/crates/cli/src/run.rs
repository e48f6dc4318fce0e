//! Estimator execution over the `n_grid x seeds` product, diagnostics and
//! dynamics, and result files.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use pomdp_ope::data::{generate_tabular_dataset, OfflineDataset};
use pomdp_ope::diagnostics::{condition_report, ConditionReport};
use pomdp_ope::dynamics::{
    estimate_dynamics_moments, minimax_dynamics, population_dynamics_moments, spectral_conditional_distribution,
    spectral_joint_probability, DynamicsMoments, DynamicsScale,
};
use pomdp_ope::estimators::{
    compute_moments, finite_horizon_linear, lstd_value, minimax_linear, minimax_rkhs, sample_tabular_trajectories,
    sis_estimate, EstimatorConfig, LstdSample, MomentSet, RkhsKernels,
};
use pomdp_ope::features::{CurrentObservation, HistoryFeatures, Kernel, OneHotFbar, OneHotHistory};
use pomdp_ope::model::oracle::{
    exact_finite_horizon_value, exact_policy_value, initial_augmented_distribution, joint_sequence_probability,
    predictive_distribution,
};
use pomdp_ope::model::{InitSpec, MemoryPolicy, TabularPolicy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{EstimatorSpec, Experiment, HistoryFeatureKind, KernelSpec};

/// Stream offset for SIS trajectories so they never share a seed with the
/// tuple dataset of the same cell.
const SIS_SEED_OFFSET: u64 = 0x5157_0000_0000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: String,
    pub n: usize,
    pub seed: u64,
    pub j_hat: Option<f64>,
    pub j_true: Option<f64>,
    pub abs_error: Option<f64>,
    /// `|j_hat - reference|` for equivalence rows.
    pub reference_diff: Option<f64>,
    pub diagnostics_hash: String,
    /// `ok`, or the error that stopped this estimator.
    pub status: String,
    pub runtime_ms: f64,
}

/// The CSV projection of a row: everything but the wall-clock runtime,
/// so identical configs give byte-identical files.
#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    estimator: &'a str,
    n: usize,
    seed: u64,
    j_hat: Option<f64>,
    j_true: Option<f64>,
    abs_error: Option<f64>,
    reference_diff: Option<f64>,
    diagnostics_hash: &'a str,
    status: &'a str,
}

pub const CSV_COLUMNS: [(&str, &str); 9] = [
    ("estimator", "estimator name"),
    ("n", "number of transition tuples (trajectories for sis)"),
    ("seed", "data seed"),
    ("j_hat", "estimated policy value"),
    ("j_true", "oracle value, when available"),
    ("abs_error", "|j_hat - j_true|"),
    ("reference_diff", "equivalence rows: |j_hat - reference estimate|"),
    ("diagnostics_hash", "sha256 of the population diagnostics JSON"),
    ("status", "ok, or the per-row error message"),
];

impl ResultRow {
    fn new(estimator: &str, n: usize, seed: u64, hash: &str) -> Self {
        ResultRow {
            estimator: estimator.to_string(),
            n,
            seed,
            j_hat: None,
            j_true: None,
            abs_error: None,
            reference_diff: None,
            diagnostics_hash: hash.to_string(),
            status: "ok".into(),
            runtime_ms: 0.0,
        }
    }

    fn finish(mut self, outcome: Result<(f64, Option<f64>)>, truth: Option<f64>, start: Instant) -> Self {
        self.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Ok((j, reference)) => {
                self.j_hat = Some(j);
                self.j_true = truth;
                self.abs_error = truth.map(|t| (j - t).abs());
                self.reference_diff = reference.map(|r| (j - r).abs());
            }
            Err(e) => self.status = format!("error: {e:#}"),
        }
        self
    }
}

/// Oracle values shared by all cells.
#[derive(Debug, Clone, Copy)]
struct Truth {
    discounted: Option<f64>,
}

fn truth(exp: &Experiment) -> Truth {
    let v = initial_augmented_distribution(&exp.model, &exp.behavior)
        .and_then(|nu| exact_policy_value(&exp.model, &exp.evaluation, &nu));
    Truth { discounted: v.ok() }
}

fn finite_truth(exp: &Experiment, horizon: usize) -> Option<f64> {
    initial_augmented_distribution(&exp.model, &exp.behavior)
        .and_then(|nu| exact_finite_horizon_value(&exp.model, &exp.evaluation, &nu, horizon))
        .ok()
}

fn history_features(exp: &Experiment) -> Result<Box<dyn HistoryFeatures<usize, usize> + Sync>> {
    Ok(match exp.config.history_features {
        HistoryFeatureKind::OneHot => Box::new(OneHotHistory::new(exp.model.alphabet(), exp.config.window.m_h)?),
        HistoryFeatureKind::CurrentObservation => Box::new(CurrentObservation { n_obs: exp.model.n_obs }),
    })
}

fn fbar_features(exp: &Experiment) -> Result<OneHotFbar> {
    Ok(OneHotFbar::new(exp.model.alphabet(), exp.config.window.m, exp.config.window.m_f)?)
}

/// Population diagnostics and the hash stamped on every row.
pub fn diagnose(exp: &Experiment) -> Result<ConditionReport> {
    Ok(condition_report(&exp.model, &exp.behavior, &exp.evaluation, exp.config.window)?)
}

pub fn diagnostics_hash(report: &Result<ConditionReport>) -> String {
    match report {
        Ok(r) => {
            let json = serde_json::to_vec(r).expect("diagnostics serialize");
            hex::encode(Sha256::digest(json))
        }
        Err(_) => "unavailable".into(),
    }
}

pub fn simulate(exp: &Experiment, n: usize, seed: u64) -> Result<OfflineDataset> {
    let pb: MemoryPolicy = exp.behavior.clone().into();
    let n_init = exp.config.n_init.unwrap_or(n);
    Ok(generate_tabular_dataset(
        &exp.model,
        &pb,
        n,
        n_init,
        exp.config.window,
        exp.config.generation_mode,
        seed,
    )?)
}

fn policy_rows(p: &TabularPolicy) -> Vec<Vec<f64>> {
    (0..p.n_obs).map(|o| p.row(0, o).to_vec()).collect()
}

/// Observation index of each state when emissions are a permutation.
fn revealed_states(exp: &Experiment) -> Result<()> {
    let m = &exp.model;
    let w = exp.config.window;
    if m.n_obs != m.n_states || w.m != 0 || w.m_f != 1 {
        bail!("lstd needs a fully observed model (|O| = |S|) with m = 0 and m_f = 1");
    }
    let mut seen = vec![false; m.n_obs];
    for row in &m.emission {
        let hits: Vec<usize> = (0..m.n_obs).filter(|&o| row[o] == 1.0).collect();
        if hits.len() != 1 || seen[hits[0]] {
            bail!("lstd needs deterministic, one-to-one emissions");
        }
        seen[hits[0]] = true;
    }
    Ok(())
}

/// LSTD on the observed chain, and minimax with `H := O` on the same data.
fn lstd_pair(exp: &Experiment, ds: &OfflineDataset) -> Result<(f64, f64)> {
    revealed_states(exp)?;
    let samples: Vec<LstdSample> = ds
        .tuples
        .iter()
        .map(|t| LstdSample {
            state: t.o,
            action: t.a,
            reward: t.r,
            next_state: t.f_next.obs[0],
        })
        .collect();
    let init: Vec<usize> = ds.initial_samples.iter().map(|s| s.f.obs[0]).collect();
    let m = &exp.model;
    let (lstd, _) = lstd_value(
        &samples,
        &init,
        m.n_obs,
        &policy_rows(&exp.evaluation),
        &policy_rows(&exp.behavior),
        m.gamma,
    )?;
    let mo = compute_moments(
        &ds.view(),
        &fbar_features(exp)?,
        &CurrentObservation { n_obs: m.n_obs },
        &exp.evaluation,
        &exp.behavior,
        m.gamma,
    )?;
    let mm = minimax_linear(&mo, &EstimatorConfig::exact())?.j_hat;
    Ok((lstd, mm))
}

fn kernel(k: KernelSpec) -> Kernel {
    match k {
        KernelSpec::Linear => Kernel::Linear,
        KernelSpec::Gaussian { bandwidth } => Kernel::Gaussian { bandwidth },
    }
}

/// All estimator rows for one `(n, seed)` cell.
fn run_cell(exp: &Experiment, n: usize, seed: u64, hash: &str, truth: Truth) -> Vec<ResultRow> {
    let gamma = exp.model.gamma;
    let needs_tuples = exp.config.estimators.iter().any(|e| !matches!(e, EstimatorSpec::Sis { .. }));
    let data = if needs_tuples { Some(simulate(exp, n, seed)) } else { None };
    let features = fbar_features(exp).and_then(|ff| Ok((ff, history_features(exp)?)));
    let mut moments: Option<Result<MomentSet>> = None;
    let mut rows = Vec::new();
    for spec in &exp.config.estimators {
        let start = Instant::now();
        let row = ResultRow::new(spec.name(), n, seed, hash);
        let ds = || -> Result<&OfflineDataset> {
            match data.as_ref().expect("dataset generated for tuple estimators") {
                Ok(d) => Ok(d),
                Err(e) => bail!("data generation failed: {e:#}"),
            }
        };
        let feats = || -> Result<&(OneHotFbar, Box<dyn HistoryFeatures<usize, usize> + Sync>)> {
            features.as_ref().map_err(|e| anyhow::anyhow!("{e:#}"))
        };
        let mut get_moments = || -> Result<MomentSet> {
            let cached = moments.get_or_insert_with(|| {
                let d = ds()?;
                let (ff, fh) = feats()?;
                Ok(compute_moments(&d.view(), ff, fh.as_ref(), &exp.evaluation, &exp.behavior, gamma)?)
            });
            match cached {
                Ok(m) => Ok(m.clone()),
                Err(e) => bail!("{e:#}"),
            }
        };
        match spec {
            EstimatorSpec::MinimaxLinear { .. } => {
                let cfg = spec.hyper().expect("minimax spec");
                let out = get_moments().and_then(|m| Ok((minimax_linear(&m, &cfg)?.j_hat, None)));
                rows.push(row.finish(out, truth.discounted, start));
            }
            EstimatorSpec::FiniteHorizonLinear { horizon } => {
                let out = get_moments().and_then(|m| Ok((finite_horizon_linear(&m, *horizon)?.j_hat, None)));
                rows.push(row.finish(out, finite_truth(exp, *horizon), start));
            }
            EstimatorSpec::MinimaxRkhs { kernel: k, .. } => {
                let cfg = spec.hyper().expect("minimax spec");
                let out = (|| {
                    let d = ds()?;
                    let (ff, fh) = feats()?;
                    let kernels = RkhsKernels {
                        fbar: kernel(*k),
                        history: kernel(*k),
                    };
                    let e = minimax_rkhs(&d.view(), ff, fh.as_ref(), kernels, &exp.evaluation, &exp.behavior, gamma, &cfg)?;
                    Ok((e.j_hat, None))
                })();
                rows.push(row.finish(out, truth.discounted, start));
            }
            EstimatorSpec::Sis { horizon_cap } => {
                let out = (|| {
                    let pb: MemoryPolicy = exp.behavior.clone().into();
                    let nu = initial_augmented_distribution(&exp.model, &exp.behavior)?;
                    let tr = sample_tabular_trajectories(
                        &exp.model,
                        &pb,
                        n,
                        *horizon_cap,
                        &InitSpec::Table(nu),
                        seed.wrapping_add(SIS_SEED_OFFSET),
                    )?;
                    Ok((sis_estimate(&tr, &exp.evaluation, &exp.behavior, gamma, *horizon_cap)?.j_hat, None))
                })();
                rows.push(row.finish(out, truth.discounted, start));
            }
            EstimatorSpec::Lstd => {
                let pair = ds().and_then(|d| lstd_pair(exp, d));
                let lstd_row = match &pair {
                    Ok((l, _)) => row.finish(Ok((*l, None)), truth.discounted, start),
                    Err(e) => row.finish(Err(anyhow::anyhow!("{e:#}")), truth.discounted, start),
                };
                rows.push(lstd_row);
                let eq = ResultRow::new("lstd_vs_minimax_linear", n, seed, hash);
                rows.push(eq.finish(pair.map(|(l, m)| (m, Some(l))), truth.discounted, start));
            }
        }
    }
    rows
}

/// Runs every `(n, seed)` cell in parallel; rows come back in grid order.
pub fn sweep(exp: &Experiment, hash: &str) -> Vec<ResultRow> {
    let t = truth(exp);
    let cells: Vec<(usize, u64)> = exp
        .config
        .n_grid
        .iter()
        .flat_map(|&n| exp.config.seeds.iter().map(move |&s| (n, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(n, s)| run_cell(exp, n, s, hash, t))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Estimator rows for a dataset loaded from disk.
pub fn estimate(exp: &Experiment, ds: &OfflineDataset, hash: &str) -> Result<Vec<ResultRow>> {
    if ds.config != exp.config.window {
        bail!("dataset window config {:?} differs from the experiment's {:?}", ds.config, exp.config.window);
    }
    let t = truth(exp);
    let gamma = exp.model.gamma;
    let (ff, fh) = (fbar_features(exp)?, history_features(exp)?);
    let (n, seed) = (ds.n(), ds.provenance.seed);
    let mo = compute_moments(&ds.view(), &ff, fh.as_ref(), &exp.evaluation, &exp.behavior, gamma);
    let mut rows = Vec::new();
    for spec in &exp.config.estimators {
        let start = Instant::now();
        let row = ResultRow::new(spec.name(), n, seed, hash);
        let moments = || mo.as_ref().map_err(|e| anyhow::anyhow!("{e}"));
        match spec {
            EstimatorSpec::MinimaxLinear { .. } => {
                let cfg = spec.hyper().expect("minimax spec");
                let out = moments().and_then(|m| Ok((minimax_linear(m, &cfg)?.j_hat, None)));
                rows.push(row.finish(out, t.discounted, start));
            }
            EstimatorSpec::FiniteHorizonLinear { horizon } => {
                let out = moments().and_then(|m| Ok((finite_horizon_linear(m, *horizon)?.j_hat, None)));
                rows.push(row.finish(out, finite_truth(exp, *horizon), start));
            }
            EstimatorSpec::MinimaxRkhs { kernel: k, .. } => {
                let cfg = spec.hyper().expect("minimax spec");
                let kernels = RkhsKernels {
                    fbar: kernel(*k),
                    history: kernel(*k),
                };
                let out = minimax_rkhs(&ds.view(), &ff, fh.as_ref(), kernels, &exp.evaluation, &exp.behavior, gamma, &cfg)
                    .map(|e| (e.j_hat, None))
                    .map_err(Into::into);
                rows.push(row.finish(out, t.discounted, start));
            }
            EstimatorSpec::Sis { .. } => {
                rows.push(row.finish(Err(anyhow::anyhow!("sis needs whole trajectories, not tuples")), None, start));
            }
            EstimatorSpec::Lstd => {
                let pair = lstd_pair(exp, ds);
                let l = pair.as_ref().map(|p| (p.0, None)).map_err(|e| anyhow::anyhow!("{e:#}"));
                rows.push(row.finish(l, t.discounted, start));
                let eq = ResultRow::new("lstd_vs_minimax_linear", n, seed, hash);
                rows.push(eq.finish(pair.map(|(l, m)| (m, Some(l))), t.discounted, start));
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub source: String,
    pub sequence: Vec<(usize, usize)>,
    pub truth: f64,
    /// `None` for conditional-scale moments, which fix no overall scale.
    pub spectral: Option<f64>,
    pub minimax: Option<f64>,
    pub predictive: Vec<f64>,
    pub predictive_truth: Vec<f64>,
    pub status: String,
}

fn dynamics_rows(exp: &Experiment, mo: &DynamicsMoments, source: &str) -> Vec<DynamicsRow> {
    let spec = exp.config.dynamics.as_ref().expect("dynamics spec");
    spec.sequences
        .iter()
        .map(|seq| {
            let truth = joint_sequence_probability(&exp.model, &exp.evaluation, seq).unwrap_or(f64::NAN);
            let predictive_truth = predictive_distribution(&exp.model, &exp.evaluation, seq).unwrap_or_default();
            let mut row = DynamicsRow {
                source: source.into(),
                sequence: seq.clone(),
                truth,
                spectral: None,
                minimax: None,
                predictive: Vec::new(),
                predictive_truth,
                status: "ok".into(),
            };
            let out = (|| -> Result<()> {
                if mo.scale == DynamicsScale::Joint {
                    row.spectral = Some(spectral_joint_probability(mo, seq)?);
                    row.minimax = Some(minimax_dynamics(mo, &EstimatorConfig::exact(), seq)?);
                }
                row.predictive = spectral_conditional_distribution(mo, seq)?.probs;
                Ok(())
            })();
            if let Err(e) = out {
                row.status = format!("error: {e:#}");
            }
            row
        })
        .collect()
}

/// Population (and optionally empirical) sequence-probability estimates.
pub fn dynamics(exp: &Experiment) -> Result<Vec<DynamicsRow>> {
    let Some(spec) = exp.config.dynamics.as_ref() else {
        bail!("config has no dynamics section");
    };
    let w = exp.config.window;
    if w.m != 0 {
        bail!("dynamics learning requires m = 0");
    }
    let ab = exp.model.alphabet();
    let ff = OneHotFbar::new(ab, 0, w.m_f)?;
    let fh = OneHotHistory::new(ab, w.m_h)?;
    let pop = population_dynamics_moments(&exp.model, &exp.behavior, &exp.evaluation, w, &ff, &fh, spec.scale)
        .context("population dynamics moments")?;
    let mut rows = dynamics_rows(exp, &pop, "population");
    if let Some(n) = spec.n {
        let ds = simulate(exp, n, exp.config.seeds[0])?;
        let emp = estimate_dynamics_moments(&ds.view(), &ff, &fh, &exp.evaluation, &exp.behavior, spec.scale)?;
        rows.extend(dynamics_rows(exp, &emp, &format!("empirical n={n}")));
    }
    Ok(rows)
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS.iter().map(|c| c.0))?;
    }
    for r in rows {
        w.serialize(CsvRow {
            estimator: &r.estimator,
            n: r.n,
            seed: r.seed,
            j_hat: r.j_hat,
            j_true: r.j_true,
            abs_error: r.abs_error,
            reference_diff: r.reference_diff,
            diagnostics_hash: &r.diagnostics_hash,
            status: &r.status,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}
