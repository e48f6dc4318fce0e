//! Sequential importance sampling baseline.

use std::fmt::Debug;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_tabular_trajectory, ActingPolicy, InitSpec, MemoryPolicy, TabularPomdp, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SisEstimate {
    pub j_hat: f64,
    pub std_error: f64,
    /// Variance across trajectories of the cumulative ratio at the cap.
    pub weight_variance: f64,
    /// Variance of its logarithm; infinite if any weight is zero. Unlike the
    /// sample variance of the heavy-tailed weight itself, this does not
    /// collapse at long horizons.
    pub log_weight_variance: f64,
    pub n_trajectories: usize,
    pub horizon: usize,
}

/// `mean_i sum_{t < cap} gamma^t (prod_{k <= t} mu_k) R_t`.
pub fn sis_estimate<S, O, A, PE, PB>(
    trajectories: &[Trajectory<S, O, A>],
    policy_e: &PE,
    policy_b: &PB,
    gamma: f64,
    horizon_cap: usize,
) -> Result<SisEstimate>
where
    S: Sync,
    O: Clone + Sync + Send,
    A: Clone + Sync + Send + Debug,
    PE: ActingPolicy<O, A>,
    PB: ActingPolicy<O, A>,
{
    if trajectories.is_empty() {
        return Err(Error::argument("SIS needs at least one trajectory"));
    }
    if horizon_cap == 0 {
        return Err(Error::argument("horizon cap must be at least 1"));
    }
    let (me, mb) = (policy_e.memory() as isize, policy_b.memory() as isize);
    let per: Vec<(f64, f64)> = trajectories
        .par_iter()
        .map(|tr| {
            let m = tr.initial_window.len() as isize;
            if m < me.max(mb) {
                return Err(Error::argument("trajectory window shorter than policy memory"));
            }
            let cap = horizon_cap.min(tr.len());
            let (mut ret, mut weight, mut disc) = (0.0, 1.0, 1.0);
            for t in 0..cap {
                let ti = t as isize;
                let (o, a) = (&tr.obs[t], &tr.actions[t]);
                let pe = policy_e.likelihood(&tr.window(ti - me, ti), o, a)?;
                let pb = policy_b.likelihood(&tr.window(ti - mb, ti), o, a)?;
                if pb > 0.0 {
                    weight *= pe / pb;
                } else if pe > 0.0 {
                    return Err(Error::OverlapViolation {
                        action: format!("{a:?}"),
                        pi_e: pe,
                    });
                } else {
                    weight = 0.0;
                }
                ret += disc * weight * tr.rewards[t];
                disc *= gamma;
            }
            Ok((ret, weight))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mean = |v: &mut dyn Iterator<Item = f64>| v.sum::<f64>() / n;
    let j = mean(&mut per.iter().map(|p| p.0));
    let wm = mean(&mut per.iter().map(|p| p.1));
    let var_r = if per.len() > 1 {
        per.iter().map(|p| (p.0 - j).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let var_w = if per.len() > 1 {
        per.iter().map(|p| (p.1 - wm).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let log_var = if per.iter().any(|p| p.1 <= 0.0) {
        f64::INFINITY
    } else if per.len() > 1 {
        let lm = mean(&mut per.iter().map(|p| p.1.ln()));
        per.iter().map(|p| (p.1.ln() - lm).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(SisEstimate {
        j_hat: j,
        std_error: (var_r / n).sqrt(),
        weight_variance: var_w,
        log_weight_variance: log_var,
        n_trajectories: per.len(),
        horizon: horizon_cap,
    })
}

/// `n` independent behavior trajectories of length `length`, trajectory `i`
/// drawn from its own ChaCha stream so results do not depend on threading.
pub fn sample_tabular_trajectories(
    model: &TabularPomdp,
    policy_b: &MemoryPolicy,
    n: usize,
    length: usize,
    init: &InitSpec,
    seed: u64,
) -> Result<Vec<Trajectory<usize>>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            sample_tabular_trajectory(model, policy_b, length, init, &mut rng)
        })
        .collect()
}
