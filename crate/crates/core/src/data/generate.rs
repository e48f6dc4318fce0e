use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GenerationMode, InitialSample, OfflineDataset, Provenance, TransitionTuple, WindowConfig};
use crate::error::{Error, Result};
use crate::model::oracle::{initial_augmented_distribution, memory_stationary_distribution, steps_to_stationarity};
use crate::model::simulate::{burn_in_start, rollout, Trajectory};
use crate::model::{ActingPolicy, Environment, Future, LqgModel, MemoryPolicy, TabularPomdp};

/// Total-variation target for the stationarity burn-in.
pub const STATIONARITY_TV: f64 = 1e-6;
const BURN_IN_CAP: usize = 100_000;
const INIT_STREAM: u64 = 1 << 40;
const SLICED_STREAM: u64 = 1 << 41;

pub type SamplingMode = GenerationMode;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Tuple at time `t >= M_H` of a trajectory with at least `t + M_F + 1` steps.
pub fn tuple_at<S, O: Clone, A: Clone>(traj: &Trajectory<S, O, A>, t: usize, cfg: &WindowConfig) -> TransitionTuple<O, A> {
    let ti = t as isize;
    let h = traj.window(ti - cfg.m_h as isize, ti);
    let z = h.suffix(cfg.m);
    let o = traj.obs[t].clone();
    let a = traj.actions[t].clone();
    let f = Future {
        obs: traj.obs[t..t + cfg.m_f].to_vec(),
        actions: traj.actions[t..t + cfg.m_f - 1].to_vec(),
    };
    let f_next = Future {
        obs: traj.obs[t + 1..t + cfg.m_f + 1].to_vec(),
        actions: traj.actions[t + 1..t + cfg.m_f].to_vec(),
    };
    TransitionTuple {
        z_next: z.shift(&o, &a),
        h,
        z,
        o,
        a,
        r: traj.rewards[t],
        f,
        f_next,
    }
}

/// Dataset generation with an explicit burn-in of `burn_in >= M_H` steps
/// after `(Z_0, S_0) ~ nu_S̄` (an `M`-step burn-in from the initial state).
#[allow(clippy::too_many_arguments)]
pub fn generate_offline_dataset<E>(
    env: &E,
    policy_b: &MemoryPolicy,
    n: usize,
    n_init: usize,
    config: WindowConfig,
    mode: SamplingMode,
    seed: u64,
    burn_in: usize,
) -> Result<OfflineDataset<E::Obs, E::Action>>
where
    E: Environment,
    MemoryPolicy: ActingPolicy<E::Obs, E::Action>,
{
    config.validate()?;
    env.check_policy(policy_b)?;
    if policy_b.memory() != config.m {
        return Err(Error::config("behavior policy memory differs from the window config"));
    }
    if burn_in < config.m_h {
        return Err(Error::argument(format!(
            "burn-in {burn_in} too short for history length {}",
            config.m_h
        )));
    }
    let m = config.m;
    let tuples = match mode {
        GenerationMode::IidPerTuple => (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_for(seed, i as u64);
                let (z, s) = burn_in_start(env, policy_b, m, &mut rng)?;
                let traj = rollout(env, policy_b, z, s, burn_in + config.m_f + 1, &mut rng)?;
                Ok(tuple_at(&traj, burn_in, &config))
            })
            .collect::<Result<Vec<_>>>()?,
        GenerationMode::SlicedTrajectory => {
            if n == 0 {
                Vec::new()
            } else {
                let mut rng = rng_for(seed, SLICED_STREAM);
                let (z, s) = burn_in_start(env, policy_b, m, &mut rng)?;
                let traj = rollout(env, policy_b, z, s, burn_in + n + config.m_f, &mut rng)?;
                (0..n).map(|i| tuple_at(&traj, burn_in + i, &config)).collect()
            }
        }
    };
    let initial_samples = (0..n_init)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng_for(seed, INIT_STREAM + j as u64);
            let (z, s) = burn_in_start(env, policy_b, m, &mut rng)?;
            let traj = rollout(env, policy_b, z.clone(), s, config.m_f, &mut rng)?;
            Ok(InitialSample {
                z,
                f: Future {
                    obs: traj.obs,
                    actions: traj.actions[..config.m_f - 1].to_vec(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OfflineDataset {
        config,
        provenance: Provenance { seed, mode, burn_in },
        tuples,
        initial_samples,
    })
}

/// Burn-in `k + M_H`, with `k` the first step at which the law of `(Z, S)`
/// is within `STATIONARITY_TV` of the behavior stationary law.
pub fn tabular_burn_in(model: &TabularPomdp, policy_b: &MemoryPolicy, config: &WindowConfig) -> Result<usize> {
    let pb = policy_b.as_tabular()?;
    let nu = initial_augmented_distribution(model, pb)?;
    let stationary = memory_stationary_distribution(model, pb)?;
    let k = steps_to_stationarity(model, pb, &nu, &stationary, STATIONARITY_TV, BURN_IN_CAP)?;
    Ok(k + config.m_h)
}

/// Fixed LQG burn-in `10 (M_H + M_F)`.
pub fn lqg_burn_in(config: &WindowConfig) -> usize {
    10 * (config.m_h + config.m_f)
}

pub fn generate_tabular_dataset(
    model: &TabularPomdp,
    policy_b: &MemoryPolicy,
    n: usize,
    n_init: usize,
    config: WindowConfig,
    mode: SamplingMode,
    seed: u64,
) -> Result<OfflineDataset> {
    config.validate()?;
    model.check_policy(policy_b)?;
    let burn_in = tabular_burn_in(model, policy_b, &config)?;
    generate_offline_dataset(model, policy_b, n, n_init, config, mode, seed, burn_in)
}

pub fn generate_lqg_dataset(
    model: &LqgModel,
    policy_b: &MemoryPolicy,
    n: usize,
    n_init: usize,
    config: WindowConfig,
    mode: SamplingMode,
    seed: u64,
) -> Result<OfflineDataset<Vec<f64>, Vec<f64>>> {
    generate_offline_dataset(model, policy_b, n, n_init, config, mode, seed, lqg_burn_in(&config))
}

/// Summary of a generated dataset, for logs and reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub n_init: usize,
    pub mean_reward: f64,
    pub burn_in: usize,
}

impl<O, A> OfflineDataset<O, A> {
    pub fn summary(&self) -> DatasetSummary {
        let mean_reward = if self.tuples.is_empty() {
            0.0
        } else {
            self.tuples.iter().map(|t| t.r).sum::<f64>() / self.tuples.len() as f64
        };
        DatasetSummary {
            n: self.n(),
            n_init: self.n_init(),
            mean_reward,
            burn_in: self.provenance.burn_in,
        }
    }
}
