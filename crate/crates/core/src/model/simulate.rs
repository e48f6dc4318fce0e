use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{sample_categorical, ActingPolicy};
use super::space::{AugmentedDistribution, Window};
use super::{Environment, MemoryPolicy};
use crate::error::{Error, Result};

/// States, observations, actions and rewards after the initial window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S, O = usize, A = usize> {
    /// Memory window `Z_0` in effect before the first recorded step.
    pub initial_window: Window<O, A>,
    pub states: Vec<S>,
    pub obs: Vec<O>,
    pub actions: Vec<A>,
    pub rewards: Vec<f64>,
}

impl<S, O: Clone, A: Clone> Trajectory<S, O, A> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Pairs `(o_k, a_k)` for `k` in `start..end`, where negative indices
    /// reach into the initial window.
    pub fn window(&self, start: isize, end: isize) -> Window<O, A> {
        let m = self.initial_window.len() as isize;
        assert!(start >= -m && end as usize <= self.len() && start <= end);
        let mut w = Window::empty();
        for k in start..end {
            if k < 0 {
                let i = (m + k) as usize;
                w.push(self.initial_window.obs[i].clone(), self.initial_window.actions[i].clone());
            } else {
                w.push(self.obs[k as usize].clone(), self.actions[k as usize].clone());
            }
        }
        w
    }
}

/// How the initial augmented state `(Z_0, S_0)` is drawn.
#[derive(Debug, Clone)]
pub enum InitSpec {
    /// `steps` policy steps from `initial_state_dist` with a padded window.
    BurnIn(usize),
    /// Explicit joint table over `(z, s)` (tabular models only).
    Table(AugmentedDistribution),
}

/// Runs `steps` steps from a padded window and returns `(Z, S)` afterwards.
pub fn burn_in_start<E, P, R>(env: &E, policy: &P, steps: usize, rng: &mut R) -> Result<(Window<E::Obs, E::Action>, E::State)>
where
    E: Environment,
    P: ActingPolicy<E::Obs, E::Action>,
    R: Rng + ?Sized,
{
    let (po, pa) = env.pad_pair();
    let mut z = Window::from_pairs(std::iter::repeat_n((po, pa), policy.memory()));
    let mut s = env.sample_initial(rng);
    for _ in 0..steps {
        let o = env.sample_obs(&s, rng);
        let a = policy.sample_action(&z, &o, rng)?;
        let s_next = env.sample_next(&s, &a, rng);
        z = z.shift(&o, &a);
        s = s_next;
    }
    Ok((z, s))
}

/// Draws `(Z_0, S_0)` from an explicit table.
pub fn sample_augmented<R: Rng + ?Sized>(dist: &AugmentedDistribution, rng: &mut R) -> (Window, usize) {
    let idx = sample_categorical(&dist.probs, rng);
    let (zi, s) = dist.space.split(idx);
    (dist.space.window(zi), s)
}

/// Runs `length` steps from `(z, s)`.
pub fn rollout<E, P, R>(
    env: &E,
    policy: &P,
    mut z: Window<E::Obs, E::Action>,
    mut s: E::State,
    length: usize,
    rng: &mut R,
) -> Result<Trajectory<E::State, E::Obs, E::Action>>
where
    E: Environment,
    P: ActingPolicy<E::Obs, E::Action>,
    R: Rng + ?Sized,
{
    let mut traj = Trajectory {
        initial_window: z.clone(),
        states: Vec::with_capacity(length),
        obs: Vec::with_capacity(length),
        actions: Vec::with_capacity(length),
        rewards: Vec::with_capacity(length),
    };
    for _ in 0..length {
        let o = env.sample_obs(&s, rng);
        let a = policy.sample_action(&z, &o, rng)?;
        let r = env.reward(&s, &a);
        let s_next = env.sample_next(&s, &a, rng);
        z = z.shift(&o, &a);
        traj.states.push(std::mem::replace(&mut s, s_next));
        traj.obs.push(o);
        traj.actions.push(a);
        traj.rewards.push(r);
    }
    Ok(traj)
}

/// Seeded trajectory with `burn_in` discarded policy steps populating `Z_0`.
pub fn sample_trajectory<E>(
    env: &E,
    policy: &MemoryPolicy,
    length: usize,
    seed: u64,
    burn_in: usize,
) -> Result<Trajectory<E::State, E::Obs, E::Action>>
where
    E: Environment,
    MemoryPolicy: ActingPolicy<E::Obs, E::Action>,
{
    if length == 0 {
        return Err(Error::argument("trajectory length must be at least 1"));
    }
    env.check_policy(policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (z, s) = burn_in_start(env, policy, burn_in, &mut rng)?;
    rollout(env, policy, z, s, length, &mut rng)
}

/// Tabular trajectory with either initialization.
pub fn sample_tabular_trajectory<R: Rng + ?Sized>(
    model: &super::TabularPomdp,
    policy: &MemoryPolicy,
    length: usize,
    init: &InitSpec,
    rng: &mut R,
) -> Result<Trajectory<usize>> {
    model.check_policy(policy)?;
    let (z, s) = match init {
        InitSpec::BurnIn(steps) => burn_in_start(model, policy, *steps, rng)?,
        InitSpec::Table(dist) => {
            if dist.space.memory != policy.memory() || dist.space.n_states != model.n_states {
                return Err(Error::config("initial table does not match policy memory or model"));
            }
            sample_augmented(dist, rng)
        }
    };
    rollout(model, policy, z, s, length, rng)
}
