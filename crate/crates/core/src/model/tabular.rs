use std::path::Path;

use serde::{Deserialize, Serialize};

use rand::Rng;

use super::policy::sample_categorical;
use super::space::{Alphabet, AugmentedSpace};
use super::{Environment, MemoryPolicy};
use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// Finite POMDP `<S, A, O, r, O, T>` with discount and initial state law.
///
/// Serialized as JSON with dense row-major arrays:
/// `transition[s][a][s']`, `emission[s][o]`, `reward[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPomdp {
    pub n_states: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub emission: Vec<Vec<f64>>,
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub initial_state_dist: Vec<f64>,
}

fn check_row(row: &[f64], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(Error::config(format!("{what}: expected {len} entries, got {}", row.len())));
    }
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::config(format!("{what}: negative or non-finite probability")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(Error::config(format!("{what}: row sums to {total}")));
    }
    Ok(())
}

impl TabularPomdp {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_obs == 0 || self.n_actions == 0 {
            return Err(Error::config("state, observation and action counts must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.transition.len() != self.n_states
            || self.emission.len() != self.n_states
            || self.reward.len() != self.n_states
        {
            return Err(Error::config("tables must have one row block per state"));
        }
        for s in 0..self.n_states {
            if self.transition[s].len() != self.n_actions {
                return Err(Error::config(format!("transition[{s}] must have one row per action")));
            }
            for a in 0..self.n_actions {
                check_row(&self.transition[s][a], self.n_states, &format!("transition[{s}][{a}]"))?;
            }
            check_row(&self.emission[s], self.n_obs, &format!("emission[{s}]"))?;
            if self.reward[s].len() != self.n_actions || self.reward[s].iter().any(|r| !r.is_finite()) {
                return Err(Error::config(format!("reward[{s}] must hold one finite value per action")));
            }
        }
        check_row(&self.initial_state_dist, self.n_states, "initial_state_dist")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let model: TabularPomdp = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::new(self.n_obs, self.n_actions)
    }

    pub fn augmented_space(&self, memory: usize) -> Result<AugmentedSpace> {
        AugmentedSpace::new(self.n_states, self.n_obs, self.n_actions, memory)
    }

    pub fn reward_range(&self) -> (f64, f64) {
        self.reward
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().flatten().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    /// Same model with rewards multiplied by `c`.
    pub fn scaled_rewards(&self, c: f64) -> Self {
        let mut out = self.clone();
        for row in &mut out.reward {
            for r in row.iter_mut() {
                *r *= c;
            }
        }
        out
    }

    /// Same model with observation labels permuted: new label `perm[o]`.
    pub fn permute_observations(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for s in 0..self.n_states {
            for o in 0..self.n_obs {
                out.emission[s][perm[o]] = self.emission[s][o];
            }
        }
        out
    }

    /// Forward step of a latent vector: `out(s') = sum_s v(s) T(s'|s,a)`.
    pub fn propagate(&self, v: &[f64], a: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (s, &mass) in v.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (s2, &p) in self.transition[s][a].iter().enumerate() {
                out[s2] += mass * p;
            }
        }
    }
}

impl Environment for TabularPomdp {
    type State = usize;
    type Obs = usize;
    type Action = usize;

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.initial_state_dist, rng)
    }

    fn sample_obs<R: Rng + ?Sized>(&self, s: &usize, rng: &mut R) -> usize {
        sample_categorical(&self.emission[*s], rng)
    }

    fn reward(&self, s: &usize, a: &usize) -> f64 {
        self.reward[*s][*a]
    }

    fn sample_next<R: Rng + ?Sized>(&self, s: &usize, a: &usize, rng: &mut R) -> usize {
        sample_categorical(&self.transition[*s][*a], rng)
    }

    fn pad_pair(&self) -> (usize, usize) {
        (0, 0)
    }

    fn check_policy(&self, policy: &MemoryPolicy) -> Result<()> {
        let p = policy.as_tabular()?;
        if p.n_obs != self.n_obs || p.n_actions != self.n_actions {
            return Err(Error::config(format!(
                "policy alphabet {}x{} does not match model {}x{}",
                p.n_obs, p.n_actions, self.n_obs, self.n_actions
            )));
        }
        p.validate()
    }
}
