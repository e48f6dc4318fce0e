//! Transition tuples `(H, O, A, R, F')`, initial samples `(Z_0, F_0)` and
//! weighted views over either.

pub mod generate;
pub mod io;
pub mod population;

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActingPolicy, Future, Window};

pub use generate::{generate_lqg_dataset, generate_offline_dataset, generate_tabular_dataset, lqg_burn_in, tabular_burn_in, tuple_at, DatasetSummary, SamplingMode};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use population::{future_given_state, history_state_distribution, population_sample, PopulationSample};

/// Window lengths: policy memory `M`, history `M_H > M`, future `M_F >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowConfig {
    pub m: usize,
    pub m_h: usize,
    pub m_f: usize,
}

impl WindowConfig {
    pub fn new(m: usize, m_h: usize, m_f: usize) -> Result<Self> {
        let c = WindowConfig { m, m_h, m_f };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_h <= self.m {
            return Err(Error::config(format!("history length {} must exceed memory {}", self.m_h, self.m)));
        }
        if self.m_f < 1 {
            return Err(Error::config("future length must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTuple<O = usize, A = usize> {
    /// Last `M_H` pairs before time `t`.
    pub h: Window<O, A>,
    /// Last `M` pairs before time `t` (suffix of `h`).
    pub z: Window<O, A>,
    pub o: O,
    pub a: A,
    pub r: f64,
    pub f: Future<O, A>,
    pub z_next: Window<O, A>,
    pub f_next: Future<O, A>,
}

impl<O: Clone + PartialEq, A: Clone + PartialEq> TransitionTuple<O, A> {
    /// Checks lengths and the shift relations between the components.
    pub fn check(&self, cfg: &WindowConfig) -> Result<()> {
        let bad = |what: &str| Err(Error::argument(format!("inconsistent tuple: {what}")));
        if self.h.len() != cfg.m_h || self.h.actions.len() != cfg.m_h {
            return bad("history length");
        }
        if self.z != self.h.suffix(cfg.m) {
            return bad("memory window is not the suffix of the history");
        }
        if self.f.len() != cfg.m_f || self.f.actions.len() != cfg.m_f - 1 {
            return bad("future length");
        }
        if self.f.first_obs() != &self.o {
            return bad("future does not start at the current observation");
        }
        if cfg.m_f >= 2 && self.f.actions[0] != self.a {
            return bad("future does not start with the current action");
        }
        if self.z_next != self.z.shift(&self.o, &self.a) {
            return bad("next window is not the shifted window");
        }
        if self.f_next.len() != cfg.m_f
            || self.f_next.actions.len() != cfg.m_f - 1
            || self.f_next.obs[..cfg.m_f - 1] != self.f.obs[1..]
            || (cfg.m_f >= 2 && self.f_next.actions[..cfg.m_f - 2] != self.f.actions[1..])
        {
            return bad("next future does not overlap the future");
        }
        Ok(())
    }
}

/// A draw `(Z_0, F_0)` from `nu_F̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSample<O = usize, A = usize> {
    pub z: Window<O, A>,
    pub f: Future<O, A>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    IidPerTuple,
    SlicedTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub mode: GenerationMode,
    /// Policy steps between `(Z_0, S_0) ~ nu_S̄` and the first tuple.
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineDataset<O = usize, A = usize> {
    pub config: WindowConfig,
    pub provenance: Provenance,
    pub tuples: Vec<TransitionTuple<O, A>>,
    pub initial_samples: Vec<InitialSample<O, A>>,
}

impl<O, A> OfflineDataset<O, A> {
    pub fn n(&self) -> usize {
        self.tuples.len()
    }

    pub fn n_init(&self) -> usize {
        self.initial_samples.len()
    }

    pub fn view(&self) -> SampleView<'_, O, A> {
        SampleView {
            config: self.config,
            tuples: &self.tuples,
            weights: None,
            initial: &self.initial_samples,
            initial_weights: None,
        }
    }
}

/// Weighted empirical measure over tuples and initial samples. Without
/// explicit weights every record gets `1 / count`.
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a, O = usize, A = usize> {
    pub config: WindowConfig,
    pub tuples: &'a [TransitionTuple<O, A>],
    pub weights: Option<&'a [f64]>,
    pub initial: &'a [InitialSample<O, A>],
    pub initial_weights: Option<&'a [f64]>,
}

impl<O, A> SampleView<'_, O, A> {
    pub fn n(&self) -> usize {
        self.tuples.len()
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        match self.weights {
            Some(w) => w[i],
            None => 1.0 / self.tuples.len() as f64,
        }
    }

    #[inline]
    pub fn initial_weight(&self, j: usize) -> f64 {
        match self.initial_weights {
            Some(w) => w[j],
            None => 1.0 / self.initial.len() as f64,
        }
    }

    /// True for exact population measures.
    pub fn is_population(&self) -> bool {
        self.weights.is_some()
    }
}

/// `mu = pi_e(a | z, o) / pi_b(a | z, o)` with `0 / 0 = 0`.
pub fn importance_ratio<O, A, PE, PB>(policy_e: &PE, policy_b: &PB, z: &Window<O, A>, o: &O, a: &A) -> Result<f64>
where
    A: Debug,
    PE: ActingPolicy<O, A> + ?Sized,
    PB: ActingPolicy<O, A> + ?Sized,
{
    let pe = policy_e.likelihood(z, o, a)?;
    let pb = policy_b.likelihood(z, o, a)?;
    if pb > 0.0 {
        Ok(pe / pb)
    } else if pe > 0.0 {
        Err(Error::OverlapViolation {
            action: format!("{a:?}"),
            pi_e: pe,
        })
    } else {
        Ok(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TabularPolicy;

    #[test]
    fn window_config_requires_longer_history() {
        assert!(WindowConfig::new(1, 1, 1).is_err());
        assert!(WindowConfig::new(1, 2, 0).is_err());
        assert!(WindowConfig::new(0, 1, 1).is_ok());
    }

    #[test]
    fn ratio_of_identical_policies_is_one() {
        let p = TabularPolicy::memoryless(vec![vec![0.3, 0.7], vec![0.5, 0.5]]).unwrap();
        let z = Window::empty();
        for o in 0..2 {
            for a in 0..2 {
                assert_eq!(importance_ratio(&p, &p, &z, &o, &a).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn ratio_against_uniform_behavior() {
        let pb = TabularPolicy::uniform(0, 1, 2).unwrap();
        let pe = TabularPolicy::memoryless(vec![vec![1.0, 0.0]]).unwrap();
        let z = Window::empty();
        assert_eq!(importance_ratio(&pe, &pb, &z, &0, &0).unwrap(), 2.0);
        assert_eq!(importance_ratio(&pe, &pb, &z, &0, &1).unwrap(), 0.0);
    }

    #[test]
    fn ratio_detects_overlap_violation() {
        let pb = TabularPolicy::memoryless(vec![vec![1.0, 0.0]]).unwrap();
        let pe = TabularPolicy::memoryless(vec![vec![0.5, 0.5]]).unwrap();
        let z = Window::empty();
        assert!(matches!(
            importance_ratio(&pe, &pb, &z, &0, &1),
            Err(Error::OverlapViolation { .. })
        ));
        let pe0 = TabularPolicy::memoryless(vec![vec![1.0, 0.0]]).unwrap();
        assert_eq!(importance_ratio(&pe0, &pb, &z, &0, &1).unwrap(), 0.0);
    }
}
