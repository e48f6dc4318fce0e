//! Exact population measure over tuples under the stationary behavior law,
//! by enumeration of histories and futures with latent forward messages.
//!
//! Each enumerated key `(h, o, a, f, f')` carries its exact probability as
//! a weight and the conditional mean reward as `r`, which makes every
//! statistic linear in `R` exact.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{InitialSample, SampleView, TransitionTuple, WindowConfig};
use crate::error::{Error, Result};
use crate::model::oracle::{initial_augmented_distribution, memory_stationary_distribution, roll_windows};
use crate::model::space::MAX_ENUMERATION;
use crate::model::{AugmentedDistribution, Future, TabularPolicy, TabularPomdp, Window};

#[derive(Debug, Clone)]
pub struct PopulationSample {
    pub config: WindowConfig,
    pub tuples: Vec<TransitionTuple>,
    pub weights: Vec<f64>,
    pub initial: Vec<InitialSample>,
    pub initial_weights: Vec<f64>,
    /// Joint law of `(H, S_t)`, indexed by `h_index * n_states + s`.
    pub history_state: AugmentedDistribution,
    /// `nu_S̄` over `(Z_0, S_0)`.
    pub nu_sbar: AugmentedDistribution,
}

impl PopulationSample {
    pub fn view(&self) -> SampleView<'_> {
        SampleView {
            config: self.config,
            tuples: &self.tuples,
            weights: Some(&self.weights),
            initial: &self.initial,
            initial_weights: Some(&self.initial_weights),
        }
    }
}

/// Distribution of `F` given `(z, s)` as `(f_index, prob)` pairs, rolling
/// `M_F - 1` behavior steps.
pub fn future_given_state(
    model: &TabularPomdp,
    policy: &TabularPolicy,
    z: &Window,
    s: usize,
    m_f: usize,
) -> Vec<(Future, f64)> {
    let mut alpha = vec![0.0; model.n_states];
    alpha[s] = 1.0;
    let mut out = Vec::new();
    let mut obs = Vec::with_capacity(m_f);
    let mut acts = Vec::with_capacity(m_f);
    future_rec(model, policy, z.clone(), alpha, m_f, &mut obs, &mut acts, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn future_rec(
    model: &TabularPomdp,
    policy: &TabularPolicy,
    z: Window,
    alpha: Vec<f64>,
    m_f: usize,
    obs: &mut Vec<usize>,
    acts: &mut Vec<usize>,
    out: &mut Vec<(Future, f64)>,
) {
    let depth = obs.len();
    if depth + 1 == m_f {
        for o in 0..model.n_obs {
            let p: f64 = alpha.iter().enumerate().map(|(s, a)| a * model.emission[s][o]).sum();
            if p > 0.0 {
                let mut fo = obs.clone();
                fo.push(o);
                out.push((Future { obs: fo, actions: acts.clone() }, p));
            }
        }
        return;
    }
    let pz = policy.z_index(&z);
    let mut next = vec![0.0; model.n_states];
    for o in 0..model.n_obs {
        for a in 0..model.n_actions {
            let pa = policy.prob(pz, o, a);
            let w: Vec<f64> = (0..model.n_states).map(|s| alpha[s] * model.emission[s][o] * pa).collect();
            if w.iter().all(|&x| x == 0.0) {
                continue;
            }
            model.propagate(&w, a, &mut next);
            obs.push(o);
            acts.push(a);
            future_rec(model, policy, z.shift(&o, &a), next.clone(), m_f, obs, acts, out);
            obs.pop();
            acts.pop();
        }
    }
}

struct Expander<'a> {
    model: &'a TabularPomdp,
    policy: &'a TabularPolicy,
    cfg: WindowConfig,
}

impl Expander<'_> {
    /// Enumerates `(o_t, a_t), ..., (o_{t+M_F-1}, a_{t+M_F-1}), o_{t+M_F}`.
    #[allow(clippy::too_many_arguments)]
    fn expand(
        &self,
        h: &Window,
        z: Window,
        alpha: &[f64],
        beta: &[f64],
        pairs: &mut Vec<(usize, usize)>,
        out: &mut Vec<(TransitionTuple, f64)>,
    ) {
        let model = self.model;
        let m_f = self.cfg.m_f;
        if pairs.len() == m_f {
            for o_last in 0..model.n_obs {
                let mut wa = 0.0;
                let mut wb = 0.0;
                for s in 0..model.n_states {
                    wa += alpha[s] * model.emission[s][o_last];
                    wb += beta[s] * model.emission[s][o_last];
                }
                if wa > 0.0 {
                    out.push((self.emit(h, pairs, o_last, wb / wa), wa));
                }
            }
            return;
        }
        let pz = self.policy.z_index(&z);
        let first = pairs.is_empty();
        let n_s = model.n_states;
        let mut na = vec![0.0; n_s];
        let mut nb = vec![0.0; n_s];
        for o in 0..model.n_obs {
            for a in 0..model.n_actions {
                let pa = self.policy.prob(pz, o, a);
                if pa == 0.0 {
                    continue;
                }
                let wa: Vec<f64> = (0..n_s).map(|s| alpha[s] * model.emission[s][o] * pa).collect();
                if wa.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let wb: Vec<f64> = if first {
                    (0..n_s).map(|s| wa[s] * model.reward[s][a]).collect()
                } else {
                    (0..n_s).map(|s| beta[s] * model.emission[s][o] * pa).collect()
                };
                model.propagate(&wa, a, &mut na);
                model.propagate(&wb, a, &mut nb);
                pairs.push((o, a));
                self.expand(h, z.shift(&o, &a), &na.clone(), &nb.clone(), pairs, out);
                pairs.pop();
            }
        }
    }

    fn emit(&self, h: &Window, pairs: &[(usize, usize)], o_last: usize, r: f64) -> TransitionTuple {
        let m_f = self.cfg.m_f;
        let (o, a) = pairs[0];
        let obs: Vec<usize> = pairs.iter().map(|p| p.0).chain(std::iter::once(o_last)).collect();
        let acts: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let z = h.suffix(self.cfg.m);
        TransitionTuple {
            h: h.clone(),
            z_next: z.shift(&o, &a),
            z,
            o,
            a,
            r,
            f: Future {
                obs: obs[..m_f].to_vec(),
                actions: acts[..m_f - 1].to_vec(),
            },
            f_next: Future {
                obs: obs[1..].to_vec(),
                actions: acts[1..m_f].to_vec(),
            },
        }
    }
}

/// Joint law of `(H, S_t)` under the stationary behavior process.
pub fn history_state_distribution(
    model: &TabularPomdp,
    policy_b: &TabularPolicy,
    config: &WindowConfig,
) -> Result<AugmentedDistribution> {
    config.validate()?;
    if policy_b.memory != config.m {
        return Err(Error::config("behavior policy memory differs from the window config"));
    }
    let stationary = memory_stationary_distribution(model, policy_b)?;
    roll_windows(model, policy_b, &stationary.probs, config.m_h)
}

/// Exact population measure for `(model, pi_b, config)`.
pub fn population_sample(model: &TabularPomdp, policy_b: &TabularPolicy, config: WindowConfig) -> Result<PopulationSample> {
    let history_state = history_state_distribution(model, policy_b, &config)?;
    let ab = model.alphabet();
    let n_s = model.n_states;
    let branching = (ab.n_obs * ab.n_actions).pow(config.m_f as u32) * ab.n_obs;
    let n_h = history_state.space.n_windows();
    let required = n_h.saturating_mul(branching);
    if required > MAX_ENUMERATION {
        return Err(Error::Capacity {
            what: "population tuple enumeration".into(),
            required,
            limit: MAX_ENUMERATION,
        });
    }
    let ex = Expander {
        model,
        policy: policy_b,
        cfg: config,
    };
    let per_h: Vec<Vec<(TransitionTuple, f64)>> = (0..n_h)
        .into_par_iter()
        .map(|hi| {
            let alpha = &history_state.probs[hi * n_s..(hi + 1) * n_s];
            let mut out = Vec::new();
            if alpha.iter().any(|&x| x > 0.0) {
                let h = history_state.space.window(hi);
                let z = h.suffix(config.m);
                let beta = vec![0.0; n_s];
                ex.expand(&h, z, alpha, &beta, &mut Vec::with_capacity(config.m_f), &mut out);
            }
            out
        })
        .collect();
    let (tuples, weights): (Vec<_>, Vec<_>) = per_h.into_iter().flatten().unzip();

    let nu_sbar = initial_augmented_distribution(model, policy_b)?;
    let mut init: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (idx, &p) in nu_sbar.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let (zi, s) = nu_sbar.space.split(idx);
        let z = nu_sbar.space.window(zi);
        for (f, pf) in future_given_state(model, policy_b, &z, s, config.m_f) {
            *init.entry((zi, ab.future_index(&f))).or_insert(0.0) += p * pf;
        }
    }
    let (initial, initial_weights): (Vec<_>, Vec<_>) = init
        .into_iter()
        .map(|((zi, fi), w)| {
            (
                InitialSample {
                    z: ab.decode_window(zi, config.m),
                    f: ab.decode_future(fi, config.m_f),
                },
                w,
            )
        })
        .unzip();
    Ok(PopulationSample {
        config,
        tuples,
        weights,
        initial,
        initial_weights,
        history_state,
        nu_sbar,
    })
}
