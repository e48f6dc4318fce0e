//! Observation-action windows, futures and the augmented state space
//! `(z, s)` together with their canonical flat indices.
//!
//! Flat indices are lexicographic with the first component most
//! significant. Windows and futures list observations before actions,
//! oldest first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest enumerated space accepted by the exact routines.
pub const MAX_ENUMERATION: usize = 1 << 24;

/// The last `len` observation-action pairs, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window<O = usize, A = usize> {
    pub obs: Vec<O>,
    pub actions: Vec<A>,
}

impl<O: Clone, A: Clone> Window<O, A> {
    pub fn empty() -> Self {
        Window {
            obs: Vec::new(),
            actions: Vec::new(),
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (O, A)>) -> Self {
        let (obs, actions) = pairs.into_iter().unzip();
        Window { obs, actions }
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn pair(&self, i: usize) -> (&O, &A) {
        (&self.obs[i], &self.actions[i])
    }

    /// Drops the oldest pair and appends `(o, a)`; a zero-length window
    /// stays empty.
    pub fn shift(&self, o: &O, a: &A) -> Self {
        if self.obs.is_empty() {
            return self.clone();
        }
        let mut obs = self.obs[1..].to_vec();
        let mut actions = self.actions[1..].to_vec();
        obs.push(o.clone());
        actions.push(a.clone());
        Window { obs, actions }
    }

    /// Appends `(o, a)` without dropping anything.
    pub fn push(&mut self, o: O, a: A) {
        self.obs.push(o);
        self.actions.push(a);
    }

    /// The most recent `m` pairs.
    pub fn suffix(&self, m: usize) -> Self {
        assert!(m <= self.len(), "suffix longer than window");
        let start = self.len() - m;
        Window {
            obs: self.obs[start..].to_vec(),
            actions: self.actions[start..].to_vec(),
        }
    }
}

/// Future proxy `F = (O_{t:t+M_F-1}, A_{t:t+M_F-2})`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Future<O = usize, A = usize> {
    pub obs: Vec<O>,
    pub actions: Vec<A>,
}

impl<O: Clone, A: Clone> Future<O, A> {
    pub fn first_obs(&self) -> &O {
        &self.obs[0]
    }

    /// Length `M_F` of the future.
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// `F'` from `F`: drops `O_t` and `A_t`, then appends `A_{t+M_F-1}`
    /// (unused when `M_F = 1`) and `O_{t+M_F}`.
    pub fn shift_forward(&self, last_action: &A, next_obs: &O) -> Self {
        let mut obs = self.obs[1..].to_vec();
        obs.push(next_obs.clone());
        let mut actions = Vec::with_capacity(self.actions.len());
        if !self.actions.is_empty() {
            actions.extend_from_slice(&self.actions[1..]);
            actions.push(last_action.clone());
        }
        Future { obs, actions }
    }
}

/// `base^exp` with overflow and capacity checks.
pub fn checked_pow(base: usize, exp: usize, what: &str) -> Result<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc
            .checked_mul(base)
            .filter(|&v| v <= MAX_ENUMERATION)
            .ok_or_else(|| Error::Capacity {
                what: what.to_string(),
                required: base.saturating_pow(exp as u32),
                limit: MAX_ENUMERATION,
            })?;
    }
    Ok(acc)
}

/// Sizes of a finite observation and action alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub n_obs: usize,
    pub n_actions: usize,
}

impl Alphabet {
    pub fn new(n_obs: usize, n_actions: usize) -> Self {
        Alphabet { n_obs, n_actions }
    }

    /// Number of windows of `len` pairs.
    pub fn window_count(&self, len: usize) -> Result<usize> {
        checked_pow(self.n_obs * self.n_actions, len, "window space")
    }

    pub fn window_index(&self, w: &Window) -> usize {
        let mut idx = 0;
        for &o in &w.obs {
            debug_assert!(o < self.n_obs);
            idx = idx * self.n_obs + o;
        }
        for &a in &w.actions {
            debug_assert!(a < self.n_actions);
            idx = idx * self.n_actions + a;
        }
        idx
    }

    pub fn decode_window(&self, mut idx: usize, len: usize) -> Window {
        let mut actions = vec![0; len];
        for slot in actions.iter_mut().rev() {
            *slot = idx % self.n_actions;
            idx /= self.n_actions;
        }
        let mut obs = vec![0; len];
        for slot in obs.iter_mut().rev() {
            *slot = idx % self.n_obs;
            idx /= self.n_obs;
        }
        Window { obs, actions }
    }

    /// Number of futures with `m_f` observations and `m_f - 1` actions.
    pub fn future_count(&self, m_f: usize) -> Result<usize> {
        let o = checked_pow(self.n_obs, m_f, "future space")?;
        let a = checked_pow(self.n_actions, m_f.saturating_sub(1), "future space")?;
        o.checked_mul(a)
            .filter(|&v| v <= MAX_ENUMERATION)
            .ok_or_else(|| Error::Capacity {
                what: "future space".into(),
                required: o.saturating_mul(a),
                limit: MAX_ENUMERATION,
            })
    }

    pub fn future_index(&self, f: &Future) -> usize {
        let mut idx = 0;
        for &o in &f.obs {
            idx = idx * self.n_obs + o;
        }
        for &a in &f.actions {
            idx = idx * self.n_actions + a;
        }
        idx
    }

    pub fn decode_future(&self, mut idx: usize, m_f: usize) -> Future {
        let n_act = m_f.saturating_sub(1);
        let mut actions = vec![0; n_act];
        for slot in actions.iter_mut().rev() {
            *slot = idx % self.n_actions;
            idx /= self.n_actions;
        }
        let mut obs = vec![0; m_f];
        for slot in obs.iter_mut().rev() {
            *slot = idx % self.n_obs;
            idx /= self.n_obs;
        }
        Future { obs, actions }
    }

    /// Flat index of `F̄ = (z, f)`: window components first.
    pub fn fbar_index(&self, z: &Window, f: &Future, m_f: usize) -> usize {
        let n_f = self.future_count(m_f).expect("future space checked at construction");
        self.window_index(z) * n_f + self.future_index(f)
    }

    pub fn check_window(&self, w: &Window) -> Result<()> {
        if w.obs.len() != w.actions.len() {
            return Err(Error::argument("window has unequal observation and action counts"));
        }
        if let Some(&o) = w.obs.iter().find(|&&o| o >= self.n_obs) {
            return Err(Error::argument(format!("observation {o} out of range {}", self.n_obs)));
        }
        if let Some(&a) = w.actions.iter().find(|&&a| a >= self.n_actions) {
            return Err(Error::argument(format!("action {a} out of range {}", self.n_actions)));
        }
        Ok(())
    }
}

/// Index arithmetic on the augmented space `Z x S` with `|Z| = (|O||A|)^M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedSpace {
    pub alphabet: Alphabet,
    pub n_states: usize,
    pub memory: usize,
}

impl AugmentedSpace {
    pub fn new(n_states: usize, n_obs: usize, n_actions: usize, memory: usize) -> Result<Self> {
        let space = AugmentedSpace {
            alphabet: Alphabet::new(n_obs, n_actions),
            n_states,
            memory,
        };
        let n = space.alphabet.window_count(memory)?;
        if n.saturating_mul(n_states) > MAX_ENUMERATION {
            return Err(Error::Capacity {
                what: "augmented state space".into(),
                required: n.saturating_mul(n_states),
                limit: MAX_ENUMERATION,
            });
        }
        Ok(space)
    }

    pub fn n_windows(&self) -> usize {
        self.alphabet.window_count(self.memory).expect("checked at construction")
    }

    pub fn size(&self) -> usize {
        self.n_windows() * self.n_states
    }

    pub fn index(&self, z_index: usize, s: usize) -> usize {
        z_index * self.n_states + s
    }

    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.n_states, idx % self.n_states)
    }

    pub fn window(&self, z_index: usize) -> Window {
        self.alphabet.decode_window(z_index, self.memory)
    }

    pub fn shift_index(&self, z_index: usize, o: usize, a: usize) -> usize {
        if self.memory == 0 {
            return 0;
        }
        let w = self.window(z_index).shift(&o, &a);
        self.alphabet.window_index(&w)
    }
}

/// Probability table over the augmented space `(z, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedDistribution {
    pub space: AugmentedSpace,
    /// Indexed by `z_index * n_states + s`.
    pub probs: Vec<f64>,
}

impl AugmentedDistribution {
    pub fn new(space: AugmentedSpace, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != space.size() {
            return Err(Error::argument(format!(
                "augmented distribution has {} entries, expected {}",
                probs.len(),
                space.size()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::argument("augmented distribution has a negative entry"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::argument(format!("augmented distribution sums to {total}")));
        }
        Ok(AugmentedDistribution { space, probs })
    }

    /// Marginal over latent states.
    pub fn state_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.space.n_states];
        for (i, &p) in self.probs.iter().enumerate() {
            out[i % self.space.n_states] += p;
        }
        out
    }

    /// Marginal over memory windows.
    pub fn window_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.space.n_windows()];
        for (i, &p) in self.probs.iter().enumerate() {
            out[i / self.space.n_states] += p;
        }
        out
    }

    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self.probs.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shift_drops_oldest_pair() {
        let w = Window::from_pairs(vec![(0usize, 1usize), (2, 0)]);
        let s = w.shift(&3, &1);
        assert_eq!(s, Window::from_pairs(vec![(2, 0), (3, 1)]));
        let e: Window = Window::empty();
        assert_eq!(e.shift(&1, &1), e);
    }

    #[test]
    fn window_index_orders_observations_before_actions() {
        let ab = Alphabet::new(3, 2);
        // obs (1, 2), actions (0, 1): ((1*3 + 2)*2 + 0)*2 + 1
        let w = Window { obs: vec![1, 2], actions: vec![0, 1] };
        assert_eq!(ab.window_index(&w), ((1 * 3 + 2) * 2) * 2 + 1);
    }

    proptest! {
        #[test]
        fn window_encoding_round_trips(idx in 0usize..(4*2usize).pow(3)) {
            let ab = Alphabet::new(4, 2);
            let w = ab.decode_window(idx, 3);
            prop_assert_eq!(ab.window_index(&w), idx);
        }

        #[test]
        fn future_encoding_round_trips(idx in 0usize..(3usize.pow(3) * 2usize.pow(2))) {
            let ab = Alphabet::new(3, 2);
            let f = ab.decode_future(idx, 3);
            prop_assert_eq!(f.actions.len(), 2);
            prop_assert_eq!(ab.future_index(&f), idx);
        }
    }
}
