use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix_rows;
use super::space::{Alphabet, Window};
use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// A policy that can act on windows of `(O, A)` pairs and report the
/// likelihood (probability or density) of an action.
pub trait ActingPolicy<O, A>: Sync {
    fn memory(&self) -> usize;
    fn sample_action<R: Rng + ?Sized>(&self, z: &Window<O, A>, o: &O, rng: &mut R) -> Result<A>;
    fn likelihood(&self, z: &Window<O, A>, o: &O, a: &A) -> Result<f64>;
}

/// M-memory policy `pi(a | z, o)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryPolicy {
    Tabular(TabularPolicy),
    LinearGain(LinearGainPolicy),
}

/// `table[z][o][a]` with `z` the flat window index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub memory: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    pub table: Vec<Vec<Vec<f64>>>,
}

/// `a = F [o; z] + sigma * eps`, with `z` flattened observations first,
/// oldest first. `exploration_std = 0` gives the deterministic policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGainPolicy {
    pub memory: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    #[serde(with = "matrix_rows")]
    pub gain: DMatrix<f64>,
    #[serde(default)]
    pub exploration_std: f64,
}

impl TabularPolicy {
    pub fn from_fn(
        memory: usize,
        n_obs: usize,
        n_actions: usize,
        f: impl Fn(&Window, usize) -> Vec<f64>,
    ) -> Result<Self> {
        let ab = Alphabet::new(n_obs, n_actions);
        let n_z = ab.window_count(memory)?;
        let table = (0..n_z)
            .map(|zi| {
                let z = ab.decode_window(zi, memory);
                (0..n_obs).map(|o| f(&z, o)).collect()
            })
            .collect();
        let p = TabularPolicy {
            memory,
            n_obs,
            n_actions,
            table,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(memory: usize, n_obs: usize, n_actions: usize) -> Result<Self> {
        Self::from_fn(memory, n_obs, n_actions, |_, _| vec![1.0 / n_actions as f64; n_actions])
    }

    /// Memory-less policy from `rows[o][a]`.
    pub fn memoryless(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_obs = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let p = TabularPolicy {
            memory: 0,
            n_obs,
            n_actions,
            table: vec![rows],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::new(self.n_obs, self.n_actions)
    }

    pub fn validate(&self) -> Result<()> {
        let n_z = self.alphabet().window_count(self.memory)?;
        if self.table.len() != n_z {
            return Err(Error::config(format!(
                "policy table has {} windows, memory {} needs {n_z}",
                self.table.len(),
                self.memory
            )));
        }
        for (zi, rows) in self.table.iter().enumerate() {
            if rows.len() != self.n_obs {
                return Err(Error::config(format!("policy table[{zi}] needs {} rows", self.n_obs)));
            }
            for (o, row) in rows.iter().enumerate() {
                if row.len() != self.n_actions || row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::config(format!("policy table[{zi}][{o}] is not a distribution")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_TOL {
                    return Err(Error::config(format!("policy table[{zi}][{o}] sums to {total}")));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn prob(&self, z_index: usize, o: usize, a: usize) -> f64 {
        self.table[z_index][o][a]
    }

    #[inline]
    pub fn row(&self, z_index: usize, o: usize) -> &[f64] {
        &self.table[z_index][o]
    }

    /// Window index of the last `memory` pairs of `w` (which may be longer).
    pub fn z_index(&self, w: &Window) -> usize {
        let ab = self.alphabet();
        if w.len() == self.memory {
            ab.window_index(w)
        } else {
            ab.window_index(&w.suffix(self.memory))
        }
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, z_index: usize, o: usize, rng: &mut R) -> usize {
        sample_categorical(self.row(z_index, o), rng)
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding slack: last index with positive mass.
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

impl LinearGainPolicy {
    pub fn input_dim(&self) -> usize {
        self.obs_dim * (1 + self.memory) + self.action_dim * self.memory
    }

    pub fn validate(&self) -> Result<()> {
        if self.gain.nrows() != self.action_dim || self.gain.ncols() != self.input_dim() {
            return Err(Error::config(format!(
                "gain must be {}x{}, got {}x{}",
                self.action_dim,
                self.input_dim(),
                self.gain.nrows(),
                self.gain.ncols()
            )));
        }
        if !(self.exploration_std >= 0.0) || !self.exploration_std.is_finite() {
            return Err(Error::config("exploration_std must be finite and nonnegative"));
        }
        Ok(())
    }

    fn input(&self, z: &Window<Vec<f64>, Vec<f64>>, o: &[f64]) -> Result<DVector<f64>> {
        if z.len() < self.memory {
            return Err(Error::argument("window shorter than policy memory"));
        }
        let z = z.suffix(self.memory);
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(o);
        for ob in &z.obs {
            x.extend_from_slice(ob);
        }
        for a in &z.actions {
            x.extend_from_slice(a);
        }
        if x.len() != self.input_dim() {
            return Err(Error::argument("observation or action dimension mismatch"));
        }
        Ok(DVector::from_vec(x))
    }

    pub fn mean_action(&self, z: &Window<Vec<f64>, Vec<f64>>, o: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.gain * self.input(z, o)?)
    }
}

impl MemoryPolicy {
    pub fn memory(&self) -> usize {
        match self {
            MemoryPolicy::Tabular(p) => p.memory,
            MemoryPolicy::LinearGain(p) => p.memory,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MemoryPolicy::Tabular(p) => p.validate(),
            MemoryPolicy::LinearGain(p) => p.validate(),
        }
    }

    pub fn as_tabular(&self) -> Result<&TabularPolicy> {
        match self {
            MemoryPolicy::Tabular(p) => Ok(p),
            MemoryPolicy::LinearGain(_) => Err(Error::config("expected a tabular policy")),
        }
    }

    pub fn as_linear_gain(&self) -> Result<&LinearGainPolicy> {
        match self {
            MemoryPolicy::LinearGain(p) => Ok(p),
            MemoryPolicy::Tabular(_) => Err(Error::config("expected a linear-gain policy")),
        }
    }
}

impl From<TabularPolicy> for MemoryPolicy {
    fn from(p: TabularPolicy) -> Self {
        MemoryPolicy::Tabular(p)
    }
}

impl From<LinearGainPolicy> for MemoryPolicy {
    fn from(p: LinearGainPolicy) -> Self {
        MemoryPolicy::LinearGain(p)
    }
}

impl ActingPolicy<usize, usize> for TabularPolicy {
    fn memory(&self) -> usize {
        self.memory
    }

    fn sample_action<R: Rng + ?Sized>(&self, z: &Window, o: &usize, rng: &mut R) -> Result<usize> {
        if *o >= self.n_obs {
            return Err(Error::argument(format!("observation {o} out of range")));
        }
        Ok(self.sample_index(self.z_index(z), *o, rng))
    }

    fn likelihood(&self, z: &Window, o: &usize, a: &usize) -> Result<f64> {
        if *o >= self.n_obs || *a >= self.n_actions {
            return Err(Error::argument(format!("symbol (o={o}, a={a}) out of range")));
        }
        Ok(self.prob(self.z_index(z), *o, *a))
    }
}

impl ActingPolicy<usize, usize> for MemoryPolicy {
    fn memory(&self) -> usize {
        MemoryPolicy::memory(self)
    }

    fn sample_action<R: Rng + ?Sized>(&self, z: &Window, o: &usize, rng: &mut R) -> Result<usize> {
        self.as_tabular()?.sample_action(z, o, rng)
    }

    fn likelihood(&self, z: &Window, o: &usize, a: &usize) -> Result<f64> {
        self.as_tabular()?.likelihood(z, o, a)
    }
}

type VecWindow = Window<Vec<f64>, Vec<f64>>;

impl ActingPolicy<Vec<f64>, Vec<f64>> for LinearGainPolicy {
    fn memory(&self) -> usize {
        self.memory
    }

    fn sample_action<R: Rng + ?Sized>(&self, z: &VecWindow, o: &Vec<f64>, rng: &mut R) -> Result<Vec<f64>> {
        let mut a = self.mean_action(z, o)?;
        if self.exploration_std > 0.0 {
            for x in a.iter_mut() {
                let e: f64 = StandardNormal.sample(rng);
                *x += self.exploration_std * e;
            }
        }
        Ok(a.iter().copied().collect())
    }

    /// Gaussian density of `a`; for a deterministic gain, 1 at the mean
    /// action and 0 elsewhere.
    fn likelihood(&self, z: &VecWindow, o: &Vec<f64>, a: &Vec<f64>) -> Result<f64> {
        let mean = self.mean_action(z, o)?;
        if a.len() != mean.len() {
            return Err(Error::argument("action dimension mismatch"));
        }
        let diff = DVector::from_column_slice(a) - mean;
        if self.exploration_std == 0.0 {
            return Ok(if diff.amax() <= 1e-12 { 1.0 } else { 0.0 });
        }
        let s2 = self.exploration_std * self.exploration_std;
        let d = a.len() as f64;
        let norm = (2.0 * std::f64::consts::PI * s2).powf(-0.5 * d);
        Ok(norm * (-0.5 * diff.norm_squared() / s2).exp())
    }
}

impl ActingPolicy<Vec<f64>, Vec<f64>> for MemoryPolicy {
    fn memory(&self) -> usize {
        MemoryPolicy::memory(self)
    }

    fn sample_action<R: Rng + ?Sized>(&self, z: &VecWindow, o: &Vec<f64>, rng: &mut R) -> Result<Vec<f64>> {
        self.as_linear_gain()?.sample_action(z, o, rng)
    }

    fn likelihood(&self, z: &VecWindow, o: &Vec<f64>, a: &Vec<f64>) -> Result<f64> {
        self.as_linear_gain()?.likelihood(z, o, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_policy_is_valid() {
        let p = TabularPolicy::uniform(2, 3, 2).unwrap();
        assert_eq!(p.table.len(), 36);
        assert_eq!(p.prob(5, 1, 0), 0.5);
    }

    #[test]
    fn rejects_bad_rows() {
        let err = TabularPolicy::memoryless(vec![vec![0.7, 0.2]]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn categorical_sampling_respects_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }

    #[test]
    fn linear_gain_round_trips_json() {
        let p = MemoryPolicy::LinearGain(LinearGainPolicy {
            memory: 1,
            obs_dim: 1,
            action_dim: 1,
            gain: DMatrix::from_row_slice(1, 3, &[-0.5, 0.1, 0.2]),
            exploration_std: 0.3,
        });
        p.validate().unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let back: MemoryPolicy = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }
}
