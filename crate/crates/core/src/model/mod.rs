//! Environments, memory policies, exact oracles and trajectory sampling.

pub mod lqg;
pub mod oracle;
pub mod policy;
pub mod random;
pub mod simulate;
pub mod space;
pub mod tabular;

use rand::Rng;

use crate::error::Result;
pub use lqg::LqgModel;
pub use policy::{ActingPolicy, LinearGainPolicy, MemoryPolicy, TabularPolicy};
pub use simulate::{sample_tabular_trajectory, sample_trajectory, InitSpec, Trajectory};
pub use space::{Alphabet, AugmentedDistribution, AugmentedSpace, Future, Window};
pub use tabular::TabularPomdp;

/// Generative interface shared by the tabular and LQG models.
pub trait Environment: Sync {
    type State: Clone + Send + Sync;
    type Obs: Clone + Send + Sync + PartialEq;
    type Action: Clone + Send + Sync + PartialEq;

    fn gamma(&self) -> f64;
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;
    fn sample_obs<R: Rng + ?Sized>(&self, s: &Self::State, rng: &mut R) -> Self::Obs;
    fn reward(&self, s: &Self::State, a: &Self::Action) -> f64;
    fn sample_next<R: Rng + ?Sized>(&self, s: &Self::State, a: &Self::Action, rng: &mut R) -> Self::State;
    /// Placeholder pair filling the memory window before the first step.
    fn pad_pair(&self) -> (Self::Obs, Self::Action);
    fn check_policy(&self, policy: &MemoryPolicy) -> Result<()>;
}

/// Serde adapter storing a dense matrix as a list of rows.
pub mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }
}
