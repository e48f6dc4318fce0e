use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{matrix_rows, Environment, MemoryPolicy};
use crate::error::{Error, Result};

const PSD_TOL: f64 = 1e-10;

/// Linear-quadratic-Gaussian model
/// `s' = A s + B a + e1`, `o = C s + e2`, `r = -(s'Qs + a'Ra)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LqgModel {
    #[serde(with = "matrix_rows")]
    pub a: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub b: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub c: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub q: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub r: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub noise_cov_state: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub noise_cov_obs: DMatrix<f64>,
    pub gamma: f64,
    pub initial_mean: Vec<f64>,
    #[serde(with = "matrix_rows")]
    pub initial_cov: DMatrix<f64>,
    #[serde(skip)]
    factors: OnceLock<Factors>,
}

#[derive(Debug, Clone)]
struct Factors {
    state: DMatrix<f64>,
    obs: DMatrix<f64>,
    initial: DMatrix<f64>,
}

/// Symmetric square root `L` with `L L' = cov`, valid for singular PSD input.
fn psd_root(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.clone());
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose()
}

fn check_psd(m: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::config(format!("{what} must be {n}x{n}")));
    }
    if crate::linalg::asymmetry(m) > PSD_TOL {
        return Err(Error::config(format!("{what} is not symmetric")));
    }
    if crate::linalg::min_eigenvalue(m) < -PSD_TOL {
        return Err(Error::config(format!("{what} is not positive semidefinite")));
    }
    Ok(())
}

impl PartialEq for LqgModel {
    fn eq(&self, o: &Self) -> bool {
        self.a == o.a
            && self.b == o.b
            && self.c == o.c
            && self.q == o.q
            && self.r == o.r
            && self.noise_cov_state == o.noise_cov_state
            && self.noise_cov_obs == o.noise_cov_obs
            && self.gamma == o.gamma
            && self.initial_mean == o.initial_mean
            && self.initial_cov == o.initial_cov
    }
}

impl LqgModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        noise_cov_state: DMatrix<f64>,
        noise_cov_obs: DMatrix<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = LqgModel {
            initial_mean: vec![0.0; n],
            initial_cov: noise_cov_state.clone(),
            a,
            b,
            c,
            q,
            r,
            noise_cov_state,
            noise_cov_obs,
            gamma,
            factors: OnceLock::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if n == 0 || self.a.ncols() != n {
            return Err(Error::config("A must be square and nonempty"));
        }
        if self.b.nrows() != n {
            return Err(Error::config("B must have as many rows as A"));
        }
        if self.c.ncols() != n {
            return Err(Error::config("C must have as many columns as A has rows"));
        }
        check_psd(&self.q, n, "Q")?;
        check_psd(&self.r, self.action_dim(), "R")?;
        check_psd(&self.noise_cov_state, n, "noise_cov_state")?;
        check_psd(&self.noise_cov_obs, self.obs_dim(), "noise_cov_obs")?;
        check_psd(&self.initial_cov, n, "initial_cov")?;
        if self.initial_mean.len() != n {
            return Err(Error::config("initial_mean has the wrong length"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let m: LqgModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    fn factors(&self) -> &Factors {
        self.factors.get_or_init(|| Factors {
            state: psd_root(&self.noise_cov_state),
            obs: psd_root(&self.noise_cov_obs),
            initial: psd_root(&self.initial_cov),
        })
    }

    fn gaussian<R: Rng + ?Sized>(root: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
        let e = DVector::from_fn(root.ncols(), |_, _| StandardNormal.sample(rng));
        root * e
    }
}

impl Environment for LqgModel {
    type State = DVector<f64>;
    type Obs = Vec<f64>;
    type Action = Vec<f64>;

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_column_slice(&self.initial_mean) + Self::gaussian(&self.factors().initial, rng)
    }

    fn sample_obs<R: Rng + ?Sized>(&self, s: &DVector<f64>, rng: &mut R) -> Vec<f64> {
        let o = &self.c * s + Self::gaussian(&self.factors().obs, rng);
        o.iter().copied().collect()
    }

    fn reward(&self, s: &DVector<f64>, a: &Vec<f64>) -> f64 {
        let a = DVector::from_column_slice(a);
        -(s.dot(&(&self.q * s)) + a.dot(&(&self.r * &a)))
    }

    fn sample_next<R: Rng + ?Sized>(&self, s: &DVector<f64>, a: &Vec<f64>, rng: &mut R) -> DVector<f64> {
        let a = DVector::from_column_slice(a);
        &self.a * s + &self.b * a + Self::gaussian(&self.factors().state, rng)
    }

    fn pad_pair(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.obs_dim()], vec![0.0; self.action_dim()])
    }

    fn check_policy(&self, policy: &MemoryPolicy) -> Result<()> {
        let p = policy.as_linear_gain()?;
        p.validate()?;
        if p.obs_dim != self.obs_dim() || p.action_dim != self.action_dim() {
            return Err(Error::config("policy dimensions do not match the LQG model"));
        }
        Ok(())
    }
}
