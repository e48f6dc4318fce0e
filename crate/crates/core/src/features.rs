//! Feature maps `phi_F̄(z, f)` and `phi_H(h)` and kernels on their
//! embeddings.
//!
//! One-hot indices follow the canonical lexicographic ordering of
//! [`Alphabet`]: window components before future components, observations
//! before actions, oldest first.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Alphabet, Future, Window};

/// Sparse vector as `(index, value)` pairs.
pub type SparseVec = Vec<(usize, f64)>;

pub trait FbarFeatures<O, A>: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, z: &Window<O, A>, f: &Future<O, A>) -> SparseVec;
}

/// History features; `o` is the current observation, which reductions such
/// as `H := O` use instead of the window.
pub trait HistoryFeatures<O, A>: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, h: &Window<O, A>, o: &O) -> SparseVec;
}

pub fn to_dense(v: &SparseVec, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for &(i, x) in v {
        out[i] += x;
    }
    out
}

/// Unit vector `e_index` of length `size`.
pub fn one_hot(size: usize, index: usize) -> Result<Vec<f64>> {
    if index >= size {
        return Err(Error::argument(format!("one-hot index {index} out of range {size}")));
    }
    let mut v = vec![0.0; size];
    v[index] = 1.0;
    Ok(v)
}

/// `(1, x ⊗ x)` flattened row-major, before any scaling.
pub fn quadratic_features(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("quadratic features of a non-finite vector"));
    }
    let mut out = Vec::with_capacity(1 + x.len() * x.len());
    out.push(1.0);
    for &a in x {
        for &b in x {
            out.push(a * b);
        }
    }
    Ok(out)
}

/// One-hot over `F̄ = (z, f)` with `|F̄| = (|O||A|)^M |O|^{M_F} |A|^{M_F-1}`.
#[derive(Debug, Clone, Copy)]
pub struct OneHotFbar {
    pub alphabet: Alphabet,
    pub m: usize,
    pub m_f: usize,
    n_future: usize,
    dim: usize,
}

impl OneHotFbar {
    pub fn new(alphabet: Alphabet, m: usize, m_f: usize) -> Result<Self> {
        let n_future = alphabet.future_count(m_f)?;
        let dim = alphabet
            .window_count(m)?
            .checked_mul(n_future)
            .ok_or_else(|| Error::argument("feature dimension overflow"))?;
        Ok(OneHotFbar {
            alphabet,
            m,
            m_f,
            n_future,
            dim,
        })
    }

    pub fn index(&self, z: &Window, f: &Future) -> usize {
        self.alphabet.window_index(z) * self.n_future + self.alphabet.future_index(f)
    }

    pub fn decode(&self, idx: usize) -> (Window, Future) {
        (
            self.alphabet.decode_window(idx / self.n_future, self.m),
            self.alphabet.decode_future(idx % self.n_future, self.m_f),
        )
    }
}

impl FbarFeatures<usize, usize> for OneHotFbar {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: &Window, f: &Future) -> SparseVec {
        vec![(self.index(z, f), 1.0)]
    }
}

/// One-hot over histories of `M_H` pairs.
#[derive(Debug, Clone, Copy)]
pub struct OneHotHistory {
    pub alphabet: Alphabet,
    pub m_h: usize,
    dim: usize,
}

impl OneHotHistory {
    pub fn new(alphabet: Alphabet, m_h: usize) -> Result<Self> {
        Ok(OneHotHistory {
            alphabet,
            m_h,
            dim: alphabet.window_count(m_h)?,
        })
    }
}

impl HistoryFeatures<usize, usize> for OneHotHistory {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, h: &Window, _o: &usize) -> SparseVec {
        vec![(self.alphabet.window_index(h), 1.0)]
    }
}

/// One-hot of the current observation, the `H := O` reduction for fully
/// observed models.
#[derive(Debug, Clone, Copy)]
pub struct CurrentObservation {
    pub n_obs: usize,
}

impl HistoryFeatures<usize, usize> for CurrentObservation {
    fn dim(&self) -> usize {
        self.n_obs
    }

    fn eval(&self, _h: &Window, o: &usize) -> SparseVec {
        vec![(*o, 1.0)]
    }
}

fn flatten_window(out: &mut Vec<f64>, w: &Window<Vec<f64>, Vec<f64>>) {
    for o in &w.obs {
        out.extend_from_slice(o);
    }
    for a in &w.actions {
        out.extend_from_slice(a);
    }
}

/// `(1, x ⊗ x)` scaled so that `||phi|| <= 1` whenever every coordinate of
/// `x` lies in `[-bound, bound]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadraticMap {
    pub input_dim: usize,
    pub bound: f64,
}

impl QuadraticMap {
    pub fn dim(&self) -> usize {
        1 + self.input_dim * self.input_dim
    }

    pub fn scale(&self) -> f64 {
        let sq = self.input_dim as f64 * self.bound * self.bound;
        1.0 / (1.0 + sq * sq).sqrt()
    }

    pub fn eval_vec(&self, x: &[f64]) -> SparseVec {
        let s = self.scale();
        let mut out = Vec::with_capacity(self.dim());
        out.push((0, s));
        for (i, &a) in x.iter().enumerate() {
            for (j, &b) in x.iter().enumerate() {
                out.push((1 + i * x.len() + j, s * a * b));
            }
        }
        out
    }
}

/// Quadratic features of the flattened `(z, f)` for vector-valued models.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticFbar(pub QuadraticMap);

impl FbarFeatures<Vec<f64>, Vec<f64>> for QuadraticFbar {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, z: &Window<Vec<f64>, Vec<f64>>, f: &Future<Vec<f64>, Vec<f64>>) -> SparseVec {
        let mut x = Vec::with_capacity(self.0.input_dim);
        flatten_window(&mut x, z);
        for o in &f.obs {
            x.extend_from_slice(o);
        }
        for a in &f.actions {
            x.extend_from_slice(a);
        }
        debug_assert_eq!(x.len(), self.0.input_dim);
        self.0.eval_vec(&x)
    }
}

/// Quadratic features of the flattened history.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticHistory(pub QuadraticMap);

impl HistoryFeatures<Vec<f64>, Vec<f64>> for QuadraticHistory {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, h: &Window<Vec<f64>, Vec<f64>>, _o: &Vec<f64>) -> SparseVec {
        let mut x = Vec::with_capacity(self.0.input_dim);
        flatten_window(&mut x, h);
        self.0.eval_vec(&x)
    }
}

type FbarFn<O, A> = dyn Fn(&Window<O, A>, &Future<O, A>) -> Vec<f64> + Sync + Send;
type HistoryFn<O, A> = dyn Fn(&Window<O, A>, &O) -> Vec<f64> + Sync + Send;

/// User-supplied dense `phi_F̄`.
pub struct CustomFbar<O, A> {
    pub dim: usize,
    pub f: Box<FbarFn<O, A>>,
}

impl<O, A> FbarFeatures<O, A> for CustomFbar<O, A> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: &Window<O, A>, f: &Future<O, A>) -> SparseVec {
        (self.f)(z, f).into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect()
    }
}

/// User-supplied dense `phi_H`.
pub struct CustomHistory<O, A> {
    pub dim: usize,
    pub f: Box<HistoryFn<O, A>>,
}

impl<O, A> HistoryFeatures<O, A> for CustomHistory<O, A> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, h: &Window<O, A>, o: &O) -> SparseVec {
        (self.f)(h, o).into_iter().enumerate().filter(|(_, v)| *v != 0.0).collect()
    }
}

/// Kernels on feature embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    /// `exp(-||x - y||^2 / (2 b^2))`; `bandwidth = None` selects the median
    /// heuristic on the data.
    Gaussian { bandwidth: Option<f64> },
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            Kernel::Gaussian { bandwidth } => {
                let b = bandwidth.expect("bandwidth resolved before evaluation");
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * b * b)).exp()
            }
        }
    }

    /// Resolves the median-heuristic bandwidth on `points`.
    pub fn resolved(&self, points: &[Vec<f64>]) -> Kernel {
        match *self {
            Kernel::Gaussian { bandwidth: None } => Kernel::Gaussian {
                bandwidth: Some(median_heuristic(points)),
            },
            k => k,
        }
    }
}

/// Median of pairwise Euclidean distances over the first 1000 points;
/// 1 when all points coincide.
pub fn median_heuristic(points: &[Vec<f64>]) -> f64 {
    let pts = &points[..points.len().min(1000)];
    let mut d: Vec<f64> = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let v: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(v.sqrt());
        }
    }
    d.retain(|&x| x > 0.0);
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    *d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
}

pub fn gram_matrix(kernel: &Kernel, points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

pub fn cross_gram(kernel: &Kernel, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| kernel.eval(&a[i], &b[j]))
}
