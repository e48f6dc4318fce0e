//! Exact minimax over finite candidate classes.

use std::fmt::Debug;

use rayon::prelude::*;

use super::linear::{EstimatorConfig, ValueEstimate};
use crate::data::{importance_ratio, SampleView};
use crate::error::{Error, Result};
use crate::model::{ActingPolicy, Future, Window};

/// Hard cap on `|Q| * |Xi|`.
pub const MAX_PAIRS: usize = 1_000_000;

pub type ValueFn<'a, O, A> = Box<dyn Fn(&Window<O, A>, &Future<O, A>) -> f64 + Sync + 'a>;
pub type CriticFn<'a, O, A> = Box<dyn Fn(&Window<O, A>, &O) -> f64 + Sync + 'a>;

/// Candidate class with optional squared norms, used only when the
/// corresponding regularizer (`alpha'` for values, `alpha` for critics) is
/// positive.
pub struct FunctionClass<F> {
    pub members: Vec<F>,
    pub norms_sq: Option<Vec<f64>>,
}

impl<F> FunctionClass<F> {
    pub fn new(members: Vec<F>) -> Self {
        FunctionClass { members, norms_sq: None }
    }

    pub fn with_norms(members: Vec<F>, norms_sq: Vec<f64>) -> Result<Self> {
        if norms_sq.len() != members.len() {
            return Err(Error::argument("one norm per class member required"));
        }
        Ok(FunctionClass {
            members,
            norms_sq: Some(norms_sq),
        })
    }

    fn norm_sq(&self, k: usize, reg: f64) -> Result<f64> {
        if reg == 0.0 {
            return Ok(0.0);
        }
        match &self.norms_sq {
            Some(v) => Ok(v[k]),
            None => Err(Error::config("positive norm regularizer needs class norms")),
        }
    }
}

/// Optional sup-norm bounds `C_Q`, `C_Xi` on the evaluated points.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClassBounds {
    pub q: Option<f64>,
    pub xi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EnumeratedEstimate {
    pub estimate: ValueEstimate,
    pub q_index: usize,
    pub xi_index: usize,
    /// `max_xi L(q*, xi)` at the selected value function.
    pub objective: f64,
}

/// Values of the class members on the data.
struct Evaluated {
    q_cur: Vec<Vec<f64>>,
    q_next: Vec<Vec<f64>>,
    q_init: Vec<Vec<f64>>,
    xi: Vec<Vec<f64>>,
}

/// `argmin_q max_xi sum_i w_i [(mu_i (R_i + gamma q(F̄'_i)) - q(F̄_i)) xi(H_i)
/// - lambda xi(H_i)^2 / 2] - alpha ||xi||^2 / 2 + alpha' ||q||^2 / 2`,
/// ties broken by the lowest index.
#[allow(clippy::too_many_arguments)]
pub fn minimax_enumerate<O, A, PE, PB>(
    view: &SampleView<'_, O, A>,
    q_class: &FunctionClass<ValueFn<'_, O, A>>,
    xi_class: &FunctionClass<CriticFn<'_, O, A>>,
    policy_e: &PE,
    policy_b: &PB,
    gamma: f64,
    cfg: &EstimatorConfig,
    bounds: ClassBounds,
) -> Result<EnumeratedEstimate>
where
    O: Sync,
    A: Sync + Debug,
    PE: ActingPolicy<O, A>,
    PB: ActingPolicy<O, A>,
{
    cfg.validate()?;
    let (nq, nx) = (q_class.members.len(), xi_class.members.len());
    if nq == 0 || nx == 0 {
        return Err(Error::argument("enumerated classes must be nonempty"));
    }
    if nq.saturating_mul(nx) > MAX_PAIRS {
        return Err(Error::Capacity {
            what: "candidate pairs".into(),
            required: nq.saturating_mul(nx),
            limit: MAX_PAIRS,
        });
    }
    let n = view.tuples.len();
    if n == 0 {
        return Err(Error::argument("enumerated minimax needs data"));
    }
    if view.initial.is_empty() {
        return Err(Error::argument("enumerated minimax needs initial samples"));
    }
    let mu: Vec<f64> = view
        .tuples
        .iter()
        .map(|t| importance_ratio(policy_e, policy_b, &t.z, &t.o, &t.a))
        .collect::<Result<_>>()?;
    let w: Vec<f64> = (0..n).map(|i| view.weight(i)).collect();

    let ev = Evaluated {
        q_cur: q_class.members.par_iter().map(|q| view.tuples.iter().map(|t| q(&t.z, &t.f)).collect()).collect(),
        q_next: q_class
            .members
            .par_iter()
            .map(|q| view.tuples.iter().map(|t| q(&t.z_next, &t.f_next)).collect())
            .collect(),
        q_init: q_class.members.par_iter().map(|q| view.initial.iter().map(|s| q(&s.z, &s.f)).collect()).collect(),
        xi: xi_class.members.par_iter().map(|x| view.tuples.iter().map(|t| x(&t.h, &t.o)).collect()).collect(),
    };

    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let q_ok: Vec<bool> = (0..nq)
        .map(|k| match bounds.q {
            Some(c) => sup(&ev.q_cur[k]) <= c && sup(&ev.q_next[k]) <= c && sup(&ev.q_init[k]) <= c,
            None => true,
        })
        .collect();
    let xi_ok: Vec<usize> = (0..nx)
        .filter(|&l| bounds.xi.map_or(true, |c| sup(&ev.xi[l]) <= c))
        .collect();
    if !q_ok.iter().any(|&b| b) || xi_ok.is_empty() {
        return Err(Error::argument("no class member satisfies the bounds"));
    }
    let xi_pen: Vec<f64> = (0..nx)
        .map(|l| {
            let quad: f64 = (0..n).map(|i| w[i] * ev.xi[l][i] * ev.xi[l][i]).sum();
            Ok(0.5 * cfg.lambda * quad + 0.5 * cfg.alpha * xi_class.norm_sq(l, cfg.alpha)?)
        })
        .collect::<Result<_>>()?;

    // Inner maximum for each admissible q.
    let inner: Vec<Option<(f64, usize)>> = (0..nq)
        .into_par_iter()
        .map(|k| {
            if !q_ok[k] {
                return None;
            }
            let rho: Vec<f64> = (0..n)
                .map(|i| w[i] * (mu[i] * (view.tuples[i].r + gamma * ev.q_next[k][i]) - ev.q_cur[k][i]))
                .collect();
            let mut best: Option<(f64, usize)> = None;
            for &l in &xi_ok {
                let lin: f64 = rho.iter().zip(&ev.xi[l]).map(|(a, b)| a * b).sum();
                let v = lin - xi_pen[l];
                if best.map_or(true, |(b, _)| v > b) {
                    best = Some((v, l));
                }
            }
            best
        })
        .collect();
    let mut sel: Option<(f64, usize, usize)> = None;
    for (k, b) in inner.iter().enumerate() {
        if let Some((v, l)) = *b {
            let total = v + 0.5 * cfg.alpha_prime * q_class.norm_sq(k, cfg.alpha_prime)?;
            if sel.map_or(true, |(s, _, _)| total < s) {
                sel = Some((total, k, l));
            }
        }
    }
    let (objective, k, l) = sel.expect("at least one admissible q");
    let j_hat: f64 = ev.q_init[k].iter().enumerate().map(|(j, v)| view.initial_weight(j) * v).sum();
    Ok(EnumeratedEstimate {
        estimate: ValueEstimate {
            estimator: "minimax_enumerate".into(),
            j_hat,
            coefficients: vec![k as f64],
            residual_norm: objective,
            config: *cfg,
            n: view.n(),
        },
        q_index: k,
        xi_index: l,
        objective,
    })
}
