//! Minimax estimator with RKHS value and critic classes.
//!
//! With data weights `D = diag(w)`, critic Gram `K_H` and residual
//! `r_i = mu_i R_i - (q(F̄_i) - gamma mu_i q(F̄'_i))`, the inner maximum over
//! `xi` is `r' A r / 2` with `A = D K_H (lambda D K_H + alpha I)^{-1} D`.
//! By the representer theorem `q = sum_j c_j psi_j` with
//! `psi_j = k(., F̄_j) - gamma mu_j k(., F̄'_j)`, and the outer minimum solves
//! `(A G + alpha' I) c = A y` where `G_ij = <psi_i, psi_j>`.

use std::collections::BTreeMap;
use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use super::linear::{EstimatorConfig, ValueEstimate};
use crate::data::{importance_ratio, SampleView};
use crate::error::{Error, Result};
use crate::features::{cross_gram, gram_matrix, to_dense, FbarFeatures, HistoryFeatures, Kernel};
use crate::linalg::solve_checked;
use crate::model::ActingPolicy;

/// Data points after merging duplicates of `(F̄, F̄', H, mu)`.
struct Aggregated {
    x: Vec<Vec<f64>>,
    x_next: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    mu: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

fn key(parts: &[&[f64]]) -> Vec<u64> {
    parts.iter().flat_map(|p| p.iter().map(|v| v.to_bits()).chain([u64::MAX])).collect()
}

fn aggregate<O, A, FF, FH, PE, PB>(
    view: &SampleView<'_, O, A>,
    phi_f: &FF,
    phi_h: &FH,
    policy_e: &PE,
    policy_b: &PB,
) -> Result<Aggregated>
where
    A: Debug,
    FF: FbarFeatures<O, A> + ?Sized,
    FH: HistoryFeatures<O, A> + ?Sized,
    PE: ActingPolicy<O, A>,
    PB: ActingPolicy<O, A>,
{
    let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    let mut agg = Aggregated {
        x: vec![],
        x_next: vec![],
        h: vec![],
        mu: vec![],
        y: vec![],
        w: vec![],
    };
    for (i, t) in view.tuples.iter().enumerate() {
        let w = view.weight(i);
        if w == 0.0 {
            continue;
        }
        let mu = importance_ratio(policy_e, policy_b, &t.z, &t.o, &t.a)?;
        let x = to_dense(&phi_f.eval(&t.z, &t.f), phi_f.dim());
        let xn = to_dense(&phi_f.eval(&t.z_next, &t.f_next), phi_f.dim());
        let h = to_dense(&phi_h.eval(&t.h, &t.o), phi_h.dim());
        let k = key(&[&x, &xn, &h, &[mu]]);
        let y = mu * t.r;
        match index.get(&k) {
            Some(&j) => {
                // Weighted running mean of y.
                let total = agg.w[j] + w;
                agg.y[j] += (y - agg.y[j]) * w / total;
                agg.w[j] = total;
            }
            None => {
                index.insert(k, agg.w.len());
                agg.x.push(x);
                agg.x_next.push(xn);
                agg.h.push(h);
                agg.mu.push(mu);
                agg.y.push(y);
                agg.w.push(w);
            }
        }
    }
    if agg.w.is_empty() {
        return Err(Error::argument("RKHS estimator needs at least one weighted tuple"));
    }
    Ok(agg)
}

#[derive(Debug, Clone, Copy)]
pub struct RkhsKernels {
    pub fbar: Kernel,
    pub history: Kernel,
}

/// Minimax value estimate with RKHS classes over the embeddings
/// `phi_f` and `phi_h`. Requires `alpha > 0` and `alpha' > 0`.
#[allow(clippy::too_many_arguments)]
pub fn minimax_rkhs<O, A, FF, FH, PE, PB>(
    view: &SampleView<'_, O, A>,
    phi_f: &FF,
    phi_h: &FH,
    kernels: RkhsKernels,
    policy_e: &PE,
    policy_b: &PB,
    gamma: f64,
    cfg: &EstimatorConfig,
) -> Result<ValueEstimate>
where
    A: Debug,
    FF: FbarFeatures<O, A> + ?Sized,
    FH: HistoryFeatures<O, A> + ?Sized,
    PE: ActingPolicy<O, A>,
    PB: ActingPolicy<O, A>,
{
    cfg.validate()?;
    if cfg.alpha <= 0.0 || cfg.alpha_prime <= 0.0 {
        return Err(Error::config("RKHS estimator needs alpha > 0 and alpha_prime > 0"));
    }
    if view.initial.is_empty() {
        return Err(Error::argument("RKHS estimator needs initial samples"));
    }
    let d = aggregate(view, phi_f, phi_h, policy_e, policy_b)?;
    let m = d.w.len();

    let mut both = d.x.clone();
    both.extend(d.x_next.iter().cloned());
    let kf = kernels.fbar.resolved(&both);
    let kh = kernels.history.resolved(&d.h);

    let k_hh = gram_matrix(&kh, &d.h);
    let k_all = gram_matrix(&kf, &both);
    let gm = DVector::from_fn(m, |i, _| gamma * d.mu[i]);
    // G = K_xx - diag(gm) K_x'x - K_xx' diag(gm) + diag(gm) K_x'x' diag(gm).
    let g = DMatrix::from_fn(m, m, |i, j| {
        k_all[(i, j)] - gm[i] * k_all[(m + i, j)] - gm[j] * k_all[(i, m + j)] + gm[i] * gm[j] * k_all[(m + i, m + j)]
    });

    let dw = DMatrix::from_diagonal(&DVector::from_vec(d.w.clone()));
    let dk = &dw * &k_hh;
    let inner = &dk * cfg.lambda + DMatrix::identity(m, m) * cfg.alpha;
    // A = D K (lambda D K + alpha I)^{-1} D, one column at a time.
    let inner_lu = inner.clone().lu();
    let rhs = dw.clone();
    let sol = inner_lu
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("critic Gram system is singular"))?;
    let resid = (&inner * &sol - &rhs).abs().max();
    if !(resid <= 1e-8 * (1.0 + rhs.abs().max())) {
        return Err(Error::Numerical {
            message: "critic Gram solve inaccurate".into(),
            residual: Some(resid),
        });
    }
    let a = &dk * sol;

    let y = DVector::from_vec(d.y.clone());
    let lhs = &a * &g + DMatrix::identity(m, m) * cfg.alpha_prime;
    let c = solve_checked(&lhs, &(&a * &y))?;

    // q(x) = sum_j c_j [k(x, F̄_j) - gamma mu_j k(x, F̄'_j)].
    let init: Vec<Vec<f64>> = view.initial.iter().map(|s| to_dense(&phi_f.eval(&s.z, &s.f), phi_f.dim())).collect();
    let k_init = cross_gram(&kf, &init, &both);
    let mut coef = DVector::zeros(2 * m);
    for j in 0..m {
        coef[j] = c[j];
        coef[m + j] = -gm[j] * c[j];
    }
    let q_init = k_init * &coef;
    let j_hat: f64 = (0..init.len()).map(|j| view.initial_weight(j) * q_init[j]).sum();

    let r = &y - &g * &c;
    let residual_norm = r.dot(&(&a * &r)).max(0.0);
    if !j_hat.is_finite() || c.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("RKHS estimate is not finite"));
    }
    Ok(ValueEstimate {
        estimator: "minimax_rkhs".into(),
        j_hat,
        coefficients: c.iter().copied().collect(),
        residual_norm,
        config: *cfg,
        n: view.n(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_tabular_dataset, GenerationMode, InitialSample, OfflineDataset, WindowConfig};
    use crate::estimators::{compute_moments, minimax_linear};
    use crate::features::{OneHotFbar, OneHotHistory};
    use crate::model::random::{random_policy, random_pomdp};
    use crate::model::{MemoryPolicy, TabularPolicy};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> (OfflineDataset, OneHotFbar, OneHotHistory, TabularPolicy, TabularPolicy) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_pomdp(2, 2, 2, 0.7, &mut rng);
        let pb = random_policy(0, 2, 2, 0.5, &mut rng).unwrap();
        let pe = random_policy(0, 2, 2, 0.2, &mut rng).unwrap();
        let cfg = WindowConfig::new(0, 1, 1).unwrap();
        let pbm: MemoryPolicy = pb.clone().into();
        let ds = generate_tabular_dataset(&m, &pbm, n, 20, cfg, GenerationMode::IidPerTuple, 3).unwrap();
        let ab = m.alphabet();
        (ds, OneHotFbar::new(ab, 0, 1).unwrap(), OneHotHistory::new(ab, 1).unwrap(), pe, pb)
    }

    const CFG: EstimatorConfig = EstimatorConfig {
        lambda: 1.0,
        alpha: 0.1,
        alpha_prime: 0.05,
    };

    #[test]
    fn linear_kernel_matches_closed_form() {
        let (ds, ff, fh, pe, pb) = setup(200);
        let k = RkhsKernels {
            fbar: Kernel::Linear,
            history: Kernel::Linear,
        };
        let r = minimax_rkhs(&ds.view(), &ff, &fh, k, &pe, &pb, 0.7, &CFG).unwrap();
        let mo = compute_moments(&ds.view(), &ff, &fh, &pe, &pb, 0.7).unwrap();
        let l = minimax_linear(&mo, &CFG).unwrap();
        assert_abs_diff_eq!(r.j_hat, l.j_hat, epsilon = 1e-8);
    }

    #[test]
    fn duplicated_data_leaves_estimate_unchanged() {
        let (ds, ff, fh, pe, pb) = setup(60);
        let k = RkhsKernels {
            fbar: Kernel::Gaussian { bandwidth: Some(1.0) },
            history: Kernel::Gaussian { bandwidth: Some(1.0) },
        };
        let mut dup = ds.clone();
        dup.tuples.extend(ds.tuples.iter().cloned());
        dup.initial_samples.extend(ds.initial_samples.iter().cloned());
        let a = minimax_rkhs(&ds.view(), &ff, &fh, k, &pe, &pb, 0.7, &CFG).unwrap();
        let b = minimax_rkhs(&dup.view(), &ff, &fh, k, &pe, &pb, 0.7, &CFG).unwrap();
        assert_abs_diff_eq!(a.j_hat, b.j_hat, epsilon = 1e-10);
    }

    #[test]
    fn requires_positive_regularizers() {
        let (ds, ff, fh, pe, pb) = setup(10);
        let k = RkhsKernels {
            fbar: Kernel::Linear,
            history: Kernel::Linear,
        };
        let cfg = EstimatorConfig::default();
        assert!(minimax_rkhs(&ds.view(), &ff, &fh, k, &pe, &pb, 0.7, &cfg).is_err());
        let mut no_init = ds.clone();
        no_init.initial_samples = Vec::<InitialSample>::new();
        assert!(minimax_rkhs(&no_init.view(), &ff, &fh, k, &pe, &pb, 0.7, &CFG).is_err());
    }
}
