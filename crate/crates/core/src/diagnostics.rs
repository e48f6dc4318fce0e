//! Identification and conditioning diagnostics on tabular models: the
//! probability matrices over `F̄`, `S̄_b = supp P_{pi^b}(Z, S)` and `H`, their
//! ranks, overlap ratios and relative condition numbers, and Bellman
//! residuals of candidate value functions.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{future_given_state, history_state_distribution, importance_ratio, population_sample, PopulationSample, SampleView, WindowConfig};
use crate::error::{Error, Result};
use crate::features::HistoryFeatures;
use crate::linalg::{generalized_rayleigh_sup, numerical_rank, pinv, RankInfo, RANK_RTOL};
use crate::model::oracle::{occupancy_tables, policy_value_vector, SUPPORT_TOL};
use crate::model::oracle::initial_augmented_distribution;
use crate::model::{ActingPolicy, AugmentedSpace, Future, TabularPolicy, TabularPomdp, Window};

/// Relative eigenvalue cutoff for the kernels of covariance matrices.
pub const COVARIANCE_RTOL: f64 = 1e-10;

/// Serializes non-finite reals as the strings `"inf"`, `"-inf"`, `"nan"`,
/// which plain JSON numbers cannot carry.
pub mod extended_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(x) => super::serialize(x, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct W(#[serde(with = "super")] f64);
            Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
        }
    }
}

/// `Pr(F̄, H)`, `Pr(F̄ | S̄_b)` and `Pr(S̄_b, H)` under the stationary
/// behavior law. Rows of `f_h` and `f_given_s` follow the one-hot `F̄`
/// order, columns of `f_h` and `s_h` the `H` order.
#[derive(Debug, Clone)]
pub struct ProbabilityMatrices {
    pub config: WindowConfig,
    pub f_h: DMatrix<f64>,
    pub f_given_s: DMatrix<f64>,
    pub s_h: DMatrix<f64>,
    /// Flat `(z, s)` indices (memory `M`) of `S̄_b`, in increasing order.
    pub support: Vec<usize>,
    pub space: AugmentedSpace,
    /// `Pr(H = h)`.
    pub h_marginal: Vec<f64>,
}

fn fbar_count(model: &TabularPomdp, cfg: &WindowConfig) -> Result<(usize, usize)> {
    let ab = model.alphabet();
    let n_f = ab.future_count(cfg.m_f)?;
    Ok((ab.window_count(cfg.m)? * n_f, n_f))
}

/// Column of `Pr(F̄ | S̄ = (z, s))` over all `F̄`.
fn future_column(model: &TabularPomdp, policy_b: &TabularPolicy, cfg: &WindowConfig, zi: usize, s: usize) -> Result<Vec<f64>> {
    let ab = model.alphabet();
    let (dim, n_f) = fbar_count(model, cfg)?;
    let z = ab.decode_window(zi, cfg.m);
    let mut col = vec![0.0; dim];
    for (f, p) in future_given_state(model, policy_b, &z, s, cfg.m_f) {
        col[zi * n_f + ab.future_index(&f)] += p;
    }
    Ok(col)
}

pub fn probability_matrices(model: &TabularPomdp, policy_b: &TabularPolicy, config: WindowConfig) -> Result<ProbabilityMatrices> {
    config.validate()?;
    if policy_b.memory != config.m {
        return Err(Error::config("behavior policy memory differs from the window config"));
    }
    let pop = population_sample(model, policy_b, config)?;
    probability_matrices_from(model, policy_b, &pop)
}

/// As [`probability_matrices`], reusing an existing population sample.
/// `Pr(F̄, H)` is accumulated directly from the tuple measure.
pub fn probability_matrices_from(
    model: &TabularPomdp,
    policy_b: &TabularPolicy,
    pop: &PopulationSample,
) -> Result<ProbabilityMatrices> {
    let cfg = pop.config;
    let ab = model.alphabet();
    let n_s = model.n_states;
    let (dim_f, n_f) = fbar_count(model, &cfg)?;
    let n_h = ab.window_count(cfg.m_h)?;
    let space = model.augmented_space(cfg.m)?;

    let mut f_h = DMatrix::zeros(dim_f, n_h);
    for (t, &w) in pop.tuples.iter().zip(&pop.weights) {
        let fi = ab.window_index(&t.z) * n_f + ab.future_index(&t.f);
        f_h[(fi, ab.window_index(&t.h))] += w;
    }

    // Pr(S̄, H): (z, s) with z the last M pairs of h.
    let hs = &pop.history_state;
    let mut s_h_full = DMatrix::zeros(space.size(), n_h);
    let mut h_marginal = vec![0.0; n_h];
    for hi in 0..n_h {
        let zi = ab.window_index(&hs.space.window(hi).suffix(cfg.m));
        for s in 0..n_s {
            let p = hs.probs[hi * n_s + s];
            s_h_full[(space.index(zi, s), hi)] += p;
            h_marginal[hi] += p;
        }
    }
    let mass: Vec<f64> = (0..space.size()).map(|i| s_h_full.row(i).sum()).collect();
    let support: Vec<usize> = (0..space.size()).filter(|&i| mass[i] > SUPPORT_TOL).collect();
    let s_h = s_h_full.select_rows(&support);

    let mut f_given_s = DMatrix::zeros(dim_f, support.len());
    for (j, &idx) in support.iter().enumerate() {
        let (zi, s) = space.split(idx);
        f_given_s.set_column(j, &DVector::from_vec(future_column(model, policy_b, &cfg, zi, s)?));
    }
    Ok(ProbabilityMatrices {
        config: cfg,
        f_h,
        f_given_s,
        s_h,
        support,
        space,
        h_marginal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank_f_given_s: usize,
    #[serde(with = "extended_float")]
    pub sigma_min_f_given_s: f64,
    pub rank_s_h: usize,
    #[serde(with = "extended_float")]
    pub sigma_min_s_h: f64,
    pub rank_f_h: usize,
    pub s_bar_b_size: usize,
    pub rank_tol: f64,
    /// `rank Pr(F̄ | S̄_b) = |S̄_b|`.
    pub observability: bool,
    /// `rank Pr(S̄_b, H) = |S̄_b|`.
    pub invertibility: bool,
    /// Whether `observability && invertibility` agrees with
    /// `rank Pr(F̄, H) = |S̄_b|`.
    pub iff_holds: bool,
}

pub fn rank_conditions(pm: &ProbabilityMatrices) -> RankReport {
    let n = pm.support.len();
    let a: RankInfo = numerical_rank(&pm.f_given_s, RANK_RTOL);
    let b = numerical_rank(&pm.s_h, RANK_RTOL);
    let c = numerical_rank(&pm.f_h, RANK_RTOL);
    let observability = a.rank == n;
    let invertibility = b.rank == n;
    RankReport {
        rank_f_given_s: a.rank,
        sigma_min_f_given_s: a.sigma_min,
        rank_s_h: b.rank,
        sigma_min_s_h: b.sigma_min,
        rank_f_h: c.rank,
        s_bar_b_size: n,
        rank_tol: RANK_RTOL,
        observability,
        invertibility,
        iff_holds: (observability && invertibility) == (c.rank == n),
    }
}

/// Overlap and conditioning of the one-hot linear class over `S̄`.
/// `iv1`, `dr`, `kappa` and `iv2` are square roots of the generalized
/// Rayleigh suprema; `relative_condition_number` is the unsquared
/// supremum for `(d_{pi^e}, P_{pi^b})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionNumbers {
    #[serde(with = "extended_float")]
    pub iv1: f64,
    #[serde(with = "extended_float")]
    pub dr: f64,
    #[serde(with = "extended_float")]
    pub kappa: f64,
    #[serde(with = "extended_float")]
    pub relative_condition_number: f64,
    /// `sup_{s̄} d_{pi^e}(s̄) / P_{pi^b}(s̄)`.
    #[serde(with = "extended_float")]
    pub overlap_max: f64,
    /// `sup mu(z, o, a)` over behavior-reachable `(z, o)`.
    #[serde(with = "extended_float")]
    pub mu_max: f64,
    #[serde(default, with = "extended_float::option", skip_serializing_if = "Option::is_none")]
    pub iv2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    #[serde(flatten)]
    pub ranks: RankReport,
    #[serde(flatten)]
    pub numbers: ConditionNumbers,
}

/// Second-moment matrices over the indices `idx` of `S̄`.
struct Covariances {
    behavior: DMatrix<f64>,
    evaluation: DMatrix<f64>,
    /// `E[E[phi_S̄ | H] E[phi_S̄ | H]']`.
    history: DMatrix<f64>,
    /// `Pr(S̄, H)` on `idx`.
    s_h: DMatrix<f64>,
    overlap_max: f64,
}

fn covariances(
    model: &TabularPomdp,
    policy_b: &TabularPolicy,
    policy_e: &TabularPolicy,
    cfg: &WindowConfig,
) -> Result<Covariances> {
    let nu = initial_augmented_distribution(model, policy_b)?;
    let occ = occupancy_tables(model, policy_b, policy_e, &nu)?;
    let space = occ.stationary_pb.space;
    let pb = &occ.stationary_pb.probs;
    let de = &occ.d_pie.probs;
    let idx: Vec<usize> = (0..space.size()).filter(|&i| pb[i] > SUPPORT_TOL || de[i] > SUPPORT_TOL).collect();
    let overlap_max = idx
        .iter()
        .map(|&i| {
            if pb[i] > SUPPORT_TOL {
                de[i] / pb[i]
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);

    let hs = history_state_distribution(model, policy_b, cfg)?;
    let ab = model.alphabet();
    let n_s = model.n_states;
    let n_h = hs.space.n_windows();
    let pos: std::collections::HashMap<usize, usize> = idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut s_h = DMatrix::zeros(idx.len(), n_h);
    for hi in 0..n_h {
        let zi = ab.window_index(&hs.space.window(hi).suffix(cfg.m));
        for s in 0..n_s {
            let p = hs.probs[hi * n_s + s];
            if p == 0.0 {
                continue;
            }
            if let Some(&k) = pos.get(&space.index(zi, s)) {
                s_h[(k, hi)] += p;
            }
        }
    }
    let mut history = DMatrix::zeros(idx.len(), idx.len());
    for hi in 0..n_h {
        let ph: f64 = s_h.column(hi).sum();
        if ph > 0.0 {
            let c = s_h.column(hi);
            history += (&c * c.transpose()) / ph;
        }
    }
    let diag = |v: &[f64]| DMatrix::from_diagonal(&DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i])));
    Ok(Covariances {
        behavior: diag(pb),
        evaluation: diag(de),
        history,
        s_h,
        overlap_max,
    })
}

fn mu_max(model: &TabularPomdp, policy_b: &TabularPolicy, policy_e: &TabularPolicy) -> Result<f64> {
    let nu = initial_augmented_distribution(model, policy_b)?;
    let occ = occupancy_tables(model, policy_b, policy_e, &nu)?;
    let space = occ.stationary_pb.space;
    let mut best: f64 = 0.0;
    for i in 0..space.size() {
        if occ.stationary_pb.probs[i] <= SUPPORT_TOL {
            continue;
        }
        let (zi, s) = space.split(i);
        for o in 0..model.n_obs {
            if model.emission[s][o] == 0.0 {
                continue;
            }
            for a in 0..model.n_actions {
                let (pe, pb) = (policy_e.prob(zi, o, a), policy_b.prob(zi, o, a));
                if pb > 0.0 {
                    best = best.max(pe / pb);
                } else if pe > 0.0 {
                    return Ok(f64::INFINITY);
                }
            }
        }
    }
    Ok(best)
}

/// Condition numbers of the one-hot linear class; `phi_h` optionally adds
/// `IV_2` for the linear critic class spanned by `phi_h`.
pub fn condition_numbers(
    model: &TabularPomdp,
    policy_b: &TabularPolicy,
    policy_e: &TabularPolicy,
    config: WindowConfig,
    phi_h: Option<&dyn HistoryFeatures<usize, usize>>,
) -> Result<ConditionNumbers> {
    config.validate()?;
    if policy_b.memory != config.m || policy_e.memory != config.m {
        return Err(Error::config("policy memory differs from the window config"));
    }
    let cov = covariances(model, policy_b, policy_e, &config)?;
    let dr2 = generalized_rayleigh_sup(&cov.evaluation, &cov.behavior, COVARIANCE_RTOL);
    let iv1_2 = generalized_rayleigh_sup(&cov.behavior, &cov.history, COVARIANCE_RTOL);
    let kappa2 = generalized_rayleigh_sup(&cov.evaluation, &cov.history, COVARIANCE_RTOL);
    let iv2 = match phi_h {
        None => None,
        Some(fh) => {
            // E[phi_S̄ phi_H'] M3^+ E[phi_H phi_S̄'] with M3 = E[phi_H phi_H'].
            let ab = model.alphabet();
            let n_h = cov.s_h.ncols();
            let d = fh.dim();
            let mut feat = DMatrix::zeros(n_h, d);
            for hi in 0..n_h {
                let h = ab.decode_window(hi, config.m_h);
                let o = if config.m_h > 0 { h.obs[config.m_h - 1] } else { 0 };
                for (j, v) in fh.eval(&h, &o) {
                    feat[(hi, j)] += v;
                }
            }
            let ph = DVector::from_iterator(n_h, (0..n_h).map(|hi| cov.s_h.column(hi).sum()));
            let m3 = feat.transpose() * DMatrix::from_diagonal(&ph) * &feat;
            let cross = &cov.s_h * &feat;
            let sigma = &cross * pinv(&m3) * cross.transpose();
            Some(generalized_rayleigh_sup(&cov.behavior, &sigma, COVARIANCE_RTOL).sqrt())
        }
    };
    Ok(ConditionNumbers {
        iv1: iv1_2.sqrt(),
        dr: dr2.sqrt(),
        kappa: kappa2.sqrt(),
        relative_condition_number: dr2,
        overlap_max: cov.overlap_max,
        mu_max: mu_max(model, policy_b, policy_e)?,
        iv2,
    })
}

/// Full report: ranks plus condition numbers.
pub fn condition_report(
    model: &TabularPomdp,
    policy_b: &TabularPolicy,
    policy_e: &TabularPolicy,
    config: WindowConfig,
) -> Result<ConditionReport> {
    let pm = probability_matrices(model, policy_b, config)?;
    Ok(ConditionReport {
        ranks: rank_conditions(&pm),
        numbers: condition_numbers(model, policy_b, policy_e, config, None)?,
    })
}

/// A future-dependent value function as values over one-hot `F̄` indices.
pub type FbarValues = Vec<f64>;

/// Minimum-norm `b` with `Pr(F̄ | S̄_b)' b = V^{pi^e}` on `S̄_b`.
pub fn true_bv(model: &TabularPomdp, policy_e: &TabularPolicy, pm: &ProbabilityMatrices) -> Result<FbarValues> {
    if policy_e.memory != pm.config.m {
        return Err(Error::config("evaluation policy memory differs from the window config"));
    }
    let v = policy_value_vector(model, policy_e)?;
    let vb = DVector::from_iterator(pm.support.len(), pm.support.iter().map(|&i| v[i]));
    Ok((pinv(&pm.f_given_s.transpose()) * vb).iter().copied().collect())
}

/// `E[(E[mu (R + gamma q(F̄')) - q(F̄) | H])^2]` under a population measure
/// with exact conditionals on the history window.
pub fn bellman_residual_population<Q>(
    pop: &PopulationSample,
    q: Q,
    policy_e: &TabularPolicy,
    policy_b: &TabularPolicy,
    gamma: f64,
) -> Result<f64>
where
    Q: Fn(&Window, &Future) -> f64,
{
    let ab = policy_b.alphabet();
    let n_h = ab.window_count(pop.config.m_h)?;
    let mut num = vec![0.0; n_h];
    let mut den = vec![0.0; n_h];
    for (t, &w) in pop.tuples.iter().zip(&pop.weights) {
        let mu = importance_ratio(policy_e, policy_b, &t.z, &t.o, &t.a)?;
        let rho = mu * (t.r + gamma * q(&t.z_next, &t.f_next)) - q(&t.z, &t.f);
        let hi = ab.window_index(&t.h);
        num[hi] += w * rho;
        den[hi] += w;
    }
    Ok(num.iter().zip(&den).filter(|(_, &d)| d > 0.0).map(|(n, d)| n * n / d).sum())
}

/// `E[phi_H rho]' M3^+ E[phi_H rho]`: the Bellman residual projected on the
/// span of `phi_H` by ridgeless regression.
pub fn bellman_residual<O, A, Q, FH, PE, PB>(
    view: &SampleView<'_, O, A>,
    q: Q,
    phi_h: &FH,
    policy_e: &PE,
    policy_b: &PB,
    gamma: f64,
) -> Result<f64>
where
    A: Debug,
    Q: Fn(&Window<O, A>, &Future<O, A>) -> f64,
    FH: HistoryFeatures<O, A> + ?Sized,
    PE: ActingPolicy<O, A>,
    PB: ActingPolicy<O, A>,
{
    let d = phi_h.dim();
    let mut b = DVector::zeros(d);
    let mut m3 = DMatrix::zeros(d, d);
    for (i, t) in view.tuples.iter().enumerate() {
        let w = view.weight(i);
        let mu = importance_ratio(policy_e, policy_b, &t.z, &t.o, &t.a)?;
        let rho = mu * (t.r + gamma * q(&t.z_next, &t.f_next)) - q(&t.z, &t.f);
        let x = phi_h.eval(&t.h, &t.o);
        for &(j, v) in &x {
            b[j] += w * v * rho;
            for &(k, u) in &x {
                m3[(j, k)] += w * v * u;
            }
        }
    }
    Ok(b.dot(&(pinv(&m3) * &b)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{OneHotFbar, OneHotHistory};
    use crate::model::oracle::exact_policy_value;
    use crate::model::random::{random_policy, random_pomdp};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64, n_s: usize, n_o: usize) -> (TabularPomdp, TabularPolicy, TabularPolicy) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_pomdp(n_s, n_o, 2, 0.9, &mut rng);
        let pb = random_policy(0, n_o, 2, 0.5, &mut rng).unwrap();
        let pe = random_policy(0, n_o, 2, 0.2, &mut rng).unwrap();
        (m, pb, pe)
    }

    #[test]
    fn matrices_factorize_and_normalize() {
        let (m, pb, _) = model(3, 3, 3);
        let cfg = WindowConfig::new(0, 2, 2).unwrap();
        let pm = probability_matrices(&m, &pb, cfg).unwrap();
        assert_abs_diff_eq!(pm.f_h.sum(), 1.0, epsilon = 1e-12);
        for j in 0..pm.f_given_s.ncols() {
            assert_abs_diff_eq!(pm.f_given_s.column(j).sum(), 1.0, epsilon = 1e-12);
        }
        let prod = &pm.f_given_s * &pm.s_h;
        assert!((prod - &pm.f_h).amax() <= 1e-12);
        let r = rank_conditions(&pm);
        assert!(r.iff_holds);
        assert!(r.observability && r.invertibility);
    }

    #[test]
    fn too_few_futures_fail_observability() {
        let (m, pb, _) = model(4, 3, 2);
        let cfg = WindowConfig::new(0, 1, 1).unwrap();
        let r = rank_conditions(&probability_matrices(&m, &pb, cfg).unwrap());
        assert!(!r.observability);
        assert!(r.iff_holds);
    }

    #[test]
    fn same_policy_has_unit_overlap() {
        let (mut m, pb, _) = model(5, 3, 3);
        // Start from the stationary law so that d_{pi^b} = P_{pi^b}.
        m.initial_state_dist = crate::model::oracle::memory_stationary_distribution(&m, &pb).unwrap().state_marginal();
        let cfg = WindowConfig::new(0, 2, 2).unwrap();
        let c = condition_numbers(&m, &pb, &pb, cfg, None).unwrap();
        assert_abs_diff_eq!(c.dr, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(c.relative_condition_number, 1.0, epsilon = 1e-8);
        assert!(c.kappa <= c.dr * c.iv1 + 1e-8);
    }

    #[test]
    fn kappa_bounded_by_product() {
        for seed in 0..10 {
            let (m, pb, pe) = model(100 + seed, 3, 3);
            let cfg = WindowConfig::new(0, 2, 2).unwrap();
            let c = condition_numbers(&m, &pb, &pe, cfg, Some(&OneHotHistory::new(m.alphabet(), 2).unwrap())).unwrap();
            assert!(c.kappa <= c.dr * c.iv1 + 1e-8, "{c:?}");
            // One-hot critics give the exact conditional expectation.
            assert_abs_diff_eq!(c.iv2.unwrap(), c.iv1, epsilon = 1e-6 * c.iv1.max(1.0));
        }
    }

    #[test]
    fn kappa_shrinks_with_longer_history() {
        let (m, pb, pe) = model(8, 3, 2);
        let mut prev = f64::INFINITY;
        for m_h in 1..=3 {
            let c = condition_numbers(&m, &pb, &pe, WindowConfig::new(0, m_h, 2).unwrap(), None).unwrap();
            assert!(c.kappa <= prev * (1.0 + 1e-8), "m_h={m_h}: {} > {prev}", c.kappa);
            prev = c.kappa;
        }
    }

    #[test]
    fn true_bv_has_zero_residual_and_recovers_value() {
        let (m, pb, pe) = model(9, 3, 3);
        let cfg = WindowConfig::new(0, 2, 2).unwrap();
        let pop = population_sample(&m, &pb, cfg).unwrap();
        let pm = probability_matrices_from(&m, &pb, &pop).unwrap();
        let b = true_bv(&m, &pe, &pm).unwrap();
        let ff = OneHotFbar::new(m.alphabet(), 0, 2).unwrap();
        let q = |z: &Window, f: &Future| b[ff.index(z, f)];
        let res = bellman_residual_population(&pop, q, &pe, &pb, m.gamma).unwrap();
        assert!(res.abs() <= 1e-10, "{res}");
        let fh = OneHotHistory::new(m.alphabet(), 2).unwrap();
        let proj = bellman_residual(&pop.view(), q, &fh, &pe, &pb, m.gamma).unwrap();
        assert!(proj <= 1e-10);
        let j: f64 = pop.initial.iter().zip(&pop.initial_weights).map(|(s, w)| w * q(&s.z, &s.f)).sum();
        let truth = exact_policy_value(&m, &pe, &pop.nu_sbar).unwrap();
        assert_abs_diff_eq!(j, truth, epsilon = 1e-8);
    }

    #[test]
    fn zero_reward_zero_function_has_zero_residual() {
        let (m, pb, pe) = model(10, 2, 2);
        let m = m.scaled_rewards(0.0);
        let pop = population_sample(&m, &pb, WindowConfig::new(0, 1, 1).unwrap()).unwrap();
        let r = bellman_residual_population(&pop, |_: &Window, _: &Future| 0.0, &pe, &pb, 0.9).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn revealing_history_gives_unit_iv1() {
        // Deterministic 3-cycle with identity emission: H pins down S.
        let m = TabularPomdp {
            n_states: 3,
            n_obs: 3,
            n_actions: 1,
            transition: (0..3).map(|s| vec![(0..3).map(|t| if t == (s + 1) % 3 { 1.0 } else { 0.0 }).collect()]).collect(),
            emission: (0..3).map(|s| (0..3).map(|o| if o == s { 1.0 } else { 0.0 }).collect()).collect(),
            reward: vec![vec![1.0], vec![0.0], vec![0.5]],
            gamma: 0.8,
            initial_state_dist: vec![1.0 / 3.0; 3],
        };
        let p = TabularPolicy::uniform(0, 3, 1).unwrap();
        let c = condition_numbers(&m, &p, &p, WindowConfig::new(0, 1, 1).unwrap(), None).unwrap();
        assert_abs_diff_eq!(c.iv1, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(c.dr, 1.0, epsilon = 1e-8);
        assert_eq!(c.mu_max, 1.0);
    }

    #[test]
    fn report_round_trips_through_json_with_infinities() {
        let c = ConditionNumbers {
            iv1: f64::INFINITY,
            dr: 1.0,
            kappa: f64::INFINITY,
            relative_condition_number: 1.0,
            overlap_max: 1.0,
            mu_max: 2.0,
            iv2: None,
        };
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"inf\""));
        let back: ConditionNumbers = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
