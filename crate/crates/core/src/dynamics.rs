//! Learning observation-sequence probabilities of memory-less evaluation
//! policies from offline data: spectral closed forms, the backward minimax
//! recursion, and the action-free (HMM) special case.
//!
//! Shapes: `B = E[phi_F(F) phi_H(H)']` is `d_F x d_H`,
//! `D_(o,a) = E[1(O=o, A=a) mu phi_F(F') phi_H(H)']` is `d_F x d_H`,
//! `C = E_{nu_F}[phi_F]`, and the joint probability of
//! `(o_0, a_0, ..., o_{T-1}, a_{T-1})` is
//! `E[phi_H]' B^+ D_{T-1} B^+ ... D_0 B^+ C`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{importance_ratio, population_sample, SampleView, WindowConfig};
use crate::error::{Error, Result};
use crate::estimators::enumerate::{CriticFn, FunctionClass, ValueFn};
use crate::estimators::EstimatorConfig;
use crate::features::{FbarFeatures, HistoryFeatures};
use crate::linalg::{numerical_rank, pinv, RankInfo, RANK_RTOL};
use crate::model::{TabularPolicy, TabularPomdp};

/// Whether `D_(o,a)` is the joint moment or is conditioned on
/// `(O, A) = (o, a)`; the latter avoids estimating `Pr(O=o, A=a)` and is
/// only identified up to scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsScale {
    #[default]
    Joint,
    Conditional,
}

#[derive(Debug, Clone)]
pub struct DynamicsMoments {
    pub n_obs: usize,
    pub n_actions: usize,
    pub b_mat: DMatrix<f64>,
    /// `D_(o,a)` indexed by `o * n_actions + a`.
    pub d_mats: Vec<DMatrix<f64>>,
    /// Data mass of each `(o, a)`.
    pub pair_mass: Vec<f64>,
    pub c_vec: DVector<f64>,
    pub h_mean: DVector<f64>,
    /// `E[phi_O(O) phi_H(H)']`, `|O| x d_H`.
    pub o_h_mat: DMatrix<f64>,
    /// `E[phi_H phi_H']`.
    pub h_cov: DMatrix<f64>,
    pub scale: DynamicsScale,
    pub b_rank: RankInfo,
    b_pinv: DMatrix<f64>,
}

/// Moments from a weighted sample of tuples with `M = 0`.
pub fn estimate_dynamics_moments<FF, FH>(
    view: &SampleView<'_>,
    phi_f: &FF,
    phi_h: &FH,
    policy_e: &TabularPolicy,
    policy_b: &TabularPolicy,
    scale: DynamicsScale,
) -> Result<DynamicsMoments>
where
    FF: FbarFeatures<usize, usize> + ?Sized,
    FH: HistoryFeatures<usize, usize> + ?Sized,
{
    if view.config.m != 0 || policy_e.memory != 0 || policy_b.memory != 0 {
        return Err(Error::config("dynamics learning requires memory-less policies (M = 0)"));
    }
    if view.tuples.is_empty() || view.initial.is_empty() {
        return Err(Error::argument("dynamics moments need tuples and initial samples"));
    }
    let (n_obs, n_actions) = (policy_b.n_obs, policy_b.n_actions);
    let (d_f, d_h) = (phi_f.dim(), phi_h.dim());
    let mut b = DMatrix::zeros(d_f, d_h);
    let mut d = vec![DMatrix::zeros(d_f, d_h); n_obs * n_actions];
    let mut mass = vec![0.0; n_obs * n_actions];
    let mut h_mean = DVector::zeros(d_h);
    let mut o_h = DMatrix::zeros(n_obs, d_h);
    let mut h_cov = DMatrix::zeros(d_h, d_h);
    for (i, t) in view.tuples.iter().enumerate() {
        let w = view.weight(i);
        let mu = importance_ratio(policy_e, policy_b, &t.z, &t.o, &t.a)?;
        let xh = phi_h.eval(&t.h, &t.o);
        let xf = phi_f.eval(&t.z, &t.f);
        let xf2 = phi_f.eval(&t.z_next, &t.f_next);
        let k = t.o * n_actions + t.a;
        mass[k] += w;
        for &(j, hv) in &xh {
            let wh = w * hv;
            h_mean[j] += wh;
            o_h[(t.o, j)] += wh;
            for &(i2, fv) in &xf {
                b[(i2, j)] += wh * fv;
            }
            for &(i2, fv) in &xf2 {
                d[k][(i2, j)] += wh * mu * fv;
            }
            for &(j2, hv2) in &xh {
                h_cov[(j, j2)] += wh * hv2;
            }
        }
    }
    if scale == DynamicsScale::Conditional {
        for (dk, &m) in d.iter_mut().zip(&mass) {
            if m > 0.0 {
                *dk /= m;
            }
        }
    }
    let mut c = DVector::zeros(d_f);
    for (j, s) in view.initial.iter().enumerate() {
        let w = view.initial_weight(j);
        for (i, v) in phi_f.eval(&s.z, &s.f) {
            c[i] += w * v;
        }
    }
    let b_rank = numerical_rank(&b, RANK_RTOL);
    Ok(DynamicsMoments {
        n_obs,
        n_actions,
        b_pinv: pinv(&b),
        b_mat: b,
        d_mats: d,
        pair_mass: mass,
        c_vec: c,
        h_mean,
        o_h_mat: o_h,
        h_cov,
        scale,
        b_rank,
    })
}

/// Exact moments under the stationary behavior law of a tabular model,
/// with `nu_F` induced by `initial_state_dist`.
pub fn population_dynamics_moments<FF, FH>(
    model: &TabularPomdp,
    policy_b: &TabularPolicy,
    policy_e: &TabularPolicy,
    config: WindowConfig,
    phi_f: &FF,
    phi_h: &FH,
    scale: DynamicsScale,
) -> Result<DynamicsMoments>
where
    FF: FbarFeatures<usize, usize> + ?Sized,
    FH: HistoryFeatures<usize, usize> + ?Sized,
{
    let pop = population_sample(model, policy_b, config)?;
    estimate_dynamics_moments(&pop.view(), phi_f, phi_h, policy_e, policy_b, scale)
}

impl DynamicsMoments {
    pub fn d_f(&self) -> usize {
        self.b_mat.nrows()
    }

    pub fn d_h(&self) -> usize {
        self.b_mat.ncols()
    }

    pub fn rank_deficient(&self, expected: usize) -> bool {
        self.b_rank.rank < expected
    }

    fn d_mat(&self, o: usize, a: usize) -> Result<&DMatrix<f64>> {
        if o >= self.n_obs || a >= self.n_actions {
            return Err(Error::argument(format!("symbol (o={o}, a={a}) out of range")));
        }
        let k = o * self.n_actions + a;
        if self.pair_mass[k] <= 0.0 {
            return Err(Error::InsufficientSupport { obs: o, action: a });
        }
        Ok(&self.d_mats[k])
    }

    /// `B^+ D_{T-1} B^+ ... D_0 B^+ C`.
    fn chain(&self, seq: &[(usize, usize)]) -> Result<DVector<f64>> {
        let mut v = &self.b_pinv * &self.c_vec;
        for &(o, a) in seq {
            v = &self.b_pinv * (self.d_mat(o, a)? * v);
        }
        Ok(v)
    }
}

/// Spectral estimate of `Pr_{pi^e}(o_0, a_0, ..., o_{T-1}, a_{T-1})`.
pub fn spectral_joint_probability(m: &DynamicsMoments, seq: &[(usize, usize)]) -> Result<f64> {
    if m.scale != DynamicsScale::Joint {
        return Err(Error::argument("joint probabilities need joint-scale moments"));
    }
    Ok(m.h_mean.dot(&m.chain(seq)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEstimate {
    /// Clipped at zero and normalized.
    pub probs: Vec<f64>,
    /// Before clipping and normalization.
    pub unclipped: Vec<f64>,
}

/// Spectral estimate of `Pr_{pi^e}(O_T | o_0, a_0, ..., a_{T-1})`.
pub fn spectral_conditional_distribution(m: &DynamicsMoments, seq: &[(usize, usize)]) -> Result<ConditionalEstimate> {
    let raw = &m.o_h_mat * m.chain(seq)?;
    let clipped: Vec<f64> = raw.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Degenerate("predictive vector is zero after clipping".into()));
    }
    Ok(ConditionalEstimate {
        probs: clipped.iter().map(|x| x / total).collect(),
        unclipped: raw.iter().copied().collect(),
    })
}

/// Backward minimax recursion with linear classes over `phi_F` and `phi_H`:
/// each step solves `min_theta max_eta E[(y - theta' phi_F(F)) eta' phi_H(H)]
/// - lambda E[(eta' phi_H)^2] / 2` in closed form.
pub fn minimax_dynamics(m: &DynamicsMoments, cfg: &EstimatorConfig, seq: &[(usize, usize)]) -> Result<f64> {
    cfg.validate()?;
    if m.scale != DynamicsScale::Joint {
        return Err(Error::argument("minimax dynamics needs joint-scale moments"));
    }
    let bt = m.b_mat.transpose();
    // theta = S r-target, where the moment residual is target - B' theta.
    let solver = if cfg.lambda == 0.0 && cfg.alpha == 0.0 {
        pinv(&bt)
    } else {
        let d_h = m.d_h();
        let w = pinv(&(DMatrix::identity(d_h, d_h) * cfg.alpha + &m.h_cov * cfg.lambda));
        let bw = &m.b_mat * w;
        let d_f = m.d_f();
        pinv(&(&bw * &bt + DMatrix::identity(d_f, d_f) * cfg.alpha_prime)) * bw
    };
    let mut theta = &solver * &m.h_mean;
    for &(o, a) in seq.iter().rev() {
        theta = &solver * (m.d_mat(o, a)?.transpose() * theta);
    }
    let j = m.c_vec.dot(&theta);
    if !j.is_finite() {
        return Err(Error::numerical("minimax dynamics estimate is not finite"));
    }
    Ok(j)
}

/// Backward recursion over finite classes, ties broken by lowest index.
/// Returns the estimate and the selected member index per step
/// (`0..T`, then the terminal step).
pub fn minimax_dynamics_enumerate(
    view: &SampleView<'_>,
    q_class: &FunctionClass<ValueFn<'_, usize, usize>>,
    xi_class: &FunctionClass<CriticFn<'_, usize, usize>>,
    policy_e: &TabularPolicy,
    policy_b: &TabularPolicy,
    lambda: f64,
    seq: &[(usize, usize)],
) -> Result<(f64, Vec<usize>)> {
    if q_class.members.is_empty() || xi_class.members.is_empty() {
        return Err(Error::argument("enumerated classes must be nonempty"));
    }
    if view.tuples.is_empty() || view.initial.is_empty() {
        return Err(Error::argument("dynamics recursion needs tuples and initial samples"));
    }
    let n = view.tuples.len();
    let w: Vec<f64> = (0..n).map(|i| view.weight(i)).collect();
    let mu: Vec<f64> = view
        .tuples
        .iter()
        .map(|t| importance_ratio(policy_e, policy_b, &t.z, &t.o, &t.a))
        .collect::<Result<_>>()?;
    let q_cur: Vec<Vec<f64>> = q_class.members.iter().map(|q| view.tuples.iter().map(|t| q(&t.z, &t.f)).collect()).collect();
    let q_next: Vec<Vec<f64>> = q_class
        .members
        .iter()
        .map(|q| view.tuples.iter().map(|t| q(&t.z_next, &t.f_next)).collect())
        .collect();
    let xi: Vec<Vec<f64>> = xi_class.members.iter().map(|x| view.tuples.iter().map(|t| x(&t.h, &t.o)).collect()).collect();
    let pen: Vec<f64> = xi.iter().map(|v| 0.5 * lambda * (0..n).map(|i| w[i] * v[i] * v[i]).sum::<f64>()).collect();

    let select = |target: &[f64]| -> usize {
        let mut best: Option<(f64, usize)> = None;
        for (k, qc) in q_cur.iter().enumerate() {
            let rho: Vec<f64> = (0..n).map(|i| w[i] * (target[i] - qc[i])).collect();
            let inner = xi
                .iter()
                .zip(&pen)
                .map(|(x, p)| rho.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - p)
                .fold(f64::NEG_INFINITY, f64::max);
            if best.map_or(true, |(b, _)| inner < b) {
                best = Some((inner, k));
            }
        }
        best.expect("nonempty class").1
    };

    let mut chosen = vec![select(&vec![1.0; n])];
    for &(o, a) in seq.iter().rev() {
        let prev = *chosen.last().expect("terminal step selected");
        let target: Vec<f64> = (0..n)
            .map(|i| {
                let t = &view.tuples[i];
                if t.o == o && t.a == a {
                    mu[i] * q_next[prev][i]
                } else {
                    0.0
                }
            })
            .collect();
        chosen.push(select(&target));
    }
    chosen.reverse();
    let k0 = chosen[0];
    let j = view
        .initial
        .iter()
        .enumerate()
        .map(|(j, s)| view.initial_weight(j) * (q_class.members[k0])(&s.z, &s.f))
        .sum();
    Ok((j, chosen))
}

/// Action-free moments: `P1 = Pr(O)`, `P21[i][j] = Pr(O_0 = i, O_-1 = j)`,
/// `P3x1[o][i][j] = Pr(O_0 = o, O_1 = i, O_-1 = j)`.
#[derive(Debug, Clone)]
pub struct HmmMoments {
    pub p1: DVector<f64>,
    pub p21: DMatrix<f64>,
    pub p3x1: Vec<DMatrix<f64>>,
}

/// Exact stationary moments of a single-action model.
pub fn hmm_population_moments(model: &TabularPomdp) -> Result<HmmMoments> {
    if model.n_actions != 1 {
        return Err(Error::argument("HMM moments need a single-action model"));
    }
    let policy = TabularPolicy::uniform(0, model.n_obs, 1)?;
    let pi = crate::model::oracle::memory_stationary_distribution(model, &policy)?.state_marginal();
    let (ns, no) = (model.n_states, model.n_obs);
    let t = DMatrix::from_fn(ns, ns, |s, s2| model.transition[s][0][s2]);
    let e = DMatrix::from_fn(ns, no, |s, o| model.emission[s][o]);
    let pi = DVector::from_vec(pi);
    let p1 = e.transpose() * &pi;
    // Pr(O_-1 = j, S_0 = s') = sum_s pi(s) E[s][j] T[s][s'].
    let joint_prev = (DMatrix::from_diagonal(&pi) * &e).transpose() * &t;
    let p21 = e.transpose() * joint_prev.transpose();
    let p3x1 = (0..no)
        .map(|o| {
            // Pr(O_1 = i, O_-1 = j, O_0 = o) = sum_{s'} E[s'][o] Pr(O_-1=j, S_0=s') (T E)[s'][i].
            let scaled = DMatrix::from_fn(ns, no, |s2, j| joint_prev[(j, s2)] * e[(s2, o)]);
            (&t * &e).transpose() * scaled
        })
        .collect();
    Ok(HmmMoments { p1, p21, p3x1 })
}

/// Empirical moments from observation sequences (each of length >= 3).
pub fn hmm_moments_from_sequences(seqs: &[Vec<usize>], n_obs: usize) -> Result<HmmMoments> {
    let mut p1 = DVector::zeros(n_obs);
    let mut p21 = DMatrix::zeros(n_obs, n_obs);
    let mut p3 = vec![DMatrix::zeros(n_obs, n_obs); n_obs];
    let mut count = 0usize;
    for s in seqs {
        if s.iter().any(|&o| o >= n_obs) {
            return Err(Error::argument("observation out of range"));
        }
        for k in 1..s.len().saturating_sub(1) {
            let (prev, cur, next) = (s[k - 1], s[k], s[k + 1]);
            p1[prev] += 1.0;
            p21[(cur, prev)] += 1.0;
            p3[cur][(next, prev)] += 1.0;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::argument("no observation triples"));
    }
    let c = count as f64;
    Ok(HmmMoments {
        p1: p1 / c,
        p21: p21 / c,
        p3x1: p3.into_iter().map(|m| m / c).collect(),
    })
}

/// `P1' P21^+ P3x1[o_{T-1}] P21^+ ... P3x1[o_0] P21^+ P1`.
pub fn hmm_spectral(m: &HmmMoments, obs: &[usize]) -> Result<f64> {
    let p = pinv(&m.p21);
    let mut v = &p * &m.p1;
    for &o in obs {
        let d = m.p3x1.get(o).ok_or_else(|| Error::argument(format!("observation {o} out of range")))?;
        v = &p * (d * v);
    }
    Ok(m.p1.dot(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_tabular_dataset, GenerationMode};
    use crate::features::{OneHotFbar, OneHotHistory};
    use crate::model::oracle::{joint_sequence_probability, memory_stationary_distribution, predictive_distribution};
    use crate::model::random::{random_policy, random_pomdp};
    use crate::model::{Future, MemoryPolicy, Window};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Setup {
        m: TabularPomdp,
        pb: TabularPolicy,
        pe: TabularPolicy,
        cfg: WindowConfig,
        ff: OneHotFbar,
        fh: OneHotHistory,
    }

    fn setup(seed: u64) -> Setup {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_pomdp(2, 3, 2, 0.9, &mut rng);
        let pb = random_policy(0, 3, 2, 0.5, &mut rng).unwrap();
        let pe = random_policy(0, 3, 2, 0.1, &mut rng).unwrap();
        let cfg = WindowConfig::new(0, 1, 1).unwrap();
        let ab = m.alphabet();
        Setup {
            ff: OneHotFbar::new(ab, 0, 1).unwrap(),
            fh: OneHotHistory::new(ab, 1).unwrap(),
            m,
            pb,
            pe,
            cfg,
        }
    }

    fn all_sequences(n_o: usize, n_a: usize, len: usize) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![vec![]];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|s| {
                    (0..n_o).flat_map(move |o| {
                        let s = s.clone();
                        (0..n_a).map(move |a| {
                            let mut t = s.clone();
                            t.push((o, a));
                            t
                        })
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn population_spectral_matches_forward_algorithm() {
        let s = setup(1);
        let mo = population_dynamics_moments(&s.m, &s.pb, &s.pe, s.cfg, &s.ff, &s.fh, DynamicsScale::Joint).unwrap();
        assert!(!mo.rank_deficient(2));
        let mut total = 0.0;
        for seq in all_sequences(3, 2, 2) {
            let est = spectral_joint_probability(&mo, &seq).unwrap();
            let truth = joint_sequence_probability(&s.m, &s.pe, &seq).unwrap();
            assert_abs_diff_eq!(est, truth, epsilon = 1e-8);
            let mm = minimax_dynamics(&mo, &EstimatorConfig::exact(), &seq).unwrap();
            assert_abs_diff_eq!(mm, truth, epsilon = 1e-8);
            let stab = minimax_dynamics(&mo, &EstimatorConfig::default(), &seq).unwrap();
            assert_abs_diff_eq!(stab, truth, epsilon = 1e-8);
            total += est;
            let c = spectral_conditional_distribution(&mo, &seq).unwrap();
            let p = predictive_distribution(&s.m, &s.pe, &seq).unwrap();
            for o in 0..3 {
                assert_abs_diff_eq!(c.probs[o], p[o], epsilon = 1e-8);
            }
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(spectral_joint_probability(&mo, &[]).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(minimax_dynamics(&mo, &EstimatorConfig::exact(), &[]).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn conditional_scale_gives_same_predictive() {
        let s = setup(2);
        let joint = population_dynamics_moments(&s.m, &s.pb, &s.pe, s.cfg, &s.ff, &s.fh, DynamicsScale::Joint).unwrap();
        let cond = population_dynamics_moments(&s.m, &s.pb, &s.pe, s.cfg, &s.ff, &s.fh, DynamicsScale::Conditional).unwrap();
        let seq = [(1, 0), (2, 1)];
        let a = spectral_conditional_distribution(&joint, &seq).unwrap();
        let b = spectral_conditional_distribution(&cond, &seq).unwrap();
        for o in 0..3 {
            assert_abs_diff_eq!(a.probs[o], b.probs[o], epsilon = 1e-10);
        }
        assert!(spectral_joint_probability(&cond, &seq).is_err());
    }

    #[test]
    fn pair_moments_partition_the_total() {
        let s = setup(3);
        let mo = population_dynamics_moments(&s.m, &s.pb, &s.pe, s.cfg, &s.ff, &s.fh, DynamicsScale::Joint).unwrap();
        let sum = mo.d_mats.iter().fold(DMatrix::zeros(mo.d_f(), mo.d_h()), |acc, d| acc + d);
        // sum_(o,a) D_(o,a) = E[mu phi_F(F') phi_H'], whose total mass is E[mu] = 1.
        assert_abs_diff_eq!(sum.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_state_gives_product_formula() {
        let m = TabularPomdp {
            n_states: 1,
            n_obs: 2,
            n_actions: 2,
            transition: vec![vec![vec![1.0], vec![1.0]]],
            emission: vec![vec![0.3, 0.7]],
            reward: vec![vec![0.0, 1.0]],
            gamma: 0.5,
            initial_state_dist: vec![1.0],
        };
        let pb = TabularPolicy::uniform(0, 2, 2).unwrap();
        let pe = TabularPolicy::memoryless(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let cfg = WindowConfig::new(0, 1, 1).unwrap();
        let ab = m.alphabet();
        let ff = OneHotFbar::new(ab, 0, 1).unwrap();
        let fh = OneHotHistory::new(ab, 1).unwrap();
        let mo = population_dynamics_moments(&m, &pb, &pe, cfg, &ff, &fh, DynamicsScale::Joint).unwrap();
        let seq = [(0, 0), (1, 1), (1, 0)];
        let expect = 0.3 * 0.9 * 0.7 * 0.8 * 0.7 * 0.2;
        assert_abs_diff_eq!(spectral_joint_probability(&mo, &seq).unwrap(), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(minimax_dynamics(&mo, &EstimatorConfig::exact(), &seq).unwrap(), expect, epsilon = 1e-12);
        let c = spectral_conditional_distribution(&mo, &seq).unwrap();
        assert_abs_diff_eq!(c.probs[0], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn enumerated_recursion_matches_closed_form_with_exact_candidates() {
        let s = setup(4);
        let pop = population_sample(&s.m, &s.pb, s.cfg).unwrap();
        let mo = estimate_dynamics_moments(&pop.view(), &s.ff, &s.fh, &s.pe, &s.pb, DynamicsScale::Joint).unwrap();
        let seq = [(0, 1), (2, 0)];
        // Candidates: the exact per-step solutions plus distractors.
        let solver = pinv(&mo.b_mat.transpose());
        let mut thetas = vec![&solver * &mo.h_mean];
        for &(o, a) in seq.iter().rev() {
            let next = &solver * (mo.d_mats[o * 2 + a].transpose() * thetas.last().unwrap());
            thetas.push(next);
        }
        thetas.push(DVector::from_element(3, 0.5));
        thetas.push(DVector::zeros(3));
        let ff = s.ff;
        let q: Vec<ValueFn<'_, usize, usize>> = thetas
            .iter()
            .map(|t| {
                let t = t.clone();
                Box::new(move |z: &Window, f: &Future| t[ff.index(z, f)]) as ValueFn<'_, usize, usize>
            })
            .collect();
        let grid: Vec<CriticFn<'_, usize, usize>> = (0..6)
            .flat_map(|h| {
                [-1.0, 1.0].into_iter().map(move |sgn| {
                    Box::new(move |w: &Window, _: &usize| if w.obs[0] * 2 + w.actions[0] == h { sgn } else { 0.0 })
                        as CriticFn<'_, usize, usize>
                })
            })
            .collect();
        let (j, chosen) = minimax_dynamics_enumerate(
            &pop.view(),
            &FunctionClass::new(q),
            &FunctionClass::new(grid),
            &s.pe,
            &s.pb,
            1.0,
            &seq,
        )
        .unwrap();
        assert_eq!(chosen, vec![2, 1, 0]);
        assert_abs_diff_eq!(j, spectral_joint_probability(&mo, &seq).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn empirical_moments_approach_population_and_report_missing_pairs() {
        let s = setup(5);
        let pbm: MemoryPolicy = s.pb.clone().into();
        let ds = generate_tabular_dataset(&s.m, &pbm, 100_000, 20_000, s.cfg, GenerationMode::IidPerTuple, 3).unwrap();
        let emp = estimate_dynamics_moments(&ds.view(), &s.ff, &s.fh, &s.pe, &s.pb, DynamicsScale::Joint).unwrap();
        let pop = population_dynamics_moments(&s.m, &s.pb, &s.pe, s.cfg, &s.ff, &s.fh, DynamicsScale::Joint).unwrap();
        for i in 0..emp.b_mat.len() {
            let p = pop.b_mat[i];
            let se = (p * (1.0 - p) / 1e5).sqrt();
            assert!((emp.b_mat[i] - p).abs() <= 5.0 * se + 1e-12);
        }
        let mut few = ds.clone();
        few.tuples.retain(|t| !(t.o == 0 && t.a == 1));
        let m2 = estimate_dynamics_moments(&few.view(), &s.ff, &s.fh, &s.pe, &s.pb, DynamicsScale::Joint).unwrap();
        assert!(matches!(
            spectral_joint_probability(&m2, &[(0, 1)]),
            Err(Error::InsufficientSupport { obs: 0, action: 1 })
        ));
    }

    #[test]
    fn hmm_reduction_matches_forward_and_general_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = random_pomdp(2, 3, 1, 0.9, &mut rng);
        let p = TabularPolicy::uniform(0, 3, 1).unwrap();
        m.initial_state_dist = memory_stationary_distribution(&m, &p).unwrap().state_marginal();
        let hm = hmm_population_moments(&m).unwrap();
        let ab = m.alphabet();
        let general = population_dynamics_moments(
            &m,
            &p,
            &p,
            WindowConfig::new(0, 1, 1).unwrap(),
            &OneHotFbar::new(ab, 0, 1).unwrap(),
            &OneHotHistory::new(ab, 1).unwrap(),
            DynamicsScale::Joint,
        )
        .unwrap();
        for seq in all_sequences(3, 1, 3) {
            let obs: Vec<usize> = seq.iter().map(|p| p.0).collect();
            let h = hmm_spectral(&hm, &obs).unwrap();
            assert_abs_diff_eq!(h, joint_sequence_probability(&m, &p, &seq).unwrap(), epsilon = 1e-8);
            assert_abs_diff_eq!(h, spectral_joint_probability(&general, &seq).unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn iid_observations_factorize() {
        let m = TabularPomdp {
            n_states: 1,
            n_obs: 2,
            n_actions: 1,
            transition: vec![vec![vec![1.0]]],
            emission: vec![vec![0.25, 0.75]],
            reward: vec![vec![0.0]],
            gamma: 0.5,
            initial_state_dist: vec![1.0],
        };
        let hm = hmm_population_moments(&m).unwrap();
        assert_abs_diff_eq!(hmm_spectral(&hm, &[0, 1, 1]).unwrap(), 0.25 * 0.75 * 0.75, epsilon = 1e-12);
        let seqs = vec![vec![0, 1, 1, 0, 1], vec![1, 1, 0]];
        let e = hmm_moments_from_sequences(&seqs, 2).unwrap();
        assert_abs_diff_eq!(e.p1.sum(), 1.0, epsilon = 1e-12);
    }
}
