//! Exact oracles on the augmented chain `(z, s)`: policy values,
//! occupancies, stationary laws and forward-algorithm sequence probabilities.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::space::{checked_pow, Alphabet, AugmentedDistribution, AugmentedSpace, Window};
use super::{TabularPolicy, TabularPomdp};
use crate::error::{Error, Result};
use crate::linalg::solve_checked;

/// Largest chain solved with a dense LU; bigger chains iterate.
const DENSE_LIMIT: usize = 1500;
const ITER_CAP: usize = 1_000_000;
const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
/// Probability below which an augmented state counts as unsupported.
pub const SUPPORT_TOL: f64 = 1e-14;

/// Markov chain induced on `(z, s)` by a policy, where `z` holds the last
/// `window` pairs and the policy reads its most recent `memory` of them.
#[derive(Debug, Clone)]
pub struct AugmentedChain {
    pub space: AugmentedSpace,
    /// Sparse rows `(next index, probability)`.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Expected one-step reward from each augmented state.
    pub reward: Vec<f64>,
}

fn check_compat(model: &TabularPomdp, policy: &TabularPolicy) -> Result<()> {
    if policy.n_obs != model.n_obs || policy.n_actions != model.n_actions {
        return Err(Error::config("policy alphabet does not match model"));
    }
    Ok(())
}

impl AugmentedChain {
    pub fn new(model: &TabularPomdp, policy: &TabularPolicy, window: usize) -> Result<Self> {
        check_compat(model, policy)?;
        if window < policy.memory {
            return Err(Error::argument(format!(
                "window {window} shorter than policy memory {}",
                policy.memory
            )));
        }
        let space = model.augmented_space(window)?;
        let ab = space.alphabet;
        let n_s = model.n_states;
        let mut rows = Vec::with_capacity(space.size());
        let mut reward = Vec::with_capacity(space.size());
        for zi in 0..space.n_windows() {
            let z = space.window(zi);
            let pz = policy.z_index(&z);
            let next: Vec<Vec<usize>> = (0..model.n_obs)
                .map(|o| (0..model.n_actions).map(|a| ab.window_index(&z.shift(&o, &a))).collect())
                .collect();
            for s in 0..n_s {
                let mut acc: Vec<(usize, f64)> = Vec::new();
                let mut r = 0.0;
                for o in 0..model.n_obs {
                    let po = model.emission[s][o];
                    if po == 0.0 {
                        continue;
                    }
                    for a in 0..model.n_actions {
                        let w = po * policy.prob(pz, o, a);
                        if w == 0.0 {
                            continue;
                        }
                        r += w * model.reward[s][a];
                        let base = next[o][a] * n_s;
                        for (s2, &t) in model.transition[s][a].iter().enumerate() {
                            if t > 0.0 {
                                acc.push((base + s2, w * t));
                            }
                        }
                    }
                }
                acc.sort_unstable_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(acc.len());
                for (j, p) in acc {
                    match merged.last_mut() {
                        Some(last) if last.0 == j => last.1 += p,
                        _ => merged.push((j, p)),
                    }
                }
                rows.push(merged);
                reward.push(r);
            }
        }
        Ok(AugmentedChain { space, rows, reward })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    /// `out = P v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            out[i] = row.iter().map(|&(j, p)| p * v[j]).sum();
        }
    }

    /// `out = P' d` (distribution push-forward).
    pub fn push_forward(&self, d: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let m = d[i];
            if m == 0.0 {
                continue;
            }
            for &(j, p) in row {
                out[j] += m * p;
            }
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut p = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                p[(i, j)] += v;
            }
        }
        p
    }

    /// Solves `(I - gamma P) v = b`.
    pub fn solve_discounted(&self, gamma: f64, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.size();
        if n <= DENSE_LIMIT {
            let a = DMatrix::identity(n, n) - self.dense() * gamma;
            let x = solve_checked(&a, &DVector::from_column_slice(b))?;
            return Ok(x.iter().copied().collect());
        }
        let mut v = b.to_vec();
        let mut pv = vec![0.0; n];
        for _ in 0..ITER_CAP {
            self.apply(&v, &mut pv);
            let mut diff = 0.0_f64;
            for i in 0..n {
                let nv = b[i] + gamma * pv[i];
                diff = diff.max((nv - v[i]).abs());
                v[i] = nv;
            }
            if diff <= 1e-14 * (1.0 + v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))) {
                return Ok(v);
            }
        }
        Err(Error::numerical("discounted evaluation did not converge"))
    }

    /// Solves `(I - gamma P') d = b`.
    pub fn solve_discounted_transpose(&self, gamma: f64, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.size();
        if n <= DENSE_LIMIT {
            let a = DMatrix::identity(n, n) - self.dense().transpose() * gamma;
            let x = solve_checked(&a, &DVector::from_column_slice(b))?;
            return Ok(x.iter().copied().collect());
        }
        let mut d = b.to_vec();
        let mut pd = vec![0.0; n];
        for _ in 0..ITER_CAP {
            self.push_forward(&d, &mut pd);
            let mut diff = 0.0_f64;
            for i in 0..n {
                let nd = b[i] + gamma * pd[i];
                diff = diff.max((nd - d[i]).abs());
                d[i] = nd;
            }
            if diff <= 1e-15 {
                return Ok(d);
            }
        }
        Err(Error::numerical("occupancy iteration did not converge"))
    }

    /// `|| d P - d ||_1`.
    pub fn stationarity_residual(&self, d: &[f64]) -> f64 {
        let mut next = vec![0.0; self.size()];
        self.push_forward(d, &mut next);
        next.iter().zip(d).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Stationary law reached from `start` (the Cesaro limit, which is the
    /// relevant one for reducible chains). Lazy power iteration first, a
    /// dense solve if that stalls.
    pub fn stationary(&self, start: &[f64]) -> Result<Vec<f64>> {
        let n = self.size();
        let mut d = start.to_vec();
        let mut next = vec![0.0; n];
        for _ in 0..20_000 {
            self.push_forward(&d, &mut next);
            let mut diff = 0.0;
            for i in 0..n {
                let nd = 0.5 * (d[i] + next[i]);
                diff += (nd - d[i]).abs();
                d[i] = nd;
            }
            if diff <= 1e-15 {
                break;
            }
        }
        let residual = self.stationarity_residual(&d);
        if residual <= STATIONARY_RESIDUAL_TOL {
            return Ok(normalize(d));
        }
        if n <= DENSE_LIMIT {
            let mut a = self.dense().transpose() - DMatrix::identity(n, n);
            a.row_mut(n - 1).fill(1.0);
            let mut b = DVector::zeros(n);
            b[n - 1] = 1.0;
            if let Ok(x) = solve_checked(&a, &b) {
                if x.iter().all(|&v| v > -1e-12) {
                    let cand = normalize(x.iter().map(|v| v.max(0.0)).collect());
                    if self.stationarity_residual(&cand) <= STATIONARY_RESIDUAL_TOL {
                        return Ok(cand);
                    }
                }
            }
        }
        Err(Error::Numerical {
            message: "stationary distribution did not converge".into(),
            residual: Some(residual),
        })
    }
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

fn check_init(policy: &TabularPolicy, model: &TabularPomdp, init: &AugmentedDistribution) -> Result<()> {
    if init.space.memory != policy.memory || init.space.n_states != model.n_states {
        return Err(Error::argument("initial distribution does not match policy memory or model"));
    }
    Ok(())
}

/// `V^pi(z, s)` over the policy's own memory space.
pub fn policy_value_vector(model: &TabularPomdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    let chain = AugmentedChain::new(model, policy, policy.memory)?;
    chain.solve_discounted(model.gamma, &chain.reward)
}

/// `J(pi) = E_init[V^pi(z, s)]` from the Bellman linear system.
pub fn exact_policy_value(model: &TabularPomdp, policy: &TabularPolicy, init: &AugmentedDistribution) -> Result<f64> {
    check_init(policy, model, init)?;
    let v = policy_value_vector(model, policy)?;
    Ok(init.probs.iter().zip(&v).map(|(p, v)| p * v).sum())
}

/// `J_T(pi) = E[sum_{k<T} gamma^k R_k]` by backward induction.
pub fn exact_finite_horizon_value(
    model: &TabularPomdp,
    policy: &TabularPolicy,
    init: &AugmentedDistribution,
    horizon: usize,
) -> Result<f64> {
    if horizon < 1 {
        return Err(Error::argument("horizon must be at least 1"));
    }
    check_init(policy, model, init)?;
    let chain = AugmentedChain::new(model, policy, policy.memory)?;
    let n = chain.size();
    let mut v = vec![0.0; n];
    let mut pv = vec![0.0; n];
    for _ in 0..horizon {
        chain.apply(&v, &mut pv);
        for i in 0..n {
            v[i] = chain.reward[i] + model.gamma * pv[i];
        }
    }
    Ok(init.probs.iter().zip(&v).map(|(p, v)| p * v).sum())
}

/// `d = (1 - gamma) sum_t gamma^t d_t` over `(z, s)`.
pub fn discounted_occupancy(
    model: &TabularPomdp,
    policy: &TabularPolicy,
    init: &AugmentedDistribution,
) -> Result<AugmentedDistribution> {
    check_init(policy, model, init)?;
    let chain = AugmentedChain::new(model, policy, policy.memory)?;
    let b: Vec<f64> = init.probs.iter().map(|p| (1.0 - model.gamma) * p).collect();
    let d = chain.solve_discounted_transpose(model.gamma, &b)?;
    let d = normalize(d.into_iter().map(|v| v.max(0.0)).collect());
    AugmentedDistribution::new(chain.space, d)
}

fn pair_index(ab: &Alphabet, o: usize, a: usize) -> usize {
    o * ab.n_actions + a
}

/// Distribution over `(steps-window, s)` after `steps >= M` policy steps
/// from `start`, a distribution over `(M-window, s)`.
pub fn roll_windows(model: &TabularPomdp, policy: &TabularPolicy, start: &[f64], steps: usize) -> Result<AugmentedDistribution> {
    check_compat(model, policy)?;
    let m = policy.memory;
    if steps < m {
        return Err(Error::argument("must roll at least as many steps as the policy memory"));
    }
    let ab = model.alphabet();
    let n_s = model.n_states;
    let n_pairs = ab.n_obs * ab.n_actions;
    let n_zm = ab.window_count(m)?;
    if start.len() != n_zm * n_s {
        return Err(Error::argument("start distribution has the wrong size"));
    }
    let out_space = model.augmented_space(steps)?;
    let work = checked_pow(n_pairs, steps, "window roll")?.saturating_mul(n_zm * n_s);
    if work > super::space::MAX_ENUMERATION {
        return Err(Error::Capacity {
            what: "window roll".into(),
            required: work,
            limit: super::space::MAX_ENUMERATION,
        });
    }

    // Mass indexed by (z_M, prefix, s); prefix digits are pair indices.
    let mut mass = start.to_vec();
    let mut n_prefix = 1usize;
    let mut tmp = vec![0.0; n_s];
    for k in 0..steps {
        let mut next = vec![0.0; n_zm * n_prefix * n_pairs * n_s];
        for zm in 0..n_zm {
            let zw = ab.decode_window(zm, m);
            for pre in 0..n_prefix {
                let base = (zm * n_prefix + pre) * n_s;
                let slice = &mass[base..base + n_s];
                if slice.iter().all(|&x| x == 0.0) {
                    continue;
                }
                // Policy input: z_M shifted by the k prefix pairs.
                let mut z = zw.clone();
                for j in 0..k {
                    let digit = (pre / n_pairs.pow((k - 1 - j) as u32)) % n_pairs;
                    let (o, a) = (digit / ab.n_actions, digit % ab.n_actions);
                    z = z.shift(&o, &a);
                }
                let pz = policy.z_index(&z);
                for o in 0..ab.n_obs {
                    for a in 0..ab.n_actions {
                        let pa = policy.prob(pz, o, a);
                        if pa == 0.0 {
                            continue;
                        }
                        let mut any = false;
                        for s in 0..n_s {
                            tmp[s] = slice[s] * model.emission[s][o] * pa;
                            any |= tmp[s] != 0.0;
                        }
                        if !any {
                            continue;
                        }
                        let npre = pre * n_pairs + pair_index(&ab, o, a);
                        let nbase = (zm * n_prefix * n_pairs + npre) * n_s;
                        for s in 0..n_s {
                            if tmp[s] == 0.0 {
                                continue;
                            }
                            for (s2, &t) in model.transition[s][a].iter().enumerate() {
                                next[nbase + s2] += tmp[s] * t;
                            }
                        }
                    }
                }
            }
        }
        mass = next;
        n_prefix *= n_pairs;
    }
    let mut probs = vec![0.0; out_space.size()];
    for zm in 0..n_zm {
        for pre in 0..n_prefix {
            let base = (zm * n_prefix + pre) * n_s;
            let mut w = Window::empty();
            for j in 0..steps {
                let digit = (pre / n_pairs.pow((steps - 1 - j) as u32)) % n_pairs;
                w.push(digit / ab.n_actions, digit % ab.n_actions);
            }
            let wi = ab.window_index(&w);
            for s in 0..n_s {
                probs[wi * n_s + s] += mass[base + s];
            }
        }
    }
    AugmentedDistribution::new(out_space, normalize(probs))
}

/// `nu_S̄`: `M` policy steps from a padded window and `initial_state_dist`.
pub fn initial_augmented_distribution(model: &TabularPomdp, policy: &TabularPolicy) -> Result<AugmentedDistribution> {
    let n_zm = model.alphabet().window_count(policy.memory)?;
    let mut start = vec![0.0; n_zm * model.n_states];
    start[..model.n_states].copy_from_slice(&model.initial_state_dist);
    roll_windows(model, policy, &start, policy.memory)
}

/// Stationary law over the policy's own `(z, s)` space, as reached from `nu_S̄`.
pub fn memory_stationary_distribution(model: &TabularPomdp, policy: &TabularPolicy) -> Result<AugmentedDistribution> {
    let chain = AugmentedChain::new(model, policy, policy.memory)?;
    let nu = initial_augmented_distribution(model, policy)?;
    let d = chain.stationary(&nu.probs)?;
    AugmentedDistribution::new(chain.space, d)
}

/// Stationary law of `(last W pairs, s)` under the behavior policy.
pub fn behavior_stationary_distribution(
    model: &TabularPomdp,
    policy: &TabularPolicy,
    window: usize,
) -> Result<AugmentedDistribution> {
    if window < policy.memory {
        return Err(Error::argument("window must be at least the policy memory"));
    }
    let base = memory_stationary_distribution(model, policy)?;
    roll_windows(model, policy, &base.probs, window)
}

/// First `k` such that `nu P^k` is within `tol` (total variation) of
/// `target`.
pub fn steps_to_stationarity(
    model: &TabularPomdp,
    policy: &TabularPolicy,
    start: &AugmentedDistribution,
    target: &AugmentedDistribution,
    tol: f64,
    cap: usize,
) -> Result<usize> {
    let chain = AugmentedChain::new(model, policy, policy.memory)?;
    let mut d = start.probs.clone();
    let mut next = vec![0.0; d.len()];
    for k in 0..=cap {
        if target.total_variation(&d) <= tol {
            return Ok(k);
        }
        chain.push_forward(&d, &mut next);
        std::mem::swap(&mut d, &mut next);
    }
    Err(Error::Numerical {
        message: format!("burn-in did not reach total variation {tol} within {cap} steps"),
        residual: Some(target.total_variation(&d)),
    })
}

/// Stationary behavior law, discounted evaluation occupancy and the support
/// `S̄_b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupancyTables {
    pub stationary_pb: AugmentedDistribution,
    pub d_pie: AugmentedDistribution,
    /// Flat `(z, s)` indices with positive behavior mass.
    pub support_sbar: Vec<usize>,
}

pub fn occupancy_tables(
    model: &TabularPomdp,
    policy_b: &TabularPolicy,
    policy_e: &TabularPolicy,
    init: &AugmentedDistribution,
) -> Result<OccupancyTables> {
    if policy_b.memory != policy_e.memory {
        return Err(Error::argument("behavior and evaluation policies must share memory"));
    }
    let stationary_pb = memory_stationary_distribution(model, policy_b)?;
    let d_pie = discounted_occupancy(model, policy_e, init)?;
    let support_sbar = stationary_pb
        .probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > SUPPORT_TOL)
        .map(|(i, _)| i)
        .collect();
    Ok(OccupancyTables {
        stationary_pb,
        d_pie,
        support_sbar,
    })
}

fn check_sequence(model: &TabularPomdp, policy: &TabularPolicy, seq: &[(usize, usize)]) -> Result<()> {
    check_compat(model, policy)?;
    if policy.memory != 0 {
        return Err(Error::argument("sequence probabilities require a memory-less policy"));
    }
    for &(o, a) in seq {
        if o >= model.n_obs || a >= model.n_actions {
            return Err(Error::argument(format!("symbol (o={o}, a={a}) out of range")));
        }
    }
    Ok(())
}

/// Forward message after the sequence: unnormalized law of the next latent state.
fn forward(model: &TabularPomdp, policy: &TabularPolicy, seq: &[(usize, usize)]) -> Vec<f64> {
    let mut alpha = model.initial_state_dist.clone();
    let mut next = vec![0.0; model.n_states];
    for &(o, a) in seq {
        let pa = policy.prob(0, o, a);
        for (s, x) in alpha.iter_mut().enumerate() {
            *x *= model.emission[s][o] * pa;
        }
        model.propagate(&alpha, a, &mut next);
        std::mem::swap(&mut alpha, &mut next);
    }
    alpha
}

/// `Pr_pi(o_0, a_0, ..., o_{T-1}, a_{T-1})` from `initial_state_dist`.
pub fn joint_sequence_probability(model: &TabularPomdp, policy: &TabularPolicy, seq: &[(usize, usize)]) -> Result<f64> {
    check_sequence(model, policy, seq)?;
    Ok(forward(model, policy, seq).iter().sum())
}

/// `Pr_pi(O_T = . | o_0, a_0, ..., a_{T-1})`.
pub fn predictive_distribution(model: &TabularPomdp, policy: &TabularPolicy, seq: &[(usize, usize)]) -> Result<Vec<f64>> {
    check_sequence(model, policy, seq)?;
    let alpha = forward(model, policy, seq);
    let mut p = vec![0.0; model.n_obs];
    for (s, &m) in alpha.iter().enumerate() {
        for (o, x) in p.iter_mut().enumerate() {
            *x += m * model.emission[s][o];
        }
    }
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("conditioning sequence has probability zero".into()));
    }
    Ok(p.into_iter().map(|x| x / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random::{random_policy, random_pomdp};
    use crate::model::tabular::fixtures::trivial;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model_and_policies(seed: u64, memory: usize) -> (TabularPomdp, TabularPolicy, TabularPolicy) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_pomdp(3, 4, 2, 0.9, &mut rng);
        let pb = random_policy(memory, 4, 2, 0.2, &mut rng).unwrap();
        let pe = random_policy(memory, 4, 2, 0.0, &mut rng).unwrap();
        (m, pb, pe)
    }

    #[test]
    fn constant_reward_gives_geometric_value() {
        let (mut m, _, pe) = model_and_policies(1, 1);
        for row in &mut m.reward {
            row.iter_mut().for_each(|r| *r = 2.5);
        }
        let nu = initial_augmented_distribution(&m, &pe).unwrap();
        let j = exact_policy_value(&m, &pe, &nu).unwrap();
        assert_abs_diff_eq!(j, 2.5 / (1.0 - 0.9), epsilon = 1e-10);
    }

    #[test]
    fn zero_discount_is_expected_first_reward() {
        let (mut m, _, pe) = model_and_policies(2, 0);
        m.gamma = 0.0;
        let nu = initial_augmented_distribution(&m, &pe).unwrap();
        let mut expect = 0.0;
        for s in 0..3 {
            for o in 0..4 {
                for a in 0..2 {
                    expect += nu.probs[s] * m.emission[s][o] * pe.prob(0, o, a) * m.reward[s][a];
                }
            }
        }
        assert_abs_diff_eq!(exact_policy_value(&m, &pe, &nu).unwrap(), expect, epsilon = 1e-14);
        assert_abs_diff_eq!(exact_finite_horizon_value(&m, &pe, &nu, 1).unwrap(), expect, epsilon = 1e-14);
    }

    #[test]
    fn finite_horizon_converges_within_tail_bound() {
        let (m, _, pe) = model_and_policies(3, 1);
        let nu = initial_augmented_distribution(&m, &pe).unwrap();
        let j = exact_policy_value(&m, &pe, &nu).unwrap();
        let t = 200;
        let jt = exact_finite_horizon_value(&m, &pe, &nu, t).unwrap();
        let bound = 0.9f64.powi(t as i32) / 0.1 * m.max_abs_reward();
        assert!((j - jt).abs() <= bound + 1e-12);
        assert!(exact_finite_horizon_value(&m, &pe, &nu, 0).is_err());
    }

    #[test]
    fn finite_horizon_matches_path_enumeration() {
        let (m, _, pe) = model_and_policies(4, 0);
        let nu = initial_augmented_distribution(&m, &pe).unwrap();
        let t = 5;
        // Enumerate (o, a) paths with latent forward messages.
        fn rec(m: &TabularPomdp, pe: &TabularPolicy, alpha: Vec<f64>, depth: usize, t: usize) -> f64 {
            if depth == t {
                return 0.0;
            }
            let mut total = 0.0;
            for o in 0..m.n_obs {
                for a in 0..m.n_actions {
                    let w: Vec<f64> = (0..m.n_states).map(|s| alpha[s] * m.emission[s][o] * pe.prob(0, o, a)).collect();
                    let r: f64 = (0..m.n_states).map(|s| w[s] * m.reward[s][a]).sum();
                    let mut next = vec![0.0; m.n_states];
                    m.propagate(&w, a, &mut next);
                    total += r + m.gamma * rec(m, pe, next, depth + 1, t);
                }
            }
            total
        }
        let brute = rec(&m, &pe, nu.probs.clone(), 0, t);
        assert_abs_diff_eq!(exact_finite_horizon_value(&m, &pe, &nu, t).unwrap(), brute, epsilon = 1e-12);
    }

    #[test]
    fn value_invariant_under_observation_relabeling() {
        let (m, _, pe) = model_and_policies(5, 1);
        let perm = [2usize, 0, 3, 1];
        let pm = m.permute_observations(&perm);
        let ab = m.alphabet();
        let ppe = TabularPolicy::from_fn(1, 4, 2, |z, o| {
            // Map relabeled inputs back to the original labels.
            let inv = |x: usize| perm.iter().position(|&p| p == x).unwrap();
            let orig = Window {
                obs: z.obs.iter().map(|&x| inv(x)).collect(),
                actions: z.actions.clone(),
            };
            pe.row(ab.window_index(&orig), inv(o)).to_vec()
        })
        .unwrap();
        let nu = initial_augmented_distribution(&m, &pe).unwrap();
        let mut pprobs = vec![0.0; nu.probs.len()];
        for (idx, &p) in nu.probs.iter().enumerate() {
            let (zi, s) = nu.space.split(idx);
            let z = nu.space.window(zi);
            let pz = Window {
                obs: z.obs.iter().map(|&x| perm[x]).collect(),
                actions: z.actions.clone(),
            };
            pprobs[nu.space.index(ab.window_index(&pz), s)] = p;
        }
        let pnu = AugmentedDistribution::new(nu.space, pprobs).unwrap();
        let a = exact_policy_value(&m, &pe, &nu).unwrap();
        let b = exact_policy_value(&pm, &ppe, &pnu).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn occupancy_is_normalized_and_reproduces_value() {
        let (m, _, pe) = model_and_policies(6, 1);
        let nu = initial_augmented_distribution(&m, &pe).unwrap();
        let d = discounted_occupancy(&m, &pe, &nu).unwrap();
        assert_abs_diff_eq!(d.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        let chain = AugmentedChain::new(&m, &pe, 1).unwrap();
        let via_d: f64 = d.probs.iter().zip(&chain.reward).map(|(p, r)| p * r).sum::<f64>() / (1.0 - m.gamma);
        assert_abs_diff_eq!(via_d, exact_policy_value(&m, &pe, &nu).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn occupancy_at_zero_discount_is_init() {
        let (mut m, _, pe) = model_and_policies(7, 1);
        m.gamma = 0.0;
        let nu = initial_augmented_distribution(&m, &pe).unwrap();
        let d = discounted_occupancy(&m, &pe, &nu).unwrap();
        assert_abs_diff_eq!(d.total_variation(&nu.probs), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn three_cycle_is_uniform() {
        let m = TabularPomdp {
            n_states: 3,
            n_obs: 3,
            n_actions: 1,
            transition: vec![vec![vec![0.0, 1.0, 0.0]], vec![vec![0.0, 0.0, 1.0]], vec![vec![1.0, 0.0, 0.0]]],
            emission: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            reward: vec![vec![0.0]; 3],
            gamma: 0.5,
            initial_state_dist: vec![1.0, 0.0, 0.0],
        };
        let p = TabularPolicy::uniform(0, 3, 1).unwrap();
        let d = behavior_stationary_distribution(&m, &p, 0).unwrap();
        for &x in &d.probs {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-12);
        }
        let chain = AugmentedChain::new(&m, &p, 0).unwrap();
        assert!(chain.stationarity_residual(&d.probs) <= 1e-10);
    }

    #[test]
    fn window_stationary_is_stationary_on_the_window_chain() {
        let (m, pb, _) = model_and_policies(8, 1);
        let d = behavior_stationary_distribution(&m, &pb, 3).unwrap();
        assert_abs_diff_eq!(d.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        let chain = AugmentedChain::new(&m, &pb, 3).unwrap();
        assert!(chain.stationarity_residual(&d.probs) <= 1e-10);
        let small = memory_stationary_distribution(&m, &pb).unwrap();
        let marg = d.state_marginal();
        for (a, b) in marg.iter().zip(small.state_marginal()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_state_sequence_probability_factorizes() {
        let m = TabularPomdp {
            n_states: 1,
            n_obs: 2,
            n_actions: 2,
            transition: vec![vec![vec![1.0], vec![1.0]]],
            emission: vec![vec![0.3, 0.7]],
            reward: vec![vec![0.0, 0.0]],
            gamma: 0.5,
            initial_state_dist: vec![1.0],
        };
        let p = TabularPolicy::memoryless(vec![vec![0.4, 0.6], vec![0.9, 0.1]]).unwrap();
        let seq = [(0, 1), (1, 0), (1, 1)];
        let expect = 0.3 * 0.6 * 0.7 * 0.9 * 0.7 * 0.1;
        assert_abs_diff_eq!(joint_sequence_probability(&m, &p, &seq).unwrap(), expect, epsilon = 1e-15);
        let pred = predictive_distribution(&m, &p, &seq).unwrap();
        assert_abs_diff_eq!(pred[0], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn sequence_probabilities_sum_to_one_and_shrink_with_extension() {
        let (m, _, _) = model_and_policies(9, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pe = random_policy(0, 4, 2, 0.0, &mut rng).unwrap();
        let ab = m.alphabet();
        let mut total = 0.0;
        for idx in 0..ab.window_count(3).unwrap() {
            let w = ab.decode_window(idx, 3);
            let seq: Vec<(usize, usize)> = w.obs.iter().copied().zip(w.actions.iter().copied()).collect();
            let p = joint_sequence_probability(&m, &pe, &seq).unwrap();
            let prefix = joint_sequence_probability(&m, &pe, &seq[..2]).unwrap();
            assert!(p <= prefix + 1e-15);
            total += p;
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert!(joint_sequence_probability(&m, &pe, &[(4, 0)]).is_err());
    }

    #[test]
    fn sequence_probability_requires_memoryless_policy() {
        let m = trivial(0.5);
        let p = TabularPolicy::uniform(1, 1, 1).unwrap();
        assert!(joint_sequence_probability(&m, &p, &[(0, 0)]).is_err());
    }
}
