//! Random tabular models and policies with Dirichlet(1) rows.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::{TabularPolicy, TabularPomdp};
use crate::error::Result;

/// Uniform draw from the probability simplex of dimension `n`.
pub fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    fix_sum(&mut p);
    p
}

/// Pushes the rounding error of a normalized row into its largest entry.
fn fix_sum(p: &mut [f64]) {
    let err = 1.0 - p.iter().sum::<f64>();
    if let Some(i) = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])) {
        p[i] += err;
    }
}

/// Random POMDP with Dirichlet(1) transition, emission and initial rows and
/// uniform `[0, 1)` rewards.
pub fn random_pomdp<R: Rng + ?Sized>(n_states: usize, n_obs: usize, n_actions: usize, gamma: f64, rng: &mut R) -> TabularPomdp {
    let transition = (0..n_states)
        .map(|_| (0..n_actions).map(|_| random_simplex(n_states, rng)).collect())
        .collect();
    let emission = (0..n_states).map(|_| random_simplex(n_obs, rng)).collect();
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.random::<f64>()).collect())
        .collect();
    TabularPomdp {
        n_states,
        n_obs,
        n_actions,
        transition,
        emission,
        reward,
        gamma,
        initial_state_dist: random_simplex(n_states, rng),
    }
}

/// Random M-memory policy; each row is `uniform_mix * uniform +
/// (1 - uniform_mix) * Dirichlet(1)`. A positive mix guarantees full
/// support, as required of behavior policies.
pub fn random_policy<R: Rng + ?Sized>(
    memory: usize,
    n_obs: usize,
    n_actions: usize,
    uniform_mix: f64,
    rng: &mut R,
) -> Result<TabularPolicy> {
    let n_z = super::Alphabet::new(n_obs, n_actions).window_count(memory)?;
    let table = (0..n_z)
        .map(|_| {
            (0..n_obs)
                .map(|_| {
                    let mut row: Vec<f64> = random_simplex(n_actions, rng)
                        .into_iter()
                        .map(|p| uniform_mix / n_actions as f64 + (1.0 - uniform_mix) * p)
                        .collect();
                    fix_sum(&mut row);
                    row
                })
                .collect()
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_models_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            random_pomdp(4, 3, 2, 0.9, &mut rng).validate().unwrap();
            let p = random_policy(1, 3, 2, 0.3, &mut rng).unwrap();
            assert!(p.table.iter().flatten().flatten().all(|&x| x >= 0.15 - 1e-12));
        }
    }
}
