//! Classical off-policy LSTD for state-value functions on fully observed
//! models, kept independent of the moment machinery as a reference.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstdSample {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// Solves `sum_i e_{s_i} (e_{s_i} - gamma mu_i e_{s'_i})' v = sum_i e_{s_i} mu_i r_i`
/// with tabular policies `pi[s][a]` and returns `mean_j v(s0_j)`.
pub fn lstd_value(
    samples: &[LstdSample],
    initial_states: &[usize],
    n_states: usize,
    pi_e: &[Vec<f64>],
    pi_b: &[Vec<f64>],
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() || initial_states.is_empty() {
        return Err(Error::argument("LSTD needs transitions and initial states"));
    }
    let mut a = DMatrix::<f64>::zeros(n_states, n_states);
    let mut b = DVector::<f64>::zeros(n_states);
    for s in samples {
        let pb = pi_b[s.state][s.action];
        if pb <= 0.0 {
            return Err(Error::argument("behavior probability zero on observed action"));
        }
        let rho = pi_e[s.state][s.action] / pb;
        a[(s.state, s.state)] += 1.0;
        a[(s.state, s.next_state)] -= gamma * rho;
        b[s.state] += rho * s.reward;
    }
    let n = samples.len() as f64;
    a /= n;
    b /= n;
    let v = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::numerical("LSTD system singular: some state never visited"))?;
    let j = initial_states.iter().map(|&s| v[s]).sum::<f64>() / initial_states.len() as f64;
    Ok((j, v.iter().copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_cycle() {
        // 0 -> 1 -> 0, reward 1 in state 0 only.
        let samples = vec![
            LstdSample {
                state: 0,
                action: 0,
                reward: 1.0,
                next_state: 1,
            },
            LstdSample {
                state: 1,
                action: 0,
                reward: 0.0,
                next_state: 0,
            },
        ];
        let pi = vec![vec![1.0], vec![1.0]];
        let (j, v) = lstd_value(&samples, &[0], 2, &pi, &pi, 0.5).unwrap();
        assert!((v[0] - 1.0 / (1.0 - 0.25)).abs() < 1e-12);
        assert!((j - v[0]).abs() < 1e-15);
    }
}
