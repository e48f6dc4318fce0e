use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::moments::MomentSet;
use crate::error::{Error, Result};
use crate::linalg::{pinv, singular_values};

/// Stabilizer `lambda` and norm regularizers `alpha` (critic) and
/// `alpha_prime` (value function) of the minimax objective
/// `E[(mu(R + gamma q(F̄')) - q(F̄)) xi(H) - lambda xi(H)^2 / 2]
///  - alpha ||xi||^2 / 2 + alpha' ||q||^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub lambda: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub alpha_prime: f64,
}

impl Default for EstimatorConfig {
    /// `lambda = 1`, no norm penalties.
    fn default() -> Self {
        EstimatorConfig {
            lambda: 1.0,
            alpha: 0.0,
            alpha_prime: 0.0,
        }
    }
}

impl EstimatorConfig {
    /// `lambda = alpha = alpha' = 0`: the plain `M2^+ M1` solution.
    pub fn exact() -> Self {
        EstimatorConfig {
            lambda: 0.0,
            alpha: 0.0,
            alpha_prime: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("alpha", self.alpha), ("alpha_prime", self.alpha_prime)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be finite and nonnegative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub estimator: String,
    pub j_hat: f64,
    /// Weights on `phi_F̄` (linear) or dual weights on data points (RKHS).
    pub coefficients: Vec<f64>,
    /// Squared norm of the Bellman residual projected on `phi_H`.
    pub residual_norm: f64,
    pub config: EstimatorConfig,
    pub n: usize,
}

/// Critic weight `W = (alpha I + lambda M3)^+`; `None` when
/// `lambda = alpha = 0`.
pub fn critic_weight(m: &MomentSet, cfg: &EstimatorConfig) -> Option<DMatrix<f64>> {
    if cfg.lambda == 0.0 && cfg.alpha == 0.0 {
        return None;
    }
    let d = m.d_h();
    Some(pinv(&(DMatrix::identity(d, d) * cfg.alpha + &m.m3 * cfg.lambda)))
}

/// `r(theta) = M1 - M2 theta`, the linear moment residual.
pub fn moment_residual(m: &MomentSet, theta: &DVector<f64>) -> DVector<f64> {
    &m.m1 - &m.m2 * theta
}

/// Closed-form minimax value `max_eta L(theta, eta)`:
/// `r' W r / 2 + alpha' ||theta||^2 / 2`.
pub fn linear_objective(m: &MomentSet, cfg: &EstimatorConfig, theta: &DVector<f64>) -> Result<f64> {
    let w = critic_weight(m, cfg).ok_or_else(|| Error::argument("objective unbounded for lambda = alpha = 0"))?;
    let r = moment_residual(m, theta);
    Ok(0.5 * r.dot(&(&w * &r)) + 0.5 * cfg.alpha_prime * theta.norm_squared())
}

/// `r' M3^+ r`, the projected Bellman residual of `phi_F̄' theta`.
pub fn projected_residual(m: &MomentSet, theta: &DVector<f64>) -> f64 {
    let r = moment_residual(m, theta);
    r.dot(&(pinv(&m.m3) * &r)).max(0.0)
}

fn conditioning(m: &DMatrix<f64>) -> String {
    let s = singular_values(m);
    format!(
        "sigma_max {:.3e}, sigma_min {:.3e}",
        s.first().copied().unwrap_or(0.0),
        s.last().copied().unwrap_or(0.0)
    )
}

fn finish(name: &str, m: &MomentSet, cfg: EstimatorConfig, theta: DVector<f64>, j_hat: f64) -> Result<ValueEstimate> {
    if !j_hat.is_finite() || theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("{name}: non-finite estimate ({})", conditioning(&m.m2))));
    }
    Ok(ValueEstimate {
        estimator: name.to_string(),
        j_hat,
        residual_norm: projected_residual(m, &theta),
        coefficients: theta.iter().copied().collect(),
        config: cfg,
        n: m.n,
    })
}

/// Minimax estimator over linear `Q` and `Xi`:
/// `theta = (M2' W M2 + alpha' I)^+ M2' W M1` with `W = (alpha I + lambda M3)^+`,
/// and `theta = M2^+ M1` when `lambda = alpha = 0` (the limit `W -> inf I`).
pub fn minimax_linear(m: &MomentSet, cfg: &EstimatorConfig) -> Result<ValueEstimate> {
    cfg.validate()?;
    let theta = match critic_weight(m, cfg) {
        None => pinv(&m.m2) * &m.m1,
        Some(w) => {
            let mt_w = m.m2.transpose() * &w;
            let d = m.d_f();
            let lhs = &mt_w * &m.m2 + DMatrix::identity(d, d) * cfg.alpha_prime;
            pinv(&lhs) * (mt_w * &m.m1)
        }
    };
    let j = m.nu_mean.dot(&theta);
    finish("minimax_linear", m, *cfg, theta, j)
}

/// Finite-horizon recursion `theta_T = 0`,
/// `theta_t = P^+ (M1 + gamma Q theta_{t+1})`, `J_T = nu' theta_0`.
pub fn finite_horizon_linear(m: &MomentSet, horizon: usize) -> Result<ValueEstimate> {
    if horizon < 1 {
        return Err(Error::argument("horizon must be at least 1"));
    }
    let p_inv = pinv(&m.p);
    let mut theta = DVector::zeros(m.d_f());
    for _ in 0..horizon {
        theta = &p_inv * (&m.m1 + &m.q * &theta * m.gamma);
    }
    let j = m.nu_mean.dot(&theta);
    let mut est = finish("finite_horizon_linear", m, EstimatorConfig::exact(), theta, j)?;
    est.residual_norm = f64::NAN;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::moments::MomentSource;
    use approx::assert_abs_diff_eq;

    fn moments(m1: Vec<f64>, m2: DMatrix<f64>, m3: DMatrix<f64>, nu: Vec<f64>) -> MomentSet {
        let d_f = m2.ncols();
        MomentSet {
            m1: DVector::from_vec(m1),
            p: m2.clone(),
            q: DMatrix::zeros(m2.nrows(), d_f),
            m2,
            m3,
            nu_mean: DVector::from_vec(nu),
            gamma: 0.0,
            n: 1,
            source: MomentSource::Population,
        }
    }

    #[test]
    fn invertible_m2_gives_inverse_solution() {
        let m2 = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 3.0]);
        let m = moments(vec![1.0, 2.0], m2.clone(), DMatrix::identity(2, 2), vec![0.5, 0.5]);
        let est = minimax_linear(&m, &EstimatorConfig::exact()).unwrap();
        let expect = m2.try_inverse().unwrap() * DVector::from_vec(vec![1.0, 2.0]);
        assert_abs_diff_eq!(DVector::from_vec(est.coefficients.clone()), expect, epsilon = 1e-12);
        assert!(est.residual_norm < 1e-20);
    }

    #[test]
    fn regularized_solution_is_stationary_point_of_objective() {
        let m2 = DMatrix::from_row_slice(3, 2, &[2.0, 1.0, 0.5, 3.0, 1.0, -1.0]);
        let m3 = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 2.0, 0.1, 0.0, 0.1, 0.5]);
        let m = moments(vec![1.0, 2.0, -1.0], m2, m3, vec![0.3, 0.7]);
        let cfg = EstimatorConfig {
            lambda: 0.7,
            alpha: 0.1,
            alpha_prime: 0.05,
        };
        let est = minimax_linear(&m, &cfg).unwrap();
        let theta = DVector::from_vec(est.coefficients);
        let f0 = linear_objective(&m, &cfg, &theta).unwrap();
        for k in 0..2 {
            for sign in [-1.0, 1.0] {
                let mut t = theta.clone();
                t[k] += sign * 1e-4;
                assert!(linear_objective(&m, &cfg, &t).unwrap() >= f0);
            }
        }
    }

    #[test]
    fn finite_horizon_base_cases() {
        let m2 = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 3.0]);
        let m = moments(vec![1.0, 2.0], m2.clone(), DMatrix::identity(2, 2), vec![0.5, 0.5]);
        assert!(finite_horizon_linear(&m, 0).is_err());
        let one = finite_horizon_linear(&m, 1).unwrap();
        let expect = m.nu_mean.dot(&(m2.try_inverse().unwrap() * &m.m1));
        assert_abs_diff_eq!(one.j_hat, expect, epsilon = 1e-12);
    }

    #[test]
    fn negative_hyperparameters_rejected() {
        let cfg = EstimatorConfig {
            lambda: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
