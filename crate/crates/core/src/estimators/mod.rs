//! Policy-value estimators: linear and RKHS minimax closed forms, exact
//! minimax over finite classes, the finite-horizon recursion, and the SIS
//! and LSTD baselines.

pub mod enumerate;
pub mod linear;
pub mod lstd;
pub mod moments;
pub mod rkhs;
pub mod sis;

pub use enumerate::{minimax_enumerate, ClassBounds, CriticFn, EnumeratedEstimate, FunctionClass, ValueFn};
pub use linear::{
    critic_weight, finite_horizon_linear, linear_objective, minimax_linear, moment_residual, projected_residual,
    EstimatorConfig, ValueEstimate,
};
pub use lstd::{lstd_value, LstdSample};
pub use moments::{compute_moments, importance_ratios, nu_mean, MomentSet, MomentSource};
pub use rkhs::{minimax_rkhs, RkhsKernels};
pub use sis::{sample_tabular_trajectories, sis_estimate, SisEstimate};

use crate::data::{population_sample, WindowConfig};
use crate::error::Result;
use crate::features::{FbarFeatures, HistoryFeatures};
use crate::model::{TabularPolicy, TabularPomdp};

/// Exact moments under the behavior stationary law, with `nu_mean` taken
/// from the exact initial law of `F̄`.
pub fn population_moments<FF, FH>(
    model: &TabularPomdp,
    policy_b: &TabularPolicy,
    policy_e: &TabularPolicy,
    phi_f: &FF,
    phi_h: &FH,
    config: WindowConfig,
) -> Result<MomentSet>
where
    FF: FbarFeatures<usize, usize> + ?Sized,
    FH: HistoryFeatures<usize, usize> + ?Sized,
{
    let pop = population_sample(model, policy_b, config)?;
    compute_moments(&pop.view(), phi_f, phi_h, policy_e, policy_b, model.gamma)
}
