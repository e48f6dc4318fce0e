//! Shared fixtures for the benchmarks.

use pomdp_ope::data::WindowConfig;
use pomdp_ope::model::random::{random_policy, random_pomdp};
use pomdp_ope::model::{TabularPolicy, TabularPomdp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub model: TabularPomdp,
    pub behavior: TabularPolicy,
    pub evaluation: TabularPolicy,
    pub window: WindowConfig,
}

/// Random model with `|S| = 3`, `|A| = 2` and the given observation count
/// and memory; `M_H = M + 2`, `M_F = 2`.
pub fn fixture(n_obs: usize, memory: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_pomdp(3, n_obs, 2, 0.9, &mut rng);
    let behavior = random_policy(memory, n_obs, 2, 0.5, &mut rng).expect("behavior policy");
    let evaluation = random_policy(memory, n_obs, 2, 0.2, &mut rng).expect("evaluation policy");
    Fixture {
        model,
        behavior,
        evaluation,
        window: WindowConfig::new(memory, memory + 2, 2).expect("window"),
    }
}
