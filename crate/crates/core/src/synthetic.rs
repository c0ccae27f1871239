//! Synthetic user-model pool for running studies without the reference data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::env::ModelRecord;
use crate::features::ENV_BASELINE_DIM;

/// Size of the reference cohort the pool imitates.
pub const SYNTHETIC_POOL_SIZE: usize = 13;

/// Thirteen plausible user models, deterministic in `seed`.
///
/// Poisson intercepts spread mean brushing quality over roughly 60 to 160
/// seconds and Bernoulli intercepts spread the chance of skipping a session
/// over roughly 5% to 40%, so the pool contains both users who reach the
/// burden threshold and users who never do. Slopes are small draws around
/// zero, with a mild positive dependence on the proportion of non-zero
/// sessions for engagement.
pub fn synthetic_pool(seed: u64) -> Vec<ModelRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slope = Normal::new(0.0, 0.1).expect("valid sd");
    (0..SYNTHETIC_POOL_SIZE)
        .map(|i| {
            let frac = i as f64 / (SYNTHETIC_POOL_SIZE - 1) as f64;
            let mut w_b = [0.0; ENV_BASELINE_DIM];
            let mut w_p = [0.0; ENV_BASELINE_DIM];
            for d in 1..ENV_BASELINE_DIM {
                w_b[d] = slope.sample(&mut rng);
                w_p[d] = 0.5 * slope.sample(&mut rng);
            }
            let skip = 0.05 + 0.35 * (1.0 - frac);
            w_b[0] = (skip / (1.0 - skip)).ln();
            w_b[4] -= 0.5;
            w_p[0] = (60.0 + 100.0 * frac).ln();
            w_p[4] += 0.05;
            ModelRecord {
                id: format!("synthetic-{i:02}"),
                w_b,
                w_p,
                effects: None,
            }
        })
        .collect()
}
