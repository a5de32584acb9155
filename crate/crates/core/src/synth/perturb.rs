use alloc::vec::Vec;

use nalgebra::Vector6;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::se3_exp;
use crate::solver::Params;
use crate::{Error, Result};

/// Adds i.i.d. `N(0, σ²)` noise to every free parameter: `exp(σ ξ) · T` for
/// each pose and `d + σ ε` for each inverse depth. Draws are taken frame by
/// frame, then point by point, from a generator seeded with `seed`.
pub fn perturb_parameters(truth: &Params, sigma: f64, seed: u64) -> Result<Params> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig("sigma must be a non-negative number"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses = truth
        .poses
        .iter()
        .map(|p| {
            let xi = Vector6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            se3_exp(&(xi * sigma)) * *p
        })
        .collect();
    let inv_depths: Vec<f64> = truth
        .inv_depths
        .iter()
        .map(|d| d + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Params { poses, inv_depths })
}
