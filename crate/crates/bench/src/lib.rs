//! Shared fixtures for the benchmark targets.

use nalgebra::DVector;
use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha8Rng;
use t4s_core::t3::{random_t3, TuckerTensorTrain};

pub fn fixture_t3(dims: &[usize], tucker: &[usize], tt: &[usize], seed: u64) -> TuckerTensorTrain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_t3(dims, tucker, tt, &mut rng).unwrap()
}

pub fn fixture_vectors(dims: &[usize], seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dims.iter()
        .map(|&n| DVector::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0))
        .collect()
}
