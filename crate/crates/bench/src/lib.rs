//! Fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stn_core::{DenseTensor, TnFactorSet, TnTopology};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn factor_set(dims: &[usize], rank: usize, seed: u64) -> TnFactorSet {
    let topo = TnTopology::uniform(dims.to_vec(), rank).expect("valid topology");
    TnFactorSet::random(topo, &mut rng(seed))
}

pub fn tensor(dims: &[usize], seed: u64) -> DenseTensor {
    DenseTensor::random_normal(dims.to_vec(), 1.0, &mut rng(seed)).expect("valid dims")
}
