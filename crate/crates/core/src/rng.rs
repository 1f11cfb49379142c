//! Seeded, splittable random streams.
//!
//! Every consumer draws from its own ChaCha stream derived from the run seed
//! and a fixed stream id, so changing how much one component draws never
//! perturbs another.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// Stream identifiers. Per-pattern streams add the pattern index.
pub mod ids {
    pub const FEATURES: u64 = 1;
    pub const RESPONSE: u64 = 2;
    pub const MASKS: u64 = 3;
    pub const IMPUTE: u64 = 10;
    pub const TRAIN: u64 = 11;
    pub const GENERATOR_INIT: u64 = 1 << 20;
    pub const CRITIC_INIT: u64 = 2 << 20;
    pub const PATTERN_TRAIN: u64 = 3 << 20;
}

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `rows x cols` matrix of independent standard normals.
pub fn standard_normal_matrix<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}
