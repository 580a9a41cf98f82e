//! Seed derivation for reproducible parallel streams.
//!
//! Every random draw is taken from a ChaCha8 stream whose seed is a pure
//! function of the master seed and a short path of integers (replicate,
//! purpose, ...). Results therefore do not depend on scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const PURPOSE_COVARIANCE: u64 = 1;
pub const PURPOSE_GAMMA: u64 = 2;
pub const PURPOSE_DESIGN: u64 = 3;
pub const PURPOSE_NOISE: u64 = 4;
pub const PURPOSE_SPLIT: u64 = 5;
pub const PURPOSE_DATA: u64 = 6;
pub const PURPOSE_LABELS: u64 = 7;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `path` into `master` one component at a time.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Column-major fill order, so the draw sequence is fixed.
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

pub fn rademacher_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}
