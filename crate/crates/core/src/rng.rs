//! Seed-stream derivation for reproducible Monte Carlo.
//!
//! A stream is keyed by `(seed, key)` and selected by a 64-bit stream index, so
//! trial `t` of grid point `k` always sees the same random numbers regardless
//! of which thread runs it or in what order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, key: u64, stream: u64) -> StreamRng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&key.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(bytes);
    rng.set_stream(stream);
    rng
}

/// Single-purpose generator for operations that take a bare seed.
pub fn seeded_rng(seed: u64) -> StreamRng {
    stream_rng(seed, 0, 0)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}
