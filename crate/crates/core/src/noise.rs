//! Counter-keyed noise streams.
//!
//! Every noisy quantity in the simulator is drawn from a generator keyed by
//! `(seed, step, column, lane)`. Work can therefore be scheduled across any
//! number of threads, in any order, without changing a single output bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

const KEY_TAG: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; full avalanche over structured keys.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for the noise stream identified by `(seed, step, column, lane)`.
pub(crate) fn stream(seed: u64, step: u64, column: u64, lane: u64) -> ChaCha8Rng {
    let mut acc = mix64(seed ^ KEY_TAG);
    for part in [step, column, lane] {
        acc = mix64(acc ^ part.wrapping_mul(KEY_TAG));
    }
    let mut key = [0u8; 32];
    for (word, chunk) in key.chunks_exact_mut(8).enumerate() {
        let w = mix64(acc ^ (word as u64).wrapping_mul(KEY_TAG));
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Photon shot noise: replaces `sum` by a Poisson draw with mean
/// `photons_per_unit * sum`, scaled back to signal units. Non-positive means
/// produce zero counts.
pub(crate) fn shot(rng: &mut ChaCha8Rng, sum: f64, photons_per_unit: f64) -> f64 {
    let mean = photons_per_unit * sum;
    if mean <= 0.0 {
        return 0.0;
    }
    let draw: f64 = Poisson::new(mean)
        .expect("shot noise mean must be positive and finite")
        .sample(rng);
    draw / photons_per_unit
}

/// Additive Gaussian read noise with standard deviation `std`.
pub(crate) fn read(rng: &mut ChaCha8Rng, sum: f64, std: f64) -> f64 {
    if std <= 0.0 {
        return sum;
    }
    let n: f64 = Normal::new(0.0, std)
        .expect("read noise std must be finite")
        .sample(rng);
    sum + n
}
