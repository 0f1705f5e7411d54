//! Counter-based RNG streams.
//!
//! Every stochastic operation in the filter draws from a stream keyed by
//! `(seed, window, particle, role)`. Identical keys yield identical draws
//! regardless of how particles are scheduled across workers, so filter
//! output is invariant to the worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Role tags separating independent streams that share a (window, particle) key.
#[derive(Debug, Clone, Copy)]
pub enum StreamRole {
    Init = 1,
    Propagate = 2,
    Resample = 3,
    Rejuvenate = 4,
    Jitter = 5,
    Forecast = 6,
    Scratch = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix an arbitrary key sequence into a single derived seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut acc = 0x243f6a8885a308d3u64;
    for &p in parts {
        acc = splitmix64(acc ^ p.wrapping_mul(0x9e3779b97f4a7c15));
    }
    splitmix64(acc)
}

/// Derive a 256-bit ChaCha seed from the stream key.
pub fn stream(seed: u64, window: u64, particle: u64, role: StreamRole) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut acc = splitmix64(seed);
    acc = splitmix64(acc ^ window.wrapping_mul(0xd6e8feb86659fd93));
    acc = splitmix64(acc ^ particle.wrapping_mul(0xa0761d6478bd642f));
    acc = splitmix64(acc ^ role as u64);
    for chunk in key.chunks_mut(8) {
        acc = splitmix64(acc);
        chunk.copy_from_slice(&acc.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
