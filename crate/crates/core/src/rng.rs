//! Seedable, splittable random streams.
//!
//! Every consumer of randomness derives its own ChaCha8 substream from the
//! run seed plus a domain tag and up to two indices (e.g. epoch, sample).
//! Streams never share state, so results do not depend on evaluation order
//! or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type RngStream = ChaCha8Rng;

/// Named randomness domains. The discriminant is mixed into the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Init = 1,
    Split = 2,
    Shuffle = 3,
    Augment = 4,
    Dropout = 5,
    Background = 6,
    Shap = 7,
    Baseline = 8,
    Synth = 9,
    Test = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Substream for `(seed, domain, a, b)`.
pub fn stream(seed: u64, domain: Domain, a: u64, b: u64) -> RngStream {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    let id = splitmix64(splitmix64(splitmix64(domain as u64) ^ a) ^ b.rotate_left(32));
    rng.set_stream(id);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_stream() {
        let mut a = stream(7, Domain::Augment, 3, 11);
        let mut b = stream(7, Domain::Augment, 3, 11);
        for _ in 0..16 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn different_indices_diverge() {
        let mut a = stream(7, Domain::Augment, 3, 11);
        let mut b = stream(7, Domain::Augment, 3, 12);
        let mut c = stream(7, Domain::Dropout, 3, 11);
        let x = a.random::<u64>();
        assert_ne!(x, b.random::<u64>());
        assert_ne!(x, c.random::<u64>());
    }
}
