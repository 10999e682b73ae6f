//! Keyed, splittable random streams.
//!
//! A [`Streams`] value is a 256-bit key derived from a user seed. Every
//! replicate gets its own ChaCha8 stream selected by the replicate index, so
//! the draws of replicate `i` depend only on `(seed, tag path, i)` and never
//! on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    key: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        let key = [splitmix64(&mut s), splitmix64(&mut s), splitmix64(&mut s), splitmix64(&mut s)];
        Streams { key }
    }

    /// Derives an independent family of streams, e.g. one per side of a
    /// duality check. Distinct tags give unrelated keys.
    pub fn fork(&self, tag: u64) -> Self {
        let mut s = self.key[0] ^ self.key[1].rotate_left(17) ^ self.key[2].rotate_left(31) ^ self.key[3].rotate_left(47);
        s ^= tag.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let mut key = [0u64; 4];
        for (k, own) in key.iter_mut().zip(self.key) {
            *k = splitmix64(&mut s) ^ own;
        }
        Streams { key }
    }

    /// Fork keyed by a string label.
    pub fn fork_named(&self, label: &str) -> Self {
        // FNV-1a, stable across platforms.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.fork(h)
    }

    pub fn rng(&self, index: u64) -> StreamRng {
        let mut seed = [0u8; 32];
        for (chunk, k) in seed.chunks_exact_mut(8).zip(self.key) {
            chunk.copy_from_slice(&k.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(index);
        rng
    }
}
