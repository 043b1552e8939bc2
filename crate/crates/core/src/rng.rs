//! Named, seeded random streams.
//!
//! A stream is keyed by `(seed, label)`. Consumers derive child streams by
//! label, so adding a new consumer never shifts the draws of an existing one.

use alloc::format;
use alloc::string::String;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    label: String,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        Self {
            seed,
            label: label.into(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Child stream `"{label}/{child}"` under the same seed.
    pub fn derive(&self, child: &str) -> Self {
        Self::new(self.seed, format!("{}/{}", self.label, child))
    }

    /// Child stream `"{label}/{child}#{index}"`.
    pub fn derive_indexed(&self, child: &str, index: u64) -> Self {
        Self::new(self.seed, format!("{}/{}#{}", self.label, child, index))
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }

    fn key(&self) -> [u8; 32] {
        // FNV-1a over the label, then splitmix64 to fill the key.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.label.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let mut state = self.seed ^ h.rotate_left(29);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        key
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn equal_streams_agree_for_ten_thousand_draws() {
        let mut a = RngStream::new(42, "synth").rng();
        let mut b = RngStream::new(42, "synth").rng();
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn labels_and_seeds_separate_streams() {
        let first = |s: RngStream| s.rng().next_u64();
        let base = first(RngStream::new(1, "a"));
        assert_ne!(base, first(RngStream::new(1, "b")));
        assert_ne!(base, first(RngStream::new(2, "a")));
        assert_ne!(
            first(RngStream::new(1, "a").derive_indexed("k", 0)),
            first(RngStream::new(1, "a").derive_indexed("k", 1))
        );
    }

    #[test]
    fn first_draw_is_pinned() {
        // Guards against accidental changes to key derivation.
        let v = RngStream::new(7, "pinned").rng().next_u64();
        assert_eq!(v, 10_455_366_266_610_086_794);
    }
}
