//! Reproducible random streams.
//!
//! Every Monte-Carlo realisation draws from its own ChaCha8 stream, keyed by
//! a 64-bit seed and a 64-bit stream id. ChaCha is counter based, so a
//! realisation's draws do not depend on which thread runs it or in what
//! order the realisations are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Substream for realisation `realisation` of channel `channel`.
    pub fn substream(seed: u64, channel: u32, realisation: u32) -> Self {
        RngStream {
            seed,
            stream_id: (u64::from(channel) << 32) | u64::from(realisation),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_streams_reproduce() {
        let s = RngStream::new(42, 7);
        let (mut a, mut b) = (s.rng(), s.rng());
        for _ in 0..100_000 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
            assert_eq!(a.gen::<f64>().to_bits(), b.gen::<f64>().to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(42, 0).rng();
        let mut b = RngStream::new(42, 1).rng();
        let xa: Vec<u64> = (0..8).map(|_| a.gen()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.gen()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn substream_packing() {
        assert_eq!(RngStream::substream(1, 2, 3).stream_id, (2 << 32) | 3);
    }

    #[test]
    fn known_first_draw_is_stable() {
        // Freezes the generator so that an accidental algorithm change shows up.
        assert_eq!(RngStream::new(0, 0).rng().gen::<u64>(), 0xb585_f767_a79a_3b6c);
        assert_eq!(RngStream::substream(7, 1, 2).rng().gen::<u64>(), 0xc30d_030b_ce00_f7d9);
    }
}
