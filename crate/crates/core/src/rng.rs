//! Seeded, splittable randomness. Every `(round, slot)` pair owns an
//! independent ChaCha8 stream derived from the run seed, so the draws an
//! agent sees in a round do not depend on how many draws other agents made.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Recorded in every trace.
pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64;stream=(round<<32)|slot";

/// Slot used for the per-round activation-order shuffle.
pub const SHUFFLE_SLOT: u32 = 0;

/// Round index reserved for world construction draws.
pub const INIT_ROUND: u32 = u32::MAX;

pub fn agent_slot(agent: usize) -> u32 {
    u32::try_from(agent + 1).expect("agent index fits in u32")
}

#[derive(Clone, Debug)]
pub struct StreamFactory {
    key: [u8; 32],
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self {
            key: ChaCha8Rng::seed_from_u64(seed).get_seed(),
        }
    }

    pub fn stream(&self, round: u32, slot: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream((u64::from(round) << 32) | u64::from(slot));
        rng
    }
}

/// Wraps a stream and folds every value it hands out into a digest.
pub struct RecordedStream<'a> {
    rng: ChaCha8Rng,
    digest: &'a mut Sha256,
}

impl<'a> RecordedStream<'a> {
    pub fn new(rng: ChaCha8Rng, stream_id: (u32, u32), digest: &'a mut Sha256) -> Self {
        digest.update(stream_id.0.to_le_bytes());
        digest.update(stream_id.1.to_le_bytes());
        Self { rng, digest }
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        self.digest.update(u.to_bits().to_le_bytes());
        u
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RecordedStream<'_> {
    fn next_u32(&mut self) -> u32 {
        let v = self.rng.next_u32();
        self.digest.update(v.to_le_bytes());
        v
    }

    fn next_u64(&mut self) -> u64 {
        let v = self.rng.next_u64();
        self.digest.update(v.to_le_bytes());
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst);
        self.digest.update(&*dst);
    }
}
