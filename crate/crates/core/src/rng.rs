//! Keyed random streams.
//!
//! Every consumer of randomness (a leaf, a combine, a resampling slot, a
//! Gibbs parameter update) derives its own stream from a [`StreamKey`].
//! Derivation is a pure function of the key, so results never depend on
//! which thread ran what, or in which order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Purpose tag separating streams that would otherwise share coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    LeafProposal = 1,
    PairResample = 2,
    StarSelect = 3,
    GibbsParam = 4,
    Filter = 5,
    BackwardSample = 6,
    Simulation = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    /// Tree level (0 for leaves and for flat, level-less consumers).
    pub level: u32,
    /// Node index within the level (time index for leaves).
    pub node: u64,
    pub role: Role,
    /// Sub-stream counter, e.g. the output slot of a lazy resampler.
    pub counter: u64,
}

impl StreamKey {
    pub const fn new(seed: u64, level: u32, node: u64, role: Role) -> Self {
        StreamKey { seed, level, node, role, counter: 0 }
    }

    pub const fn with_counter(self, counter: u64) -> Self {
        StreamKey { counter, ..self }
    }

    /// Derives the stream for this key.
    pub fn stream(&self) -> Stream {
        derive_stream(*self)
    }
}

#[inline]
const fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a stream from the key. The ChaCha key is a hash of
/// `(seed, level, node, role)`; `counter` selects the ChaCha stream id.
pub fn derive_stream(key: StreamKey) -> Stream {
    let mut h = splitmix(key.seed ^ 0x6A09_E667_F3BC_C908);
    h = splitmix(h ^ (key.level as u64).wrapping_mul(0xBB67_AE85_84CA_A73B));
    h = splitmix(h ^ key.node.wrapping_mul(0x3C6E_F372_FE94_F82B));
    h = splitmix(h ^ (key.role as u64).wrapping_mul(0xA54F_F53A_5F1D_36F1));
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
        let word = splitmix(h ^ ((i as u64 + 1).wrapping_mul(0x510E_527F_ADE6_82D1)));
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(key.counter);
    Stream { rng }
}

/// A random stream handle. Used by one worker at a time.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `(0, 1]`, safe to take the log of.
    #[inline]
    pub fn uniform_pos(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform index in `0..n`. `n` must be positive.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
