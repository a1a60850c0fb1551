//! Counter-based deterministic random streams.
//!
//! Every output is a pure function of `(seed, stream id, counter)`, so a
//! stream can be resumed anywhere by counter arithmetic alone — no state
//! beyond the number of draws consumed. One `u64` output is one draw-unit;
//! `next_f64` and `next_index` each consume exactly one.

use crate::seedspace::SeedSpace;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output mix: a cheap bijective scrambler.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Logical owner of a random stream within one game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamId {
    Analyst,
    Mechanism,
    Environment,
}

impl StreamId {
    fn tag(self) -> u64 {
        match self {
            StreamId::Analyst => 0x414E_414C_5953_5400,
            StreamId::Mechanism => 0x4D45_4348_414E_4900,
            StreamId::Environment => 0x454E_5649_524F_4E00,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StreamId::Analyst => "analyst",
            StreamId::Mechanism => "mechanism",
            StreamId::Environment => "environment",
        }
    }
}

/// Deterministic splittable random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    seed: u64,
    stream: StreamId,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        let key = mix64(mix64(seed ^ stream.tag()).wrapping_add(stream.tag()));
        RngStream {
            key,
            seed,
            stream,
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    /// Draws consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Jump directly to an absolute draw count.
    pub fn set_counter(&mut self, counter: u64) {
        self.counter = counter;
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform seed index. The domain size is a power of two, so masking is
    /// exact and unbiased.
    #[inline]
    pub fn next_index(&mut self, space: SeedSpace) -> u64 {
        self.next_u64() & space.mask()
    }
}
