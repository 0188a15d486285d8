//! Seeded, reproducible random streams.
//!
//! A stream is identified by `(seed, stream_id)`. It is backed by ChaCha8,
//! whose native 64-bit stream selector keeps sibling streams independent.
//! Child streams for replicates are derived by hashing the parent identity,
//! so a replicate's draws never depend on how work is scheduled.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub stream: u64,
}

#[derive(Clone, Debug)]
pub struct RngStream {
    id: StreamId,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream {
            id: StreamId { seed, stream },
            inner,
        }
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Independent child stream `child` of this stream's identity.
    ///
    /// Depends only on `(seed, stream, child)`, never on draws already taken.
    pub fn substream(&self, child: u64) -> RngStream {
        let derived = splitmix64(self.id.seed ^ splitmix64(self.id.stream.wrapping_add(0x5151)));
        RngStream::new(derived, child)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.sample(rand_distr::StandardNormal)
    }

    pub fn sample<T, D: rand_distr::Distribution<T>>(&mut self, dist: D) -> T {
        dist.sample(&mut self.inner)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
