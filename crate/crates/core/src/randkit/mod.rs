//! Random-variate kernels and special functions shared by the samplers
//! and the simulator.

mod dists;
pub mod special;
mod truncnorm;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use dists::{
    sample_chi_squared, sample_dirichlet, sample_inv_wishart_2x2, sample_inverse_gamma, sample_log_gamma, sample_mvn2,
    sample_truncated_half_cauchy,
};
pub use special::log_phi_tail;
pub use truncnorm::sample_truncated_normal;

/// Generator used by every chain and replicate.
pub type ChainRng = ChaCha8Rng;

/// A reproducible random stream: one root seed, many independent streams.
///
/// Streams share the ChaCha key derived from `seed` and differ in the
/// 64-bit ChaCha stream counter, so distinct `stream_id`s never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Stream id for a task addressed by a path of indices, e.g.
    /// `[replicate, method, chain]`.
    pub fn for_task(seed: u64, path: &[u64]) -> Self {
        let id = path.iter().fold(0x6a09_e667_f3bc_c909u64, |acc, &k| splitmix64(acc ^ splitmix64(k)));
        Self { seed, stream_id: id }
    }

    pub fn rng(&self) -> ChainRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
