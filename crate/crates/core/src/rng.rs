//! Named, independently reproducible random streams derived from one seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const STREAM_DATA: &str = "data";
pub const STREAM_INIT: &str = "init";
pub const STREAM_DROPOUT: &str = "dropout";
pub const STREAM_BOOTSTRAP: &str = "bootstrap";
pub const STREAMS: [&str; 4] = [STREAM_DATA, STREAM_INIT, STREAM_DROPOUT, STREAM_BOOTSTRAP];

/// A generator keyed by SHA-256 of the seed and the stream name.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
