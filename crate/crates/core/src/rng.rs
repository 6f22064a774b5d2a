//! Reproducible random streams.
//!
//! A stream is identified by a master seed and a path of `(tag, index)`
//! pairs. The 256-bit ChaCha seed is the SHA-256 digest of that identity, so
//! the sequence a task sees depends only on its identity and never on which
//! thread runs it or in which order tasks are scheduled.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identity of a random stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamId {
    pub master_seed: u64,
    pub path: Vec<(String, u64)>,
}

impl StreamId {
    fn seed_bytes(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"bignn-rng-v1");
        hasher.update(self.master_seed.to_le_bytes());
        for (tag, index) in &self.path {
            hasher.update((tag.len() as u64).to_le_bytes());
            hasher.update(tag.as_bytes());
            hasher.update(index.to_le_bytes());
        }
        hasher.finalize().into()
    }
}

/// A seeded random generator bound to a [`StreamId`].
///
/// Streams are never shared between tasks: derive a child with
/// [`RngStream::substream`] for every logical task instead.
#[derive(Debug, Clone)]
pub struct RngStream {
    id: StreamId,
    rng: ChaCha20Rng,
}

impl RngStream {
    /// Root stream for `(master_seed, tag, index)`.
    pub fn new(master_seed: u64, tag: &str, index: u64) -> Self {
        Self::from_id(StreamId {
            master_seed,
            path: vec![(tag.to_string(), index)],
        })
    }

    pub fn from_id(id: StreamId) -> Self {
        let rng = ChaCha20Rng::from_seed(id.seed_bytes());
        RngStream { id, rng }
    }

    /// Child stream; independent of how much the parent has been consumed.
    pub fn substream(&self, tag: &str, index: u64) -> Self {
        let mut id = self.id.clone();
        id.path.push((tag.to_string(), index));
        Self::from_id(id)
    }

    pub fn id(&self) -> &StreamId {
        &self.id
    }

    pub fn master_seed(&self) -> u64 {
        self.id.master_seed
    }
}

impl RngCore for RngStream {
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
