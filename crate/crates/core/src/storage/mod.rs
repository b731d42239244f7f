//! Server-side bucket storage.
//!
//! A [`StorageBackend`] exposes the tree one path at a time. Buckets hold
//! exactly `Z` sealed envelopes of identical length, so the server cannot
//! tell real blocks from dummies or learn block ids.

mod cipher;
mod memory;

pub use cipher::{AeadCipher, Cipher, CipherKind, NullCipher, RECORD_HEADER_LEN};
pub use memory::{MemoryStore, SNAPSHOT_HEADER_LEN, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use crate::error::{Error, Result};
use crate::tree::TreeShape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Real(u64),
    Dummy,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub kind: BlockKind,
    pub payload: Vec<u8>,
}

impl Block {
    pub fn real(id: u64, payload: Vec<u8>) -> Self {
        Block { kind: BlockKind::Real(id), payload }
    }

    pub fn dummy(block_size: usize) -> Self {
        Block { kind: BlockKind::Dummy, payload: vec![0; block_size] }
    }
}

/// One server bucket: `Z` sealed envelopes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bucket {
    pub envelopes: Vec<Vec<u8>>,
}

/// Everything a backend needs to know about the byte layout of the tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoreLayout {
    pub shape: TreeShape,
    pub z: usize,
    pub block_size: usize,
    pub envelope_len: usize,
}

impl StoreLayout {
    pub fn new(shape: TreeShape, z: usize, block_size: usize, envelope_len: usize) -> Self {
        StoreLayout { shape, z, block_size, envelope_len }
    }

    pub fn bucket_bytes(&self) -> usize {
        self.z * self.envelope_len
    }

    /// Serialized size of one path, `(k+1)·Z·(B + overhead)`.
    pub fn path_bytes(&self) -> usize {
        self.shape.path_length_buckets * self.bucket_bytes()
    }

    pub fn check_leaf(&self, leaf: u64) -> Result<()> {
        if leaf >= self.shape.n() {
            return Err(Error::domain(format!("leaf {leaf} out of range [0, {})", self.shape.n())));
        }
        Ok(())
    }

    pub fn check_path(&self, buckets: &[Bucket]) -> Result<()> {
        if buckets.len() != self.shape.path_length_buckets {
            return Err(Error::Protocol(format!(
                "path has {} buckets, expected {}",
                buckets.len(),
                self.shape.path_length_buckets
            )));
        }
        for bucket in buckets {
            if bucket.envelopes.len() != self.z {
                return Err(Error::Protocol(format!(
                    "bucket has {} envelopes, expected {}",
                    bucket.envelopes.len(),
                    self.z
                )));
            }
            if let Some(bad) = bucket.envelopes.iter().find(|e| e.len() != self.envelope_len) {
                return Err(Error::Protocol(format!(
                    "envelope of {} bytes, expected {}",
                    bad.len(),
                    self.envelope_len
                )));
            }
        }
        Ok(())
    }

    /// Concatenate a path into its wire/snapshot byte form.
    pub fn encode_path(&self, buckets: &[Bucket]) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.path_bytes());
        for env in buckets.iter().flat_map(|b| &b.envelopes) {
            out.extend_from_slice(env);
        }
        out
    }

    pub fn decode_path(&self, bytes: &[u8]) -> Result<Vec<Bucket>> {
        if bytes.len() != self.path_bytes() {
            return Err(Error::Protocol(format!(
                "path body is {} bytes, expected {}",
                bytes.len(),
                self.path_bytes()
            )));
        }
        Ok(bytes
            .chunks_exact(self.bucket_bytes())
            .map(|chunk| Bucket { envelopes: chunk.chunks_exact(self.envelope_len).map(<[u8]>::to_vec).collect() })
            .collect())
    }
}

/// Path-granular access to the server tree.
pub trait StorageBackend {
    fn layout(&self) -> StoreLayout;

    /// Current envelopes of every bucket on `P(leaf)`, root first.
    fn read_path(&mut self, leaf: u64) -> Result<Vec<Bucket>>;

    /// Replace every bucket on `P(leaf)`.
    fn write_path(&mut self, leaf: u64, buckets: Vec<Bucket>) -> Result<()>;
}

impl<S: StorageBackend + ?Sized> StorageBackend for &mut S {
    fn layout(&self) -> StoreLayout {
        (**self).layout()
    }

    fn read_path(&mut self, leaf: u64) -> Result<Vec<Bucket>> {
        (**self).read_path(leaf)
    }

    fn write_path(&mut self, leaf: u64, buckets: Vec<Bucket>) -> Result<()> {
        (**self).write_path(leaf, buckets)
    }
}

impl<S: StorageBackend + ?Sized> StorageBackend for Box<S> {
    fn layout(&self) -> StoreLayout {
        (**self).layout()
    }

    fn read_path(&mut self, leaf: u64) -> Result<Vec<Bucket>> {
        (**self).read_path(leaf)
    }

    fn write_path(&mut self, leaf: u64, buckets: Vec<Bucket>) -> Result<()> {
        (**self).write_path(leaf, buckets)
    }
}
