use std::io::{Read, Write};

use super::{Bucket, Cipher, StorageBackend, StoreLayout};
use crate::error::{Error, Result};
use crate::tree::TreeShape;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"RORM";
pub const SNAPSHOT_VERSION: u16 = 1;
/// magic(4) version(2) L(1) k(1) Z(2) B(4)
pub const SNAPSHOT_HEADER_LEN: usize = 14;

/// In-process bucket store, indexed by bucket id.
#[derive(Clone, Debug)]
pub struct MemoryStore {
    layout: StoreLayout,
    buckets: Option<Vec<Bucket>>,
    reads: u64,
    writes: u64,
}

impl MemoryStore {
    /// An unformatted store. Every access fails until [`MemoryStore::format`].
    pub fn new(layout: StoreLayout) -> Self {
        MemoryStore { layout, buckets: None, reads: 0, writes: 0 }
    }

    /// Fill every bucket with freshly sealed dummy blocks.
    pub fn format(&mut self, cipher: &mut dyn Cipher) {
        let dummy = super::Block::dummy(self.layout.block_size);
        let buckets = (0..self.layout.shape.total_buckets)
            .map(|_| Bucket { envelopes: (0..self.layout.z).map(|_| cipher.seal(&dummy)).collect() })
            .collect();
        self.buckets = Some(buckets);
    }

    pub fn formatted(layout: StoreLayout, cipher: &mut dyn Cipher) -> Self {
        let mut store = Self::new(layout);
        store.format(cipher);
        store
    }

    pub fn is_initialized(&self) -> bool {
        self.buckets.is_some()
    }

    /// All buckets in index order.
    pub fn buckets(&self) -> Result<&[Bucket]> {
        self.buckets.as_deref().ok_or(Error::Uninitialized)
    }

    pub fn path_reads(&self) -> u64 {
        self.reads
    }

    pub fn path_writes(&self) -> u64 {
        self.writes
    }

    /// Write the snapshot format: little-endian header then every bucket in
    /// index order.
    pub fn save_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        let buckets = self.buckets()?;
        let shape = self.layout.shape;
        let narrow = |v: u64, what: &str, max: u64| {
            if v > max {
                Err(Error::domain(format!("{what}={v} does not fit the snapshot header")))
            } else {
                Ok(v)
            }
        };
        let mut header = Vec::with_capacity(SNAPSHOT_HEADER_LEN);
        header.extend_from_slice(&SNAPSHOT_MAGIC);
        header.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        header.push(shape.levels() as u8);
        header.push(shape.k() as u8);
        header.extend_from_slice(&(narrow(self.layout.z as u64, "Z", u16::MAX as u64)? as u16).to_le_bytes());
        header.extend_from_slice(&(narrow(self.layout.block_size as u64, "B", u32::MAX as u64)? as u32).to_le_bytes());
        out.write_all(&header)?;
        for env in buckets.iter().flat_map(|b| &b.envelopes) {
            out.write_all(env)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Read a snapshot. The envelope length is recovered from the body size.
    pub fn load_snapshot<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; SNAPSHOT_HEADER_LEN];
        input.read_exact(&mut header)?;
        if header[..4] != SNAPSHOT_MAGIC {
            return Err(Error::Protocol("snapshot magic mismatch".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != SNAPSHOT_VERSION {
            return Err(Error::Protocol(format!("unsupported snapshot version {version}")));
        }
        let levels = header[6] as u32;
        let k = header[7] as u32;
        let z = u16::from_le_bytes([header[8], header[9]]) as usize;
        let block_size = u32::from_le_bytes(header[10..14].try_into().expect("4 bytes")) as usize;
        let shape = TreeShape::new(levels, k)?;
        if z == 0 || block_size == 0 {
            return Err(Error::Protocol("snapshot has Z or B of zero".into()));
        }
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        let slots = shape.total_buckets as usize * z;
        if body.is_empty() || body.len() % slots != 0 {
            return Err(Error::Protocol(format!(
                "snapshot body of {} bytes is not a whole number of {slots} envelopes",
                body.len()
            )));
        }
        let envelope_len = body.len() / slots;
        if envelope_len < block_size {
            return Err(Error::Protocol("snapshot envelopes shorter than the block size".into()));
        }
        let layout = StoreLayout::new(shape, z, block_size, envelope_len);
        let buckets = body
            .chunks_exact(layout.bucket_bytes())
            .map(|chunk| Bucket { envelopes: chunk.chunks_exact(envelope_len).map(<[u8]>::to_vec).collect() })
            .collect();
        Ok(MemoryStore { layout, buckets: Some(buckets), reads: 0, writes: 0 })
    }
}

impl StorageBackend for MemoryStore {
    fn layout(&self) -> StoreLayout {
        self.layout
    }

    fn read_path(&mut self, leaf: u64) -> Result<Vec<Bucket>> {
        self.layout.check_leaf(leaf)?;
        let path = self.layout.shape.path_buckets(leaf)?;
        let buckets = self.buckets.as_ref().ok_or(Error::Uninitialized)?;
        self.reads += 1;
        Ok(path.iter().map(|id| buckets[id.index as usize].clone()).collect())
    }

    fn write_path(&mut self, leaf: u64, new: Vec<Bucket>) -> Result<()> {
        self.layout.check_leaf(leaf)?;
        self.layout.check_path(&new)?;
        let path = self.layout.shape.path_buckets(leaf)?;
        let buckets = self.buckets.as_mut().ok_or(Error::Uninitialized)?;
        for (id, bucket) in path.iter().zip(new) {
            buckets[id.index as usize] = bucket;
        }
        self.writes += 1;
        Ok(())
    }
}
