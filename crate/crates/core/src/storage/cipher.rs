use chacha20poly1305::aead::{AeadInPlace, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{Block, BlockKind};
use crate::error::{Error, Result};

/// Plaintext record header: kind byte plus little-endian block id.
pub const RECORD_HEADER_LEN: usize = 9;

const KIND_DUMMY: u8 = 0;
const KIND_REAL: u8 = 1;
const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;

/// Seals blocks into fixed-length envelopes and opens them again.
///
/// Every envelope produced for a given block size has the same length
/// whatever the block kind.
pub trait Cipher: Send {
    /// Envelope length minus payload length.
    fn overhead(&self) -> usize;

    fn seal(&mut self, block: &Block) -> Vec<u8>;

    fn open(&self, envelope: &[u8]) -> Result<Block>;

    fn envelope_len(&self, block_size: usize) -> usize {
        block_size + self.overhead()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CipherKind {
    /// Identity transform, for simulation and deterministic tests.
    Null,
    /// ChaCha20-Poly1305 with counter nonces.
    Aead,
}

impl CipherKind {
    /// Build a cipher whose key is derived from `seed`.
    pub fn build(self, seed: u64) -> Box<dyn Cipher> {
        match self {
            CipherKind::Null => Box::new(NullCipher),
            CipherKind::Aead => Box::new(AeadCipher::from_seed(seed)),
        }
    }
}

impl std::str::FromStr for CipherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "null" => Ok(CipherKind::Null),
            "aead" | "chacha20poly1305" => Ok(CipherKind::Aead),
            other => Err(Error::domain(format!("unknown cipher {other:?}"))),
        }
    }
}

fn encode_record(block: &Block, out: &mut Vec<u8>) {
    match block.kind {
        BlockKind::Dummy => {
            out.push(KIND_DUMMY);
            out.extend_from_slice(&0u64.to_le_bytes());
        }
        BlockKind::Real(id) => {
            out.push(KIND_REAL);
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
    out.extend_from_slice(&block.payload);
}

fn decode_record(record: &[u8]) -> Result<Block> {
    if record.len() < RECORD_HEADER_LEN {
        return Err(Error::Protocol(format!("record of {} bytes is shorter than its header", record.len())));
    }
    let id = u64::from_le_bytes(record[1..RECORD_HEADER_LEN].try_into().expect("8 bytes"));
    let kind = match record[0] {
        KIND_DUMMY => BlockKind::Dummy,
        KIND_REAL => BlockKind::Real(id),
        other => return Err(Error::Protocol(format!("unknown block kind byte {other}"))),
    };
    Ok(Block { kind, payload: record[RECORD_HEADER_LEN..].to_vec() })
}

/// Envelope is the plaintext record: header ‖ payload.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullCipher;

impl Cipher for NullCipher {
    fn overhead(&self) -> usize {
        RECORD_HEADER_LEN
    }

    fn seal(&mut self, block: &Block) -> Vec<u8> {
        let mut out = Vec::with_capacity(RECORD_HEADER_LEN + block.payload.len());
        encode_record(block, &mut out);
        out
    }

    fn open(&self, envelope: &[u8]) -> Result<Block> {
        decode_record(envelope)
    }
}

/// Envelope layout: nonce (12) ‖ ciphertext of the record ‖ tag (16).
///
/// Nonces are a per-instance random 32-bit prefix followed by a 64-bit
/// counter, so no nonce repeats under one key.
pub struct AeadCipher {
    aead: ChaCha20Poly1305,
    nonce_prefix: [u8; 4],
    counter: u64,
}

impl AeadCipher {
    pub fn new(key: [u8; 32], nonce_prefix: [u8; 4]) -> Self {
        AeadCipher { aead: ChaCha20Poly1305::new(Key::from_slice(&key)), nonce_prefix, counter: 0 }
    }

    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x6b65_795f_6465_7269);
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        let mut prefix = [0u8; 4];
        rng.fill_bytes(&mut prefix);
        Self::new(key, prefix)
    }

    fn next_nonce(&mut self) -> [u8; NONCE_LEN] {
        let mut nonce = [0u8; NONCE_LEN];
        nonce[..4].copy_from_slice(&self.nonce_prefix);
        nonce[4..].copy_from_slice(&self.counter.to_le_bytes());
        self.counter = self.counter.checked_add(1).expect("nonce counter exhausted");
        nonce
    }
}

impl Cipher for AeadCipher {
    fn overhead(&self) -> usize {
        NONCE_LEN + RECORD_HEADER_LEN + TAG_LEN
    }

    fn seal(&mut self, block: &Block) -> Vec<u8> {
        let nonce = self.next_nonce();
        let mut out = Vec::with_capacity(self.overhead() + block.payload.len());
        out.extend_from_slice(&nonce);
        encode_record(block, &mut out);
        let tag = self
            .aead
            .encrypt_in_place_detached(Nonce::from_slice(&nonce), b"", &mut out[NONCE_LEN..])
            .expect("record length is far below the AEAD limit");
        out.extend_from_slice(&tag);
        out
    }

    fn open(&self, envelope: &[u8]) -> Result<Block> {
        if envelope.len() < self.overhead() {
            return Err(Error::Authentication);
        }
        let (nonce, rest) = envelope.split_at(NONCE_LEN);
        let (body, tag) = rest.split_at(rest.len() - TAG_LEN);
        let mut record = body.to_vec();
        self.aead
            .decrypt_in_place_detached(Nonce::from_slice(nonce), b"", &mut record, Tag::from_slice(tag))
            .map_err(|_| Error::Authentication)?;
        decode_record(&record)
    }
}
