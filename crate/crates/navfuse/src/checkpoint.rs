//! Binary checkpoint: exact parameter bytes behind a checksum.
//!
//! ```text
//! "MFRA1"  u32 version
//! u32 len, config echo (UTF-8 key = value text)
//! u32 count, then per entry:
//!     u32 len, name   u32 rank   u64 dims[rank]   f64 values[prod(dims)]
//! [u8; 32] SHA-256 of every preceding byte
//! ```
//! Integers and floats are little-endian.

use std::path::Path;

use sha2::{Digest, Sha256};

use navfuse_core::agent::Agent;
use navfuse_core::numerics::Tensor;
use navfuse_core::params::ParamStore;
use navfuse_core::world::ConceptVocabulary;

use crate::config::RunConfig;
use crate::error::{self, Error, Result};

pub const MAGIC: &[u8; 5] = b"MFRA1";
pub const VERSION: u32 = 1;
const DIGEST: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: Vec<(String, Tensor)>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

/// Bytes from the first parameter entry up to the checksum.
fn encode_entries(store: &ParamStore, out: &mut Vec<u8>) {
    put_u32(out, store.len());
    for e in store.entries() {
        put_str(out, &e.name);
        put_u32(out, e.value.shape().len());
        for &d in e.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in e.value.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub fn encode(config: &RunConfig, store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, &config.render());
    encode_entries(store, &mut out);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
}

/// Checks magic, version and checksum; returns the body without the digest.
fn verified(bytes: &[u8]) -> Result<&[u8]> {
    if bytes.len() < MAGIC.len() + 4 + DIGEST || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Format("checkpoint checksum mismatch".into()));
    }
    let version = u32::from_le_bytes(body[MAGIC.len()..MAGIC.len() + 4].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    Ok(body)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let body = verified(bytes)?;
    let mut r = Reader {
        bytes: body,
        at: MAGIC.len() + 4,
    };
    let config = RunConfig::parse(r.str()?)?;
    let count = r.u32()?;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.str()?.to_string();
        let rank = r.u32()?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64()?).map_err(|_| Error::Format("dimension overflow".into()))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("dimension overflow".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push((name, Tensor::new(shape, data)?));
    }
    if r.at != body.len() {
        return Err(Error::Format("trailing bytes after the last parameter".into()));
    }
    Ok(Checkpoint { config, params })
}

/// The parameter section alone, for comparing checkpoints whose headers differ.
pub fn payload(bytes: &[u8]) -> Result<&[u8]> {
    let body = verified(bytes)?;
    let mut r = Reader {
        bytes: body,
        at: MAGIC.len() + 4,
    };
    r.str()?;
    Ok(&body[r.at..])
}

pub fn checksum_hex(bytes: &[u8]) -> String {
    let tail = &bytes[bytes.len().saturating_sub(DIGEST)..];
    tail.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    /// Rebuilds the agent for `vocab` and installs the stored parameters.
    pub fn into_agent(self, vocab: &ConceptVocabulary) -> Result<Agent> {
        let mut agent = Agent::new(self.config.model.clone(), vocab);
        agent.store.load_values(self.params)?;
        Ok(agent)
    }
}

pub fn save(path: &Path, config: &RunConfig, store: &ParamStore) -> Result<Vec<u8>> {
    let bytes = encode(config, store);
    error::write(path, &bytes)?;
    Ok(bytes)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    decode(&error::read(path)?)
}
