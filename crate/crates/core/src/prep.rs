//! Client-side data preparation: split a blob into fixed-size chunksets,
//! zero-pad the tail, erasure-code each chunkset and commit to every chunk.
//!
//! Each chunk is committed by a Merkle tree whose leaves are its samples; the
//! blob root is a Merkle tree over all chunk roots in chunkset-major order.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecError, CodedChunk, CodingParams};
use crate::commitment::{CommitmentError, MerkleCommitment, MerkleTree};

pub const DEFAULT_CHUNKSET_SIZE: usize = 10 * 1024 * 1024;
pub const DEFAULT_SAMPLE_SIZE: usize = 1024;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("blob is empty")]
    EmptyBlob,
    #[error("chunkset size {size} must be a positive multiple of k * alpha = {granularity}")]
    ChunksetSize { size: usize, granularity: usize },
    #[error("sample size must be positive")]
    SampleSize,
    #[error("byte range {offset}+{length} exceeds blob length {original}")]
    Range {
        offset: u64,
        length: u64,
        original: u64,
    },
    #[error("chunkset {chunkset}: only {valid} chunks passed integrity checks, need {need}")]
    NotEnoughValidChunks {
        chunkset: usize,
        valid: usize,
        need: usize,
    },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Commitment(#[from] CommitmentError),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlobId(pub String);

impl fmt::Display for BlobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BlobId {
    fn from(s: &str) -> Self {
        BlobId(s.to_string())
    }
}

#[derive(Clone, Debug)]
pub struct Blob {
    pub id: BlobId,
    pub bytes: Vec<u8>,
    /// Paid storage duration in epochs.
    pub paid_duration: u64,
}

#[derive(Clone, Debug)]
pub struct PreparedChunkset {
    pub chunkset_index: usize,
    pub chunks: Vec<CodedChunk>,
    pub chunk_roots: Vec<MerkleCommitment>,
}

#[derive(Clone, Debug)]
pub struct PreparedBlob {
    pub blob_id: BlobId,
    pub params: CodingParams,
    pub chunkset_size: usize,
    pub sample_size: usize,
    pub chunksets: Vec<PreparedChunkset>,
    pub blob_root: MerkleCommitment,
    pub original_length: u64,
}

/// Everything about a prepared blob except chunk payloads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobManifest {
    pub schema_version: u32,
    pub blob_id: BlobId,
    pub params: CodingParams,
    pub chunkset_size: usize,
    pub sample_size: usize,
    pub original_length: u64,
    pub blob_root: MerkleCommitment,
    pub chunk_roots: Vec<Vec<MerkleCommitment>>,
}

impl BlobManifest {
    pub fn chunk_size(&self) -> usize {
        self.chunkset_size / self.params.k()
    }

    pub fn num_chunksets(&self) -> usize {
        self.chunk_roots.len()
    }
}

/// Commit a chunk's payload at sample granularity.
pub fn chunk_tree(payload: &[u8], sample_size: usize) -> Result<MerkleTree, CommitmentError> {
    MerkleTree::from_bytes(payload, sample_size)
}

/// Root over the ordered chunk roots of a blob.
pub fn blob_root_of(
    chunk_roots: &[Vec<MerkleCommitment>],
) -> Result<MerkleCommitment, CommitmentError> {
    let leaves: Vec<[u8; 32]> = chunk_roots.iter().flatten().map(|c| c.root).collect();
    Ok(MerkleTree::build(&leaves)?.commitment())
}

pub fn prepare(
    blob: &Blob,
    params: &CodingParams,
    chunkset_size: usize,
    sample_size: usize,
) -> Result<PreparedBlob, PrepError> {
    if blob.bytes.is_empty() {
        return Err(PrepError::EmptyBlob);
    }
    if sample_size == 0 {
        return Err(PrepError::SampleSize);
    }
    let granularity = params.k() * params.alpha();
    if chunkset_size == 0 || !chunkset_size.is_multiple_of(granularity) {
        return Err(PrepError::ChunksetSize {
            size: chunkset_size,
            granularity,
        });
    }

    let chunksets = blob
        .bytes
        .par_chunks(chunkset_size)
        .enumerate()
        .map(|(chunkset_index, piece)| {
            let mut padded = piece.to_vec();
            padded.resize(chunkset_size, 0);
            let chunks = codec::encode(&padded, params)?;
            let chunk_roots = chunks
                .iter()
                .map(|c| Ok(chunk_tree(&c.payload, sample_size)?.commitment()))
                .collect::<Result<Vec<_>, PrepError>>()?;
            Ok(PreparedChunkset {
                chunkset_index,
                chunks,
                chunk_roots,
            })
        })
        .collect::<Result<Vec<_>, PrepError>>()?;

    let roots: Vec<Vec<MerkleCommitment>> =
        chunksets.iter().map(|c| c.chunk_roots.clone()).collect();
    Ok(PreparedBlob {
        blob_id: blob.id.clone(),
        params: *params,
        chunkset_size,
        sample_size,
        blob_root: blob_root_of(&roots)?,
        chunksets,
        original_length: blob.bytes.len() as u64,
    })
}

impl PreparedBlob {
    pub fn manifest(&self) -> BlobManifest {
        BlobManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            blob_id: self.blob_id.clone(),
            params: self.params,
            chunkset_size: self.chunkset_size,
            sample_size: self.sample_size,
            original_length: self.original_length,
            blob_root: self.blob_root,
            chunk_roots: self
                .chunksets
                .iter()
                .map(|c| c.chunk_roots.clone())
                .collect(),
        }
    }

    pub fn chunk_size(&self) -> usize {
        self.chunkset_size / self.params.k()
    }

    pub fn samples_per_chunk(&self) -> usize {
        self.chunk_size().div_ceil(self.sample_size)
    }
}

/// Where a reader obtains chunks for a chunkset.
pub trait ChunkSource {
    fn fetch(&self, chunkset: usize) -> Vec<CodedChunk>;
}

/// Reads the first `k` chunks the prepared blob holds.
impl ChunkSource for PreparedBlob {
    fn fetch(&self, chunkset: usize) -> Vec<CodedChunk> {
        self.chunksets[chunkset].chunks[..self.params.k()].to_vec()
    }
}

#[derive(Debug, Default)]
pub struct ReadStats {
    pub chunksets_decoded: AtomicUsize,
    pub chunks_rejected: AtomicUsize,
}

impl ReadStats {
    pub fn decoded(&self) -> usize {
        self.chunksets_decoded.load(Ordering::Relaxed)
    }
    pub fn rejected(&self) -> usize {
        self.chunks_rejected.load(Ordering::Relaxed)
    }
}

/// Read `length` bytes at `offset`, decoding only the chunksets the range touches.
/// Chunks that do not match their committed root are discarded before decoding.
pub fn reassemble_from<S: ChunkSource + ?Sized>(
    manifest: &BlobManifest,
    source: &S,
    offset: u64,
    length: u64,
    stats: &ReadStats,
) -> Result<Vec<u8>, PrepError> {
    let end = offset
        .checked_add(length)
        .filter(|&e| e <= manifest.original_length);
    let Some(end) = end else {
        return Err(PrepError::Range {
            offset,
            length,
            original: manifest.original_length,
        });
    };
    if length == 0 {
        return Ok(Vec::new());
    }
    let cs = manifest.chunkset_size as u64;
    let first = (offset / cs) as usize;
    let last = ((end - 1) / cs) as usize;
    let k = manifest.params.k();

    let mut out = Vec::with_capacity(length as usize);
    for chunkset in first..=last {
        let roots = &manifest.chunk_roots[chunkset];
        let valid: Vec<CodedChunk> = source
            .fetch(chunkset)
            .into_iter()
            .filter(|c| {
                let ok = c.index < roots.len()
                    && chunk_tree(&c.payload, manifest.sample_size)
                        .map(|t| t.root() == roots[c.index].root)
                        .unwrap_or(false);
                if !ok {
                    stats.chunks_rejected.fetch_add(1, Ordering::Relaxed);
                }
                ok
            })
            .collect();
        if valid.len() < k {
            return Err(PrepError::NotEnoughValidChunks {
                chunkset,
                valid: valid.len(),
                need: k,
            });
        }
        let data = codec::decode(&valid, &manifest.params)?;
        stats.chunksets_decoded.fetch_add(1, Ordering::Relaxed);

        let base = chunkset as u64 * cs;
        let lo = offset.max(base) - base;
        let hi = end.min(base + cs) - base;
        out.extend_from_slice(&data[lo as usize..hi as usize]);
    }
    Ok(out)
}

pub fn reassemble(prepared: &PreparedBlob, offset: u64, length: u64) -> Result<Vec<u8>, PrepError> {
    reassemble_from(
        &prepared.manifest(),
        prepared,
        offset,
        length,
        &ReadStats::default(),
    )
}
