//! Merkle vector commitments over fixed-width leaves.
//!
//! Leaves hash as `SHA-256(0x00 || leaf)` and interior nodes as
//! `SHA-256(0x01 || left || right)`. A layer with an odd node count pairs its
//! last node with itself.
//!
//! Proof wire format (all integers big-endian):
//!
//! ```text
//! u64 leaf_index | u32 leaf_len | leaf bytes | u32 path_len | path_len * (u8 side | [u8; 32] sibling)
//! ```
//!
//! `side` is 0 when the sibling sits to the right of the running hash and 1
//! when it sits to the left.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type Hash = [u8; 32];

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommitmentError {
    #[error("cannot commit to an empty leaf list")]
    Empty,
    #[error("leaf {index} is {len} bytes, wider than the {width}-byte leaf width")]
    LeafTooWide {
        index: usize,
        len: usize,
        width: usize,
    },
    #[error("leaf index {index} out of range for {count} leaves")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("malformed proof encoding: {0}")]
    Malformed(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MerkleCommitment {
    #[serde(with = "hex_hash")]
    pub root: Hash,
    pub leaf_count: usize,
    pub leaf_width: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Sibling is the right-hand input.
    Right = 0,
    /// Sibling is the left-hand input.
    Left = 1,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionProof {
    pub leaf_index: usize,
    pub leaf_bytes: Vec<u8>,
    pub path: Vec<(Hash, Side)>,
}

pub fn hash_leaf(leaf: &[u8]) -> Hash {
    let mut h = Sha256::new();
    h.update([LEAF_PREFIX]);
    h.update(leaf);
    h.finalize().into()
}

pub fn hash_node(left: &Hash, right: &Hash) -> Hash {
    let mut h = Sha256::new();
    h.update([NODE_PREFIX]);
    h.update(left);
    h.update(right);
    h.finalize().into()
}

/// Number of levels between a leaf and the root.
pub fn depth(leaf_count: usize) -> usize {
    if leaf_count <= 1 {
        0
    } else {
        (usize::BITS - (leaf_count - 1).leading_zeros()) as usize
    }
}

/// A fully materialized tree; keeps every layer so openings are O(log n).
#[derive(Clone, Debug)]
pub struct MerkleTree {
    leaves: Vec<Vec<u8>>,
    layers: Vec<Vec<Hash>>,
    leaf_width: usize,
}

impl MerkleTree {
    /// Build from leaves. The widest leaf sets the width; shorter leaves are
    /// zero-padded. Intended for a short final leaf.
    pub fn build<L: AsRef<[u8]>>(leaves: &[L]) -> Result<Self, CommitmentError> {
        let width = leaves
            .iter()
            .map(|l| l.as_ref().len())
            .max()
            .ok_or(CommitmentError::Empty)?;
        Self::build_with_width(leaves, width)
    }

    pub fn build_with_width<L: AsRef<[u8]>>(
        leaves: &[L],
        width: usize,
    ) -> Result<Self, CommitmentError> {
        if leaves.is_empty() {
            return Err(CommitmentError::Empty);
        }
        let mut padded = Vec::with_capacity(leaves.len());
        for (index, leaf) in leaves.iter().enumerate() {
            let leaf = leaf.as_ref();
            if leaf.len() > width {
                return Err(CommitmentError::LeafTooWide {
                    index,
                    len: leaf.len(),
                    width,
                });
            }
            let mut v = leaf.to_vec();
            v.resize(width, 0);
            padded.push(v);
        }
        let mut layers = vec![padded.iter().map(|l| hash_leaf(l)).collect::<Vec<_>>()];
        while layers.last().map_or(0, Vec::len) > 1 {
            let prev = layers.last().expect("non-empty");
            let next = prev
                .chunks(2)
                .map(|pair| hash_node(&pair[0], pair.get(1).unwrap_or(&pair[0])))
                .collect();
            layers.push(next);
        }
        Ok(MerkleTree {
            leaves: padded,
            layers,
            leaf_width: width,
        })
    }

    /// Split `data` into `leaf_width` leaves (last one zero-padded).
    pub fn from_bytes(data: &[u8], leaf_width: usize) -> Result<Self, CommitmentError> {
        let leaves: Vec<&[u8]> = data.chunks(leaf_width.max(1)).collect();
        Self::build_with_width(&leaves, leaf_width)
    }

    pub fn root(&self) -> Hash {
        self.layers.last().expect("at least one layer")[0]
    }

    pub fn commitment(&self) -> MerkleCommitment {
        MerkleCommitment {
            root: self.root(),
            leaf_count: self.leaves.len(),
            leaf_width: self.leaf_width,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf(&self, index: usize) -> Option<&[u8]> {
        self.leaves.get(index).map(Vec::as_slice)
    }

    pub fn open(&self, index: usize) -> Result<InclusionProof, CommitmentError> {
        if index >= self.leaves.len() {
            return Err(CommitmentError::IndexOutOfRange {
                index,
                count: self.leaves.len(),
            });
        }
        let mut path = Vec::with_capacity(self.layers.len() - 1);
        let mut pos = index;
        for layer in &self.layers[..self.layers.len() - 1] {
            if pos.is_multiple_of(2) {
                path.push((*layer.get(pos + 1).unwrap_or(&layer[pos]), Side::Right));
            } else {
                path.push((layer[pos - 1], Side::Left));
            }
            pos /= 2;
        }
        Ok(InclusionProof {
            leaf_index: index,
            leaf_bytes: self.leaves[index].clone(),
            path,
        })
    }
}

pub fn commit<L: AsRef<[u8]>>(leaves: &[L]) -> Result<MerkleCommitment, CommitmentError> {
    Ok(MerkleTree::build(leaves)?.commitment())
}

pub fn open<L: AsRef<[u8]>>(leaves: &[L], index: usize) -> Result<InclusionProof, CommitmentError> {
    MerkleTree::build(leaves)?.open(index)
}

/// True iff the proof opens `commitment` at `proof.leaf_index`.
pub fn verify(commitment: &MerkleCommitment, proof: &InclusionProof) -> bool {
    if proof.leaf_index >= commitment.leaf_count
        || proof.leaf_bytes.len() != commitment.leaf_width
        || proof.path.len() != depth(commitment.leaf_count)
    {
        return false;
    }
    let mut acc = hash_leaf(&proof.leaf_bytes);
    for (level, (sibling, side)) in proof.path.iter().enumerate() {
        // Sides must spell out the claimed index.
        let bit = (proof.leaf_index >> level) & 1;
        acc = match (side, bit) {
            (Side::Right, 0) => hash_node(&acc, sibling),
            (Side::Left, 1) => hash_node(sibling, &acc),
            _ => return false,
        };
    }
    acc == commitment.root
}

impl InclusionProof {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.leaf_bytes.len() + self.path.len() * 33);
        out.extend_from_slice(&(self.leaf_index as u64).to_be_bytes());
        out.extend_from_slice(&(self.leaf_bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.leaf_bytes);
        out.extend_from_slice(&(self.path.len() as u32).to_be_bytes());
        for (hash, side) in &self.path {
            out.push(*side as u8);
            out.extend_from_slice(hash);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CommitmentError> {
        let mut rest = bytes;
        let mut take = |n: usize| -> Result<&[u8], CommitmentError> {
            if rest.len() < n {
                return Err(CommitmentError::Malformed("truncated"));
            }
            let (head, tail) = rest.split_at(n);
            rest = tail;
            Ok(head)
        };
        let leaf_index = u64::from_be_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let leaf_len = u32::from_be_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let leaf_bytes = take(leaf_len)?.to_vec();
        let path_len = u32::from_be_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let mut path = Vec::with_capacity(path_len.min(64));
        for _ in 0..path_len {
            let side = match take(1)?[0] {
                0 => Side::Right,
                1 => Side::Left,
                _ => return Err(CommitmentError::Malformed("side byte must be 0 or 1")),
            };
            let hash: Hash = take(32)?.try_into().expect("32 bytes");
            path.push((hash, side));
        }
        if !rest.is_empty() {
            return Err(CommitmentError::Malformed("trailing bytes"));
        }
        Ok(InclusionProof {
            leaf_index,
            leaf_bytes,
            path,
        })
    }
}

pub(crate) mod hex_hash {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(h: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_hex(h))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex characters"))
    }

    pub fn to_hex(h: &[u8]) -> String {
        h.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<[u8; 32]> {
        if s.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(s.get(2 * i..2 * i + 2)?, 16).ok()?;
        }
        Some(out)
    }
}

pub use hex_hash::to_hex;
