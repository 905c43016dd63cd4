//! Erasure coding over GF(2^8): a systematic Reed-Solomon baseline and Clay
//! codes with bandwidth-optimal single-node repair.
//!
//! Both schemes are systematic, so the first `k` chunks of a chunkset are the
//! data stripes verbatim. Clay chunks are laid out as `alpha` consecutive
//! sub-chunks, one per layer.

pub mod clay;
pub mod gf;
pub mod matrix;
pub mod mds;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clay::ClayCode;
pub use gf::{gf_mul, Gf};
use mds::MdsCode;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid coding parameters: {0}")]
    InvalidParams(String),
    #[error("insufficient shards: have {have}, need {need}")]
    InsufficientShards { have: usize, need: usize },
    #[error("chunk format error: {0}")]
    Format(String),
    #[error("chunk {index} is irrecoverable: {reason}")]
    Irrecoverable { index: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ReedSolomon,
    Clay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct CodingParams {
    k: usize,
    m: usize,
    d: usize,
    alpha: usize,
    scheme: Scheme,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    k: usize,
    m: usize,
    #[serde(default)]
    d: Option<usize>,
    scheme: Scheme,
}

impl TryFrom<RawParams> for CodingParams {
    type Error = CodecError;
    fn try_from(raw: RawParams) -> Result<Self, CodecError> {
        match raw.scheme {
            Scheme::ReedSolomon => CodingParams::reed_solomon(raw.k, raw.m),
            Scheme::Clay => CodingParams::clay(raw.k, raw.m, raw.d.unwrap_or(raw.k + raw.m - 1)),
        }
    }
}

impl From<CodingParams> for RawParams {
    fn from(p: CodingParams) -> Self {
        RawParams {
            k: p.k,
            m: p.m,
            d: Some(p.d),
            scheme: p.scheme,
        }
    }
}

impl CodingParams {
    pub fn reed_solomon(k: usize, m: usize) -> Result<Self, CodecError> {
        MdsCode::new(k, k + m)?;
        Ok(CodingParams {
            k,
            m,
            d: k,
            alpha: 1,
            scheme: Scheme::ReedSolomon,
        })
    }

    pub fn clay(k: usize, m: usize, d: usize) -> Result<Self, CodecError> {
        let code = ClayCode::new(k, m, d)?;
        Ok(CodingParams {
            k,
            m,
            d,
            alpha: code.alpha(),
            scheme: Scheme::Clay,
        })
    }

    /// (4, 2, d=5) Clay.
    pub fn clay_small() -> Self {
        Self::clay(4, 2, 5).expect("valid default")
    }

    /// (8, 4, d=11) Clay.
    pub fn clay_large() -> Self {
        Self::clay(8, 4, 11).expect("valid default")
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n(&self) -> usize {
        self.k + self.m
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn alpha(&self) -> usize {
        self.alpha
    }
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Chunk sizes must be a whole number of sub-chunks.
    pub fn check_chunk_size(&self, chunk_size: usize) -> Result<(), CodecError> {
        if chunk_size == 0 || !chunk_size.is_multiple_of(self.alpha) {
            return Err(CodecError::InvalidParams(format!(
                "chunk size {chunk_size} must be a positive multiple of alpha={}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Bytes an MSR repair downloads for a chunkset of `payload` bytes:
    /// `d * B / (k * (d - k + 1))`. Equals `B` for Reed-Solomon.
    pub fn msr_repair_bytes(&self, payload: usize) -> usize {
        match self.scheme {
            Scheme::ReedSolomon => payload,
            Scheme::Clay => self.d * payload / (self.k * (self.d - self.k + 1)),
        }
    }
}

/// One erasure-coded output of a chunkset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodedChunk {
    pub index: usize,
    pub payload: Vec<u8>,
    /// Number of layers (sub-chunks) the payload is split into.
    pub alpha: usize,
}

impl CodedChunk {
    pub fn sub_chunk_len(&self) -> usize {
        self.payload.len() / self.alpha
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairPath {
    Optimal,
    MdsFallback,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairReport {
    pub repaired_index: usize,
    pub bytes_downloaded: usize,
    pub helpers_used: Vec<usize>,
    pub rs_equivalent_bytes: usize,
    pub path: RepairPath,
}

/// Encode `data` (exactly `k * chunk_size` bytes) into `n` chunks.
pub fn encode(data: &[u8], params: &CodingParams) -> Result<Vec<CodedChunk>, CodecError> {
    let k = params.k;
    if !data.len().is_multiple_of(k) {
        return Err(CodecError::InvalidParams(format!(
            "data length {} is not a multiple of k={k}",
            data.len()
        )));
    }
    let chunk_size = data.len() / k;
    params.check_chunk_size(chunk_size)?;

    let payloads = match params.scheme {
        Scheme::ReedSolomon => {
            let code = MdsCode::new(k, params.n())?;
            let stripes: Vec<&[u8]> = data.chunks(chunk_size).collect();
            let mut parity = vec![vec![0u8; chunk_size]; params.m];
            code.encode_parity(&stripes, &mut parity);
            stripes
                .iter()
                .map(|s| s.to_vec())
                .chain(parity)
                .collect::<Vec<_>>()
        }
        Scheme::Clay => {
            let code = ClayCode::new(k, params.m, params.d)?;
            let mut slots: Vec<Option<Vec<u8>>> = data
                .chunks(chunk_size)
                .map(|s| Some(s.to_vec()))
                .chain(std::iter::repeat_n(None, params.m))
                .collect();
            code.decode_erasures(&mut slots)?;
            slots.into_iter().map(|s| s.expect("filled")).collect()
        }
    };

    Ok(payloads
        .into_iter()
        .enumerate()
        .map(|(index, payload)| CodedChunk {
            index,
            payload,
            alpha: params.alpha,
        })
        .collect())
}

fn collect_distinct<'a>(
    chunks: impl IntoIterator<Item = &'a CodedChunk>,
    params: &CodingParams,
) -> Result<(BTreeMap<usize, &'a CodedChunk>, usize), CodecError> {
    let mut by_index = BTreeMap::new();
    let mut size = None;
    for c in chunks {
        if c.index >= params.n() {
            return Err(CodecError::Format(format!(
                "chunk index {} out of range for n={}",
                c.index,
                params.n()
            )));
        }
        match size {
            None => size = Some(c.payload.len()),
            Some(s) if s != c.payload.len() => {
                return Err(CodecError::Format(format!(
                    "inconsistent chunk sizes: {s} vs {}",
                    c.payload.len()
                )))
            }
            _ => {}
        }
        by_index.entry(c.index).or_insert(c);
    }
    let size = size.unwrap_or(0);
    if !by_index.is_empty() {
        params
            .check_chunk_size(size)
            .map_err(|e| CodecError::Format(e.to_string()))?;
    }
    Ok((by_index, size))
}

/// Recover the original `k * chunk_size` bytes from any `k` distinct chunks.
pub fn decode(chunks: &[CodedChunk], params: &CodingParams) -> Result<Vec<u8>, CodecError> {
    let (by_index, chunk_size) = collect_distinct(chunks, params)?;
    let k = params.k;
    if by_index.len() < k {
        return Err(CodecError::InsufficientShards {
            have: by_index.len(),
            need: k,
        });
    }
    if (0..k).all(|i| by_index.contains_key(&i)) {
        return Ok((0..k)
            .flat_map(|i| by_index[&i].payload.iter().copied())
            .collect());
    }

    match params.scheme {
        Scheme::ReedSolomon => {
            let code = MdsCode::new(k, params.n())?;
            let known: Vec<usize> = by_index.keys().copied().take(k).collect();
            let wanted: Vec<usize> = (0..k).filter(|i| !by_index.contains_key(i)).collect();
            let plan = code.plan(&known, &wanted)?;
            let inputs: Vec<&[u8]> = known
                .iter()
                .map(|i| by_index[i].payload.as_slice())
                .collect();
            let mut recovered = vec![vec![0u8; chunk_size]; wanted.len()];
            {
                let mut outs: Vec<&mut [u8]> =
                    recovered.iter_mut().map(Vec::as_mut_slice).collect();
                plan.apply(&inputs, &mut outs);
            }
            let mut out = Vec::with_capacity(k * chunk_size);
            let mut rec = wanted
                .iter()
                .zip(recovered.iter())
                .collect::<BTreeMap<_, _>>();
            for i in 0..k {
                match by_index.get(&i) {
                    Some(c) => out.extend_from_slice(&c.payload),
                    None => out.extend_from_slice(rec.remove(&i).expect("recovered")),
                }
            }
            Ok(out)
        }
        Scheme::Clay => {
            let code = ClayCode::new(k, params.m, params.d)?;
            let mut slots: Vec<Option<Vec<u8>>> = (0..params.n())
                .map(|i| by_index.get(&i).map(|c| c.payload.clone()))
                .collect();
            code.decode_erasures(&mut slots)?;
            Ok(slots
                .into_iter()
                .take(k)
                .flat_map(|s| s.expect("decoded"))
                .collect())
        }
    }
}

/// Rebuild chunk `lost_index` from surviving `helpers`.
///
/// Clay uses the bandwidth-optimal path when all `d = n - 1` survivors are
/// supplied; otherwise (and always for Reed-Solomon) it falls back to reading
/// `k` whole chunks, decoding, and re-encoding.
pub fn repair(
    lost_index: usize,
    helpers: &[CodedChunk],
    params: &CodingParams,
) -> Result<(CodedChunk, RepairReport), CodecError> {
    if lost_index >= params.n() {
        return Err(CodecError::InvalidParams(format!(
            "lost index {lost_index} out of range for n={}",
            params.n()
        )));
    }
    let (by_index, chunk_size) =
        collect_distinct(helpers.iter().filter(|c| c.index != lost_index), params)?;
    let rs_equivalent_bytes = params.k * chunk_size;

    if params.scheme == Scheme::Clay && by_index.len() >= params.d {
        let code = ClayCode::new(params.k, params.m, params.d)?;
        let sub = chunk_size / params.alpha;
        let mut downloaded = 0usize;
        let payload = code.repair_optimal(lost_index, sub, |node, z| {
            downloaded += sub;
            let helper: &CodedChunk = by_index[&node];
            &helper.payload[z * sub..(z + 1) * sub]
        });
        let report = RepairReport {
            repaired_index: lost_index,
            bytes_downloaded: downloaded,
            helpers_used: by_index.keys().copied().collect(),
            rs_equivalent_bytes,
            path: RepairPath::Optimal,
        };
        return Ok((
            CodedChunk {
                index: lost_index,
                payload,
                alpha: params.alpha,
            },
            report,
        ));
    }

    if by_index.len() < params.k {
        return Err(CodecError::Irrecoverable {
            index: lost_index,
            reason: format!(
                "{} helpers supplied, need {} for MDS fallback",
                by_index.len(),
                params.k
            ),
        });
    }
    let chosen: Vec<CodedChunk> = by_index
        .values()
        .take(params.k)
        .map(|c| (*c).clone())
        .collect();
    let data = decode(&chosen, params)?;
    let mut all = encode(&data, params)?;
    let rebuilt = all.swap_remove(lost_index);
    let report = RepairReport {
        repaired_index: lost_index,
        bytes_downloaded: chosen.iter().map(|c| c.payload.len()).sum(),
        helpers_used: chosen.iter().map(|c| c.index).collect(),
        rs_equivalent_bytes,
        path: RepairPath::MdsFallback,
    };
    Ok((rebuilt, report))
}
