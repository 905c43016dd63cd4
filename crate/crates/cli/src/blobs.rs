use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use hotstore_core::codec::{CodedChunk, CodingParams};
use hotstore_core::commitment::to_hex;
use hotstore_core::prep::{self, Blob, BlobId, BlobManifest, ChunkSource, ReadStats};

use crate::output::{ensure_dir, write_json};
use crate::Verdict;

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// File to encode.
    pub input: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// `reed_solomon` or `clay`.
    #[arg(long, default_value = "clay")]
    pub scheme: String,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Clay helper count; defaults to k + m - 1.
    #[arg(long)]
    pub d: Option<usize>,
    /// Bytes per chunk.
    #[arg(long, default_value_t = 64 * 1024)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = 1024)]
    pub sample_size: usize,
    /// Blob identifier; defaults to the file name.
    #[arg(long)]
    pub blob_id: Option<String>,
    /// Paid storage duration in epochs.
    #[arg(long, default_value_t = 30)]
    pub duration: u64,
}

#[derive(Args, Debug)]
pub struct ReassembleArgs {
    /// Directory written by `prepare`.
    pub dir: PathBuf,
    /// Where to write the recovered bytes.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub offset: u64,
    /// Bytes to read; defaults to the rest of the blob.
    #[arg(long)]
    pub length: Option<u64>,
}

fn chunk_path(dir: &Path, chunkset: usize, index: usize) -> PathBuf {
    dir.join("chunks")
        .join(format!("cs{chunkset:06}_c{index:03}.bin"))
}

pub fn prepare(a: PrepareArgs) -> Result<Verdict> {
    let params = match a.scheme.as_str() {
        "reed_solomon" => CodingParams::reed_solomon(a.k, a.m)?,
        "clay" => CodingParams::clay(a.k, a.m, a.d.unwrap_or(a.k + a.m - 1))?,
        other => bail!("unknown scheme {other:?}"),
    };
    params.check_chunk_size(a.chunk_size)?;
    let bytes = fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let id = a.blob_id.unwrap_or_else(|| {
        a.input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "blob".into())
    });
    let blob = Blob {
        id: BlobId(id),
        bytes,
        paid_duration: a.duration,
    };
    let prepared = prep::prepare(&blob, &params, a.chunk_size * params.k(), a.sample_size)?;
    ensure_dir(&a.out.join("chunks"))?;
    for cs in &prepared.chunksets {
        for c in &cs.chunks {
            let path = chunk_path(&a.out, cs.chunkset_index, c.index);
            fs::write(&path, &c.payload).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    let manifest = prepared.manifest();
    write_json(&a.out.join("manifest.json"), &manifest)?;
    println!(
        "prepared {} bytes into {} chunksets of {} chunks; blob root {}",
        manifest.original_length,
        manifest.num_chunksets(),
        params.n(),
        to_hex(&manifest.blob_root.root)
    );
    Ok(Verdict::Pass)
}

/// Chunks found on disk; missing files are skipped, integrity is checked
/// against the manifest by the reader.
struct DirSource<'a> {
    dir: &'a Path,
    n: usize,
    alpha: usize,
}

impl ChunkSource for DirSource<'_> {
    fn fetch(&self, chunkset: usize) -> Vec<CodedChunk> {
        (0..self.n)
            .filter_map(|index| {
                let payload = fs::read(chunk_path(self.dir, chunkset, index)).ok()?;
                Some(CodedChunk {
                    index,
                    payload,
                    alpha: self.alpha,
                })
            })
            .collect()
    }
}

pub fn reassemble(a: ReassembleArgs) -> Result<Verdict> {
    let path = a.dir.join("manifest.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: BlobManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let source = DirSource {
        dir: &a.dir,
        n: manifest.params.n(),
        alpha: manifest.params.alpha(),
    };
    let length = a
        .length
        .unwrap_or_else(|| manifest.original_length.saturating_sub(a.offset));
    let stats = ReadStats::default();
    let bytes = prep::reassemble_from(&manifest, &source, a.offset, length, &stats)?;
    fs::write(&a.output, &bytes).with_context(|| format!("writing {}", a.output.display()))?;
    println!(
        "wrote {} bytes; decoded {} chunksets, rejected {} corrupt chunks",
        bytes.len(),
        stats.decoded(),
        stats.rejected()
    );
    Ok(Verdict::Pass)
}
