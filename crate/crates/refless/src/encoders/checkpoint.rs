//! Encoder checkpoints: a directory holding a manifest (the
//! compatibility contract), the vocabulary, and a binary weights blob.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoders::{BiGruEncoder, Encoder, EncoderKind, EncoderSpec, TransformerEncoder, Vocab};
use crate::error::{Error, Result};
use crate::nn::VisitParams;

const MAGIC: &[u8; 4] = b"RFW1";
const MANIFEST_FILE: &str = "manifest.json";
const WEIGHTS_FILE: &str = "weights.bin";
const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    format_version: u32,
    spec: EncoderSpec,
    weights_sha256: String,
}

pub(crate) fn collect_values(model: &mut dyn VisitParams) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    model.visit_params(&mut |p| {
        let mut values = Vec::with_capacity(p.len());
        for i in 0..p.len() {
            values.push(p.get(i));
        }
        out.push(values);
    });
    out
}

pub(crate) fn weights_blob(values: &[Vec<f64>]) -> Vec<u8> {
    let mut blob = Vec::new();
    blob.extend_from_slice(MAGIC);
    blob.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for param in values {
        blob.extend_from_slice(&(param.len() as u64).to_le_bytes());
        for v in param {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    blob
}

pub(crate) fn parse_blob(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let fail = |msg: &str| Error::Checkpoint(format!("weights blob: {msg}"));
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(fail("bad magic"));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let mut offset = 8;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        if offset + 8 > bytes.len() {
            return Err(fail("truncated header"));
        }
        let len = u64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap()) as usize;
        offset += 8;
        let end = offset + 8 * len;
        if end > bytes.len() {
            return Err(fail("truncated data"));
        }
        let values = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(values);
        offset = end;
    }
    if offset != bytes.len() {
        return Err(fail("trailing bytes"));
    }
    Ok(out)
}

pub(crate) fn install_values(model: &mut dyn VisitParams, values: &[Vec<f64>]) -> Result<()> {
    let mut idx = 0;
    let mut error = None;
    model.visit_params(&mut |p| {
        if error.is_some() {
            return;
        }
        match values.get(idx) {
            Some(v) if v.len() == p.len() => {
                for (i, x) in v.iter().enumerate() {
                    p.set(i, *x);
                }
            }
            Some(v) => {
                error = Some(format!(
                    "parameter {idx} has {} values, expected {}",
                    v.len(),
                    p.len()
                ))
            }
            None => error = Some(format!("missing parameter {idx}")),
        }
        idx += 1;
    });
    if let Some(msg) = error {
        return Err(Error::Checkpoint(msg));
    }
    if idx != values.len() {
        return Err(Error::Checkpoint(format!(
            "blob has {} parameters, model expects {idx}",
            values.len()
        )));
    }
    Ok(())
}

/// Save an encoder into `dir` (created if missing). Returns the weights
/// hash recorded in the manifest.
pub fn save_checkpoint(encoder: &mut Encoder, dir: &Path) -> Result<String> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob = weights_blob(&collect_values(encoder));
    let hash = format!("{:x}", Sha256::digest(&blob));
    let weights_path = dir.join(WEIGHTS_FILE);
    std::fs::File::create(&weights_path)
        .and_then(|mut f| f.write_all(&blob))
        .map_err(|e| Error::io(&weights_path, e))?;

    let vocab = match encoder {
        Encoder::Transformer(e) => &e.vocab,
        Encoder::BiGru(e) => &e.vocab,
    };
    let vocab_path = dir.join(VOCAB_FILE);
    std::fs::write(&vocab_path, vocab.tokens().join("\n"))
        .map_err(|e| Error::io(&vocab_path, e))?;

    let manifest = CheckpointManifest {
        format_version: 1,
        spec: encoder.spec().clone(),
        weights_sha256: hash.clone(),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&manifest_path, e))?;
    Ok(hash)
}

/// Load an encoder from a checkpoint directory. The manifest decides the
/// architecture; the blob must match it exactly.
pub fn load_checkpoint(dir: &Path) -> Result<Encoder> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&manifest_text)?;
    if manifest.format_version != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format version {}",
            manifest.format_version
        )));
    }

    let vocab_path = dir.join(VOCAB_FILE);
    let vocab_text =
        std::fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let vocab = Vocab::from_token_list(vocab_text.lines().map(str::to_string).collect())?;

    let weights_path = dir.join(WEIGHTS_FILE);
    let mut blob = Vec::new();
    std::fs::File::open(&weights_path)
        .and_then(|mut f| f.read_to_end(&mut blob))
        .map_err(|e| Error::io(&weights_path, e))?;
    let hash = format!("{:x}", Sha256::digest(&blob));
    if hash != manifest.weights_sha256 {
        return Err(Error::Checkpoint(format!(
            "weights hash mismatch: manifest {} vs blob {hash}",
            manifest.weights_sha256
        )));
    }

    let mut spec = manifest.spec;
    spec.pretrained_id = Some(dir.display().to_string());
    let mut encoder = match spec.kind {
        EncoderKind::PretrainedTransformer => {
            Encoder::Transformer(TransformerEncoder::init(&spec, vocab)?)
        }
        EncoderKind::BigruAttention => Encoder::BiGru(BiGruEncoder::init(&spec, vocab)?),
    };
    install_values(&mut encoder, &parse_blob(&blob)?)?;
    Ok(encoder)
}
