//! Single-file checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "PRU1"  u32 version  u32 n  <n bytes of config text>
//! repeated: u32 name_len  name  u32 rank  rank x u64 extents  f64 data...
//! u64 FNV-1a checksum of every preceding byte
//! ```
//!
//! The config text is the canonical `key=value` block followed by a
//! `vocab=` line listing tokens in id order.

use std::path::Path;

use crate::config::{parse_pairs, TrainConfig};
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::seeded_rng;
use crate::tensor::Tensor;
use crate::training::vocab::Vocab;

pub const MAGIC: &[u8; 4] = b"PRU1";
pub const VERSION: u32 = 1;

/// A model together with the config and vocabulary it was trained with.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub model: LanguageModel,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn persistence(msg: impl Into<String>) -> Error {
    Error::Persistence(msg.into())
}

pub fn encode(config: &TrainConfig, vocab: &Vocab, model: &LanguageModel) -> Result<Vec<u8>> {
    if vocab.len() != model.vocab_size() {
        return Err(Error::contract(format!(
            "vocabulary of {} tokens for a model over {}",
            vocab.len(),
            model.vocab_size()
        )));
    }
    let mut text = config.canonical_text();
    text.push_str("vocab=");
    text.push_str(&vocab.tokens().join(" "));
    text.push('\n');

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    for p in model.store().iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| persistence("checkpoint is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Parses a checkpoint and rebuilds the model it describes.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(persistence("not a checkpoint (bad magic bytes)"));
    }
    if bytes.len() < 4 + 4 + 4 + 8 {
        return Err(persistence("checkpoint is truncated"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let mut r = Reader {
        bytes: body,
        pos: 4,
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(persistence(format!(
            "checkpoint format version {version}, expected {VERSION}"
        )));
    }
    if fnv1a(body) != stored {
        return Err(persistence(
            "checksum mismatch (corrupted or truncated file)",
        ));
    }
    let text_len = r.u32()? as usize;
    let text = std::str::from_utf8(r.take(text_len)?)
        .map_err(|_| persistence("config block is not UTF-8"))?;
    let mut pairs = parse_pairs(text).map_err(|e| persistence(format!("config block: {e}")))?;
    let vocab_at = pairs
        .iter()
        .position(|(k, _)| k == "vocab")
        .ok_or_else(|| persistence("config block has no vocabulary"))?;
    let (_, vocab_line) = pairs.remove(vocab_at);
    let vocab = Vocab::from_tokens(vocab_line.split(' ').map(str::to_string).collect())
        .map_err(|e| persistence(format!("vocabulary: {e}")))?;
    let config =
        TrainConfig::from_pairs(&pairs).map_err(|e| persistence(format!("config block: {e}")))?;
    let mut model = LanguageModel::new(&config.model(vocab.len())?, &mut seeded_rng(0))?;

    let mut seen = vec![false; model.store().len()];
    while !r.done() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| persistence("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(persistence(format!("tensor `{name}` has rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| persistence(format!("tensor `{name}` is too large")))?;
        let raw = r.take(
            n.checked_mul(8)
                .ok_or_else(|| persistence("tensor too large"))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let id = model
            .store()
            .find(&name)
            .ok_or_else(|| persistence(format!("unexpected tensor `{name}`")))?;
        let value =
            Tensor::new(shape, data).map_err(|e| persistence(format!("tensor `{name}`: {e}")))?;
        if value.shape() != model.store().value(id).shape() {
            return Err(persistence(format!(
                "tensor `{name}` has shape {:?}, model expects {:?}",
                value.shape(),
                model.store().value(id).shape()
            )));
        }
        *model.store_mut().value_mut(id) = value;
        seen[id.index()] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        let name = &model.store().iter().nth(missing).expect("in range").name;
        return Err(persistence(format!("tensor `{name}` is missing")));
    }
    Ok(Checkpoint {
        config,
        vocab,
        model,
    })
}

pub fn save_checkpoint(
    path: &Path,
    config: &TrainConfig,
    vocab: &Vocab,
    model: &LanguageModel,
) -> Result<()> {
    let bytes = encode(config, vocab, model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint for evaluation or analysis, whatever its shape.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Loads a checkpoint to continue training under `config`; every
/// shape-determining key must agree.
pub fn load_for_training(path: &Path, config: &TrainConfig) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    let (want, have) = (config.model_pairs(), ck.config.model_pairs());
    for (k, v) in &want {
        if have[k] != *v {
            return Err(Error::config(format!(
                "checkpoint has {k}={}, training config has {k}={v}",
                have[k]
            )));
        }
    }
    Ok(ck)
}
