//! Versioned flat binary checkpoint.
//!
//! All integers little-endian:
//!
//! | field        | type                                            |
//! |--------------|-------------------------------------------------|
//! | magic        | 8 bytes `MILCAPCK`                              |
//! | version      | u32 (currently 1)                               |
//! | d_v          | u32                                             |
//! | seed         | u64                                             |
//! | epoch        | u64, epochs completed                           |
//! | config       | u32 length + UTF-8 JSON of the training config  |
//! | vocabulary   | u32 length + UTF-8 JSON, length 0 when absent   |
//! | tensor count | u32                                             |
//! | tensors      | u16 name length, name, u32 rows, u32 cols, f64 values row-major |
//!
//! Every random draw in training derives from `(seed, epoch, bag)`, so seed
//! and epoch are the whole RNG state.

use std::path::Path;

use crate::error::{Error, Result};
use crate::heads::Vocabulary;
use crate::numerics::Matrix;

use super::config::TrainConfig;
use super::pipeline::Pipeline;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"MILCAPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub d_v: usize,
    pub seed: u64,
    pub epoch: u64,
    pub vocab: Option<Vocabulary>,
    pub tensors: Vec<(String, Matrix)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Data(format!("checkpoint truncated reading {field} at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, field: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, len: usize, field: &str) -> Result<&'a str> {
        std::str::from_utf8(self.take(len, field)?).map_err(|_| Error::Data(format!("checkpoint {field} is not UTF-8")))
    }
}

fn put_len(out: &mut Vec<u8>, len: usize, field: &str) -> Result<()> {
    let len = u32::try_from(len).map_err(|_| Error::Contract(format!("{field} is too large for a checkpoint")))?;
    out.extend_from_slice(&len.to_le_bytes());
    Ok(())
}

impl Checkpoint {
    pub fn from_pipeline(pipeline: &Pipeline, epoch: u64) -> Self {
        Self {
            config: pipeline.config.clone(),
            d_v: pipeline.d_v,
            seed: pipeline.config.seed,
            epoch,
            vocab: pipeline.vocab.clone(),
            tensors: pipeline.store.iter().map(|(n, m)| (n.to_string(), m.clone())).collect(),
        }
    }

    /// Rebuilds the model and overwrites its parameters with the stored tensors.
    pub fn to_pipeline(&self) -> Result<Pipeline> {
        let mut pipeline = Pipeline::new(self.config.clone(), self.d_v, self.vocab.clone())?;
        if pipeline.store.len() != self.tensors.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} tensors, model has {}",
                self.tensors.len(),
                pipeline.store.len()
            )));
        }
        for (name, value) in &self.tensors {
            let id = pipeline
                .store
                .id(name)
                .ok_or_else(|| Error::Data(format!("checkpoint tensor {name:?} is not a model parameter")))?;
            pipeline.store.set(id, value.clone())?;
        }
        Ok(pipeline)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_len(&mut out, self.d_v, "d_v")?;
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        let config = serde_json::to_string(&self.config).expect("config serializes");
        put_len(&mut out, config.len(), "config")?;
        out.extend_from_slice(config.as_bytes());
        let vocab = self
            .vocab
            .as_ref()
            .map(|v| serde_json::to_string(v).expect("vocabulary serializes"))
            .unwrap_or_default();
        put_len(&mut out, vocab.len(), "vocabulary")?;
        out.extend_from_slice(vocab.as_bytes());
        put_len(&mut out, self.tensors.len(), "tensor count")?;
        for (name, m) in &self.tensors {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Contract(format!("tensor name {name:?} is too long")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            put_len(&mut out, m.rows(), "rows")?;
            put_len(&mut out, m.cols(), "cols")?;
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Data("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!("checkpoint version {version} is not supported")));
        }
        let d_v = r.u32("d_v")? as usize;
        let seed = r.u64("seed")?;
        let epoch = r.u64("epoch")?;
        let len = r.u32("config length")? as usize;
        let config: TrainConfig =
            serde_json::from_str(r.string(len, "config")?).map_err(|e| Error::json("checkpoint config", e))?;
        let len = r.u32("vocabulary length")? as usize;
        let vocab = if len == 0 {
            None
        } else {
            Some(Vocabulary::from_json(r.string(len, "vocabulary")?)?)
        };
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u16("tensor name length")? as usize;
            let name = r.string(len, "tensor name")?.to_string();
            let rows = r.u32("rows")? as usize;
            let cols = r.u32("cols")? as usize;
            let n = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| Error::Data(format!("tensor {name:?} is too large")))?;
            let raw = r.take(n, &name)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            tensors.push((name, Matrix::new(rows, cols, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::Data(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
        }
        Ok(Self {
            config,
            d_v,
            seed,
            epoch,
            vocab,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
