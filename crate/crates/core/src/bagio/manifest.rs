//! Dataset manifests: a JSON document listing bag files.
//!
//! ```json
//! {
//!   "d_v": 32,
//!   "bags": [
//!     { "path": "bag_0000.bagemb", "split": "train" },
//!     { "path": "bag_0001.bagemb", "split": "test", "tags": { "magnification": "40x" } }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. Tags are free-form
//! and carry no meaning for training.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::{read_bagemb, BagRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(Error::Data(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub d_v: usize,
    pub bags: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBag {
    pub record: BagRecord,
    pub split: Split,
    pub tags: BTreeMap<String, String>,
    pub source: Option<PathBuf>,
}

/// Immutable set of bags sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d_v: usize,
    bags: Vec<DatasetBag>,
}

impl Dataset {
    pub fn new(bags: Vec<DatasetBag>) -> Result<Self> {
        let first = bags
            .first()
            .ok_or_else(|| Error::Data("dataset has no bags".into()))?;
        let d_v = first.record.d_v();
        if let Some(bad) = bags.iter().find(|b| b.record.d_v() != d_v) {
            return Err(Error::Data(format!(
                "bag {:?} has d_v = {}, dataset d_v = {d_v}",
                bad.record.patient_id,
                bad.record.d_v()
            )));
        }
        Ok(Self { d_v, bags })
    }

    /// Builds a dataset where every bag has the same split.
    pub fn from_records(records: Vec<BagRecord>, split: Split) -> Result<Self> {
        Self::new(
            records
                .into_iter()
                .map(|record| DatasetBag {
                    record,
                    split,
                    tags: BTreeMap::new(),
                    source: None,
                })
                .collect(),
        )
    }

    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let manifest = Manifest::load(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut bags = Vec::with_capacity(manifest.bags.len());
        for entry in &manifest.bags {
            let path = base.join(&entry.path);
            let record = read_bagemb(&path)?;
            if record.d_v() != manifest.d_v {
                return Err(Error::Data(format!(
                    "{}: d_v = {} but manifest declares {}",
                    path.display(),
                    record.d_v(),
                    manifest.d_v
                )));
            }
            bags.push(DatasetBag {
                record,
                split: entry.split,
                tags: entry.tags.clone(),
                source: Some(path),
            });
        }
        Self::new(bags).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", manifest_path.display())),
            other => other,
        })
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn bags(&self) -> &[DatasetBag] {
        &self.bags
    }

    pub fn split(&self, split: Split) -> Vec<&BagRecord> {
        self.bags
            .iter()
            .filter(|b| b.split == split)
            .map(|b| &b.record)
            .collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &BagRecord> {
        self.bags.iter().map(|b| &b.record)
    }
}
