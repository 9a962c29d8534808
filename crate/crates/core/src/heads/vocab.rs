use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Lowercased whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Word-level vocabulary; ids 0..4 are PAD, BOS, EOS, UNK.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyJson", into = "VocabularyJson")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyJson {
    tokens: Vec<String>,
}

impl TryFrom<VocabularyJson> for Vocabulary {
    type Error = String;

    fn try_from(v: VocabularyJson) -> Result<Self, String> {
        if v.tokens.len() < SPECIALS.len() || v.tokens[..4] != SPECIALS {
            return Err("vocabulary must start with <pad>, <bos>, <eos>, <unk>".into());
        }
        let index: HashMap<String, usize> = v.tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        if index.len() != v.tokens.len() {
            return Err("vocabulary has duplicate tokens".into());
        }
        Ok(Self { tokens: v.tokens, index })
    }
}

impl From<Vocabulary> for VocabularyJson {
    fn from(v: Vocabulary) -> Self {
        Self { tokens: v.tokens }
    }
}

impl Vocabulary {
    /// Specials followed by the sorted distinct words of `corpus`.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = corpus.into_iter().flat_map(tokenize).collect();
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().filter(|w| !SPECIALS.contains(&w.as_str())))
            .collect();
        let index = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Errors on the first out-of-vocabulary word.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        tokenize(text)
            .into_iter()
            .map(|w| self.id(&w).ok_or(Error::UnknownToken(w)))
            .collect()
    }

    /// Maps out-of-vocabulary words to UNK.
    pub fn encode_lossy(&self, text: &str) -> Vec<usize> {
        tokenize(text).into_iter().map(|w| self.id(&w).unwrap_or(UNK)).collect()
    }

    /// Joins tokens with spaces, stopping at EOS and skipping PAD and BOS.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i != PAD && i != BOS)
            .map(|&i| self.token(i).unwrap_or(SPECIALS[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("vocabulary", e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}
