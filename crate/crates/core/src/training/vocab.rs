use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// Bijection between tokens and ids `0..len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from an explicit id order. `<unk>` is appended if absent.
    pub fn from_tokens(mut tokens: Vec<String>) -> Result<Self> {
        if !tokens.iter().any(|t| t == UNK) {
            tokens.push(UNK.to_string());
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Ingestion(format!("invalid vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Ingestion(format!(
                    "duplicate vocabulary token {t:?}"
                )));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn unk(&self) -> usize {
        self.index[UNK]
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or of `<unk>` when it is out of vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or_else(|| self.unk())
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(Error::Vocabulary {
                id,
                size: self.tokens.len(),
            })
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }
}

/// Counts tokens and orders them by descending frequency, ties broken
/// lexicographically. Tokens seen fewer than `min_count` times are left out
/// (they encode to `<unk>`). `<eos>` and `<unk>` are appended if missing.
pub fn build_vocab<I, S>(tokens: I, min_count: usize) -> Result<Vocab>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_ref().to_string()).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::Ingestion(
            "cannot build a vocabulary from an empty corpus".into(),
        ));
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut order: Vec<String> = kept.into_iter().map(|(t, _)| t).collect();
    for reserved in [EOS, UNK] {
        if !order.iter().any(|t| t == reserved) {
            order.push(reserved.to_string());
        }
    }
    Vocab::from_tokens(order)
}

/// Whitespace tokens of each non-blank line, each line followed by `<eos>`.
pub fn tokenize_lines(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let before = out.len();
        out.extend(line.split_whitespace().map(str::to_string));
        if out.len() > before {
            out.push(EOS.to_string());
        }
    }
    out
}

/// Reads and tokenizes a UTF-8 corpus file.
pub fn read_corpus(path: &Path) -> Result<Vec<String>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::Ingestion(format!("{}: not UTF-8 ({e})", path.display())))?;
    Ok(tokenize_lines(&text))
}
