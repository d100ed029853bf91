//! Tokenization, vocabulary construction, and fixed-length encoding.
//!
//! Ids 0 and 1 are reserved: 0 is the padding id, 1 the unknown-token id.
//! Encoded texts are always `text_size` long with padding at the tail, so
//! every valid token sits in a prefix of length `valid_len`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Reserved padding id.
pub const PAD_ID: u32 = 0;
/// Reserved unknown-token id.
pub const UNK_ID: u32 = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Lowercase, split on Unicode whitespace, strip leading/trailing ASCII
/// punctuation from each piece, drop empties. Interior punctuation (hyphens,
/// apostrophes) survives.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .filter_map(|piece| {
            let trimmed = piece.trim_matches(|c: char| c.is_ascii_punctuation());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_string())
            }
        })
        .collect()
}

/// Token <-> id map with reserved PAD=0 and UNK=1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    /// Rank tokens by frequency (descending, ties lexicographic) and assign
    /// ids from 2 upward to those with frequency >= `min_freq`.
    pub fn build(corpus: &[Vec<String>], min_freq: usize) -> Result<Vocabulary> {
        if corpus.is_empty() {
            return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tokens in corpus {
            for tok in tokens {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_freq)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_token = Vec::with_capacity(ranked.len() + 2);
        id_to_token.push(PAD_TOKEN.to_string());
        id_to_token.push(UNK_TOKEN.to_string());
        id_to_token.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
        Ok(Vocabulary::from_tokens(id_to_token))
    }

    /// Tokenize raw texts, then build.
    pub fn build_from_texts<S: AsRef<str>>(texts: &[S], min_freq: usize) -> Result<Vocabulary> {
        let corpus: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        Vocabulary::build(&corpus, min_freq)
    }

    /// Rebuild from an id-ordered token list (as stored in checkpoints).
    pub fn from_tokens(id_to_token: Vec<String>) -> Vocabulary {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            id_to_token,
            token_to_id,
        }
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id_of(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// A text encoded to exactly `text_size` ids, PAD-filled past `valid_len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedText {
    pub ids: Vec<u32>,
    pub valid_len: usize,
}

/// Map tokens to ids, truncate to `text_size`, pad with PAD_ID.
pub fn encode(tokens: &[String], vocab: &Vocabulary, text_size: usize) -> EncodedText {
    let valid_len = tokens.len().min(text_size);
    let mut ids = Vec::with_capacity(text_size);
    for tok in tokens.iter().take(valid_len) {
        ids.push(vocab.id_of(tok));
    }
    ids.resize(text_size, PAD_ID);
    EncodedText { ids, valid_len }
}

/// Tokenize and encode one text for model input. A text whose token list
/// comes out empty is encoded as a single UNK so that every model input has
/// at least one valid step (pooling requires it).
pub fn encode_text(text: &str, vocab: &Vocabulary, text_size: usize) -> EncodedText {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        let mut ids = vec![PAD_ID; text_size];
        ids[0] = UNK_ID;
        return EncodedText { ids, valid_len: 1 };
    }
    encode(&tokens, vocab, text_size)
}

/// Bring a group to exactly `group_size` members: truncate to the first
/// `group_size` in file order, or pad by sampling existing members uniformly
/// with replacement. Slot 0 (the anchor slot) always keeps the original
/// first member.
pub fn pad_group<T: Clone>(
    texts: &[T],
    group_size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<T>> {
    if texts.is_empty() {
        return Err(Error::Data("cannot pad an empty group".into()));
    }
    let mut out: Vec<T> = texts.iter().take(group_size).cloned().collect();
    while out.len() < group_size {
        let pick = rng.index(texts.len());
        out.push(texts[pick].clone());
    }
    Ok(out)
}
