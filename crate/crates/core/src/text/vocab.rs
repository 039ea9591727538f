//! Token vocabulary, fixed-length token sequences, and the direction-word
//! swap used by horizontal-flip augmentation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved id for padding positions.
pub const PAD_ID: u32 = 0;
/// Reserved id for out-of-vocabulary words.
pub const UNK_ID: u32 = 1;
/// Fixed sequence capacity; longer sentences are truncated.
pub const MAX_LEN: usize = 20;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Insertion-ordered token → id map with dense ids and two reserved
/// entries. The token list itself is the serialized form, so ids survive
/// save/load byte-for-byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            tokens: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            index: BTreeMap::new(),
        };
        v.rebuild_index();
        v
    }

    /// Restores a vocabulary from its serialized token list (e.g. out of a
    /// checkpoint). The first two entries must be the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::Checkpoint(
                "vocabulary token list must start with the reserved pad/unk entries".into(),
            ));
        }
        let mut v = Vocabulary {
            tokens,
            index: BTreeMap::new(),
        };
        v.rebuild_index();
        Ok(v)
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    /// Builds a vocabulary over every word of the given texts, in order of
    /// first appearance.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Vocabulary::new();
        for text in texts {
            for word in split_words(text) {
                v.add(&word);
            }
        }
        v
    }

    /// Inserts a token if absent; returns its id either way.
    pub fn add(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    /// Id lookup; unknown words map to [`UNK_ID`].
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Id lookup without the UNK fallback.
    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Total entries including the two reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries are always present
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Resolves direction word pairs to id pairs, silently dropping pairs
    /// where either word is not in the vocabulary (an unknown word cannot
    /// appear in any tokenized sequence, so there is nothing to swap).
    pub fn direction_pairs(&self, pairs: &[(String, String)]) -> Vec<(u32, u32)> {
        pairs
            .iter()
            .filter_map(|(a, b)| Some((self.lookup(a)?, self.lookup(b)?)))
            .collect()
    }
}

/// Fixed-capacity token sequence: `len` live ids followed by PAD.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    ids: Vec<u32>,
    len: usize,
}

impl TokenSequence {
    /// Wraps pre-tokenized ids, truncating to [`MAX_LEN`] and padding the
    /// remainder.
    pub fn from_ids(ids: &[u32]) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("token sequence"));
        }
        let len = ids.len().min(MAX_LEN);
        let mut padded = vec![PAD_ID; MAX_LEN];
        padded[..len].copy_from_slice(&ids[..len]);
        Ok(TokenSequence { ids: padded, len })
    }

    /// Number of live (non-pad) tokens.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// All [`MAX_LEN`] slots, padding included.
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// The live tokens only.
    pub fn active(&self) -> &[u32] {
        &self.ids[..self.len]
    }

    /// Test-only constructor that does not normalize the padding region,
    /// for verifying that consumers ignore it.
    #[cfg(test)]
    pub(crate) fn with_raw_ids(ids: Vec<u32>, len: usize) -> Self {
        assert_eq!(ids.len(), MAX_LEN);
        TokenSequence { ids, len }
    }
}

/// Lowercases and splits on everything that is not alphanumeric, so both
/// whitespace and punctuation separate words.
pub fn split_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Tokenizes a sentence: lowercase, split, map through the vocabulary
/// (unknown words become UNK), truncate to [`MAX_LEN`], pad. Errors on
/// text with no words at all.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Result<TokenSequence> {
    let words = split_words(text);
    if words.is_empty() {
        return Err(Error::EmptyInput("tokenize"));
    }
    let ids: Vec<u32> = words.iter().map(|w| vocab.id(w)).collect();
    TokenSequence::from_ids(&ids)
}

/// Replaces each id appearing in a swap pair by its partner (in both
/// directions), leaving everything else alone. Applying it twice restores
/// the original sequence.
pub fn swap_direction_tokens(seq: &TokenSequence, pairs: &[(u32, u32)]) -> TokenSequence {
    let mut out = seq.clone();
    for id in out.ids.iter_mut() {
        for &(a, b) in pairs {
            if *id == a {
                *id = b;
                break;
            }
            if *id == b {
                *id = a;
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_vocab() -> Vocabulary {
        Vocabulary::build(["the left dog runs right of a red ball box"])
    }

    #[test]
    fn reserved_ids_come_first() {
        let v = Vocabulary::new();
        assert_eq!(v.id(PAD_TOKEN), PAD_ID);
        assert_eq!(v.id(UNK_TOKEN), UNK_ID);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn tokenize_strips_punctuation_and_lowercases() {
        let v = sample_vocab();
        let seq = tokenize("A red ball.", &v).unwrap();
        assert_eq!(seq.len(), 3);
        assert_eq!(seq.active(), &[v.id("a"), v.id("red"), v.id("ball")]);
        // padding fills the rest
        assert!(seq.ids()[3..].iter().all(|&id| id == PAD_ID));
    }

    #[test]
    fn long_sentences_truncate_to_capacity() {
        let v = sample_vocab();
        let text = (0..25).map(|_| "dog").collect::<Vec<_>>().join(" ");
        let seq = tokenize(&text, &v).unwrap();
        assert_eq!(seq.len(), MAX_LEN);
        assert!(seq.active().iter().all(|&id| id == v.id("dog")));
    }

    #[test]
    fn unseen_words_become_unk() {
        let v = sample_vocab();
        let seq = tokenize("the zebra runs", &v).unwrap();
        assert_eq!(seq.active(), &[v.id("the"), UNK_ID, v.id("runs")]);
    }

    #[test]
    fn blank_text_is_an_error() {
        let v = sample_vocab();
        assert!(tokenize("", &v).is_err());
        assert!(tokenize("   \t  ", &v).is_err());
        assert!(tokenize("...", &v).is_err());
    }

    #[test]
    fn swap_left_right() {
        let v = sample_vocab();
        let pairs = v.direction_pairs(&[("left".into(), "right".into())]);

        let seq = tokenize("the left dog", &v).unwrap();
        let swapped = swap_direction_tokens(&seq, &pairs);
        assert_eq!(swapped, tokenize("the right dog", &v).unwrap());

        // no direction words → unchanged
        let seq = tokenize("the dog runs", &v).unwrap();
        assert_eq!(swap_direction_tokens(&seq, &pairs), seq);

        // both directions swap simultaneously
        let seq = tokenize("left of the right box", &v).unwrap();
        assert_eq!(
            swap_direction_tokens(&seq, &pairs),
            tokenize("right of the left box", &v).unwrap()
        );
    }

    #[test]
    fn swap_is_an_involution() {
        let v = sample_vocab();
        let pairs = v.direction_pairs(&[("left".into(), "right".into())]);
        for text in ["the left dog", "right right left", "a red ball"] {
            let seq = tokenize(text, &v).unwrap();
            let twice = swap_direction_tokens(&swap_direction_tokens(&seq, &pairs), &pairs);
            assert_eq!(twice, seq);
        }
    }

    #[test]
    fn missing_direction_words_are_dropped_from_the_table() {
        let v = sample_vocab(); // has no "up"/"down"
        let pairs = v.direction_pairs(&[
            ("left".into(), "right".into()),
            ("up".into(), "down".into()),
        ]);
        assert_eq!(pairs.len(), 1);
    }

    #[test]
    fn vocabulary_round_trips_through_its_token_list() {
        let v = sample_vocab();
        let restored = Vocabulary::from_tokens(v.tokens().to_vec()).unwrap();
        assert_eq!(restored, v);
        assert_eq!(restored.id("dog"), v.id("dog"));
        // rejects lists missing the reserved prefix
        assert!(Vocabulary::from_tokens(vec!["dog".into()]).is_err());
    }
}
