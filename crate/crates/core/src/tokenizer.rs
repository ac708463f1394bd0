//! Word-level tokenizer: lowercase, whitespace-split, closed vocabulary
//! with PAD/UNK/EOS and the literal marker token "intent:" as first-class
//! ids.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const EOS: u32 = 2;
pub const INTENT_MARKER: u32 = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const EOS_TOKEN: &str = "<eos>";
pub const INTENT_MARKER_TOKEN: &str = "intent:";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenizeError {
    EmptyInput,
}

impl fmt::Display for TokenizeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenizeError::EmptyInput => write!(f, "empty input after normalization"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    words: Vec<String>,
    index: BTreeMap<String, u32>,
}

fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|w| w.to_lowercase()).collect()
}

impl Tokenizer {
    /// Builds the vocabulary from an iterator of text lines. Word ids are
    /// dense: 4 specials first, then corpus words in sorted order, so the
    /// mapping is independent of input order.
    pub fn build<'a>(lines: impl Iterator<Item = &'a str>) -> Self {
        let mut set: BTreeSet<String> = BTreeSet::new();
        for line in lines {
            for w in normalize(line) {
                set.insert(w);
            }
        }
        set.remove(INTENT_MARKER_TOKEN); // already a special
        let mut words: Vec<String> = Vec::with_capacity(set.len() + 4);
        words.push(PAD_TOKEN.to_string());
        words.push(UNK_TOKEN.to_string());
        words.push(EOS_TOKEN.to_string());
        words.push(INTENT_MARKER_TOKEN.to_string());
        words.extend(set);
        Self::from_words(words)
    }

    /// Reconstructs a tokenizer from an id-ordered word list (checkpoint
    /// load path). The first four entries must be the special tokens.
    pub fn from_words(words: Vec<String>) -> Self {
        assert!(words.len() > 4, "vocabulary too small");
        assert_eq!(words[PAD as usize], PAD_TOKEN);
        assert_eq!(words[UNK as usize], UNK_TOKEN);
        assert_eq!(words[EOS as usize], EOS_TOKEN);
        assert_eq!(words[INTENT_MARKER as usize], INTENT_MARKER_TOKEN);
        let mut index = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            let prev = index.insert(w.clone(), i as u32);
            assert!(prev.is_none(), "duplicate vocabulary word {w:?}");
        }
        Tokenizer { words, index }
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id_of(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>, TokenizeError> {
        let words = normalize(text);
        if words.is_empty() {
            return Err(TokenizeError::EmptyInput);
        }
        Ok(words
            .iter()
            .map(|w| self.index.get(w.as_str()).copied().unwrap_or(UNK))
            .collect())
    }

    /// Inverse of `tokenize` for in-vocabulary text; PAD and EOS are
    /// dropped, UNK renders as its placeholder.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == PAD || id == EOS {
                continue;
            }
            let w = self
                .words
                .get(id as usize)
                .map(|s| s.as_str())
                .unwrap_or(UNK_TOKEN);
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(w);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toy() -> Tokenizer {
        Tokenizer::build(
            ["transfer money to bank account", "check balance intent: now"]
                .iter()
                .copied(),
        )
    }

    #[test]
    fn lowercases_and_splits() {
        let t = toy();
        let ids = t.tokenize("Transfer Money").unwrap();
        assert_eq!(
            ids,
            vec![t.id_of("transfer").unwrap(), t.id_of("money").unwrap()]
        );
    }

    #[test]
    fn oov_maps_to_unk() {
        let t = toy();
        assert_eq!(t.tokenize("zeppelin").unwrap(), vec![UNK]);
    }

    #[test]
    fn intent_marker_is_one_token() {
        let t = toy();
        assert_eq!(t.tokenize("intent:").unwrap(), vec![INTENT_MARKER]);
        assert_eq!(t.tokenize("INTENT:").unwrap(), vec![INTENT_MARKER]);
    }

    #[test]
    fn ids_are_dense_and_specials_present() {
        let t = toy();
        for (i, w) in t.words().iter().enumerate() {
            assert_eq!(t.id_of(w), Some(i as u32));
        }
        assert_eq!(t.id_of(PAD_TOKEN), Some(PAD));
        assert_eq!(t.id_of(EOS_TOKEN), Some(EOS));
    }

    #[test]
    fn round_trips_in_vocab_text() {
        let t = toy();
        let clean = "transfer money to bank account";
        assert_eq!(t.detokenize(&t.tokenize(clean).unwrap()), clean);
        assert_eq!(
            t.detokenize(&t.tokenize("  Transfer\tMONEY ").unwrap()),
            "transfer money"
        );
    }

    #[test]
    fn empty_input_is_an_error() {
        let t = toy();
        assert_eq!(t.tokenize("   "), Err(TokenizeError::EmptyInput));
    }

    #[test]
    fn vocabulary_is_order_independent() {
        let a = Tokenizer::build(["b a", "c d"].iter().copied());
        let b = Tokenizer::build(["c d", "b a"].iter().copied());
        assert_eq!(a, b);
    }
}
