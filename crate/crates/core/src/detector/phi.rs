//! Seeded synonym-substitution paraphraser used as the semantic-invariant
//! mapping.

use std::collections::BTreeMap;
use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// `word -> synonyms`, keys lowercase. Every synonym is a single word so that
/// substitution preserves the word count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str, synonyms: &[&str]) -> Result<()> {
        let key = word.trim().to_lowercase();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("bad synonym key {word:?}")));
        }
        if synonyms.is_empty() {
            return Err(Error::InvalidArgument(format!("no synonyms for {word:?}")));
        }
        let mut list = Vec::with_capacity(synonyms.len());
        for s in synonyms {
            let s = s.trim();
            if s.is_empty() || s.contains(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!(
                    "synonym {s:?} for {word:?} must be a single word"
                )));
            }
            list.push(s.to_string());
        }
        self.entries.insert(key, list);
        Ok(())
    }

    /// Parses `word: syn1, syn2, ...` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Self::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, rest) = line
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("synonym line {}: missing ':'", n + 1)))?;
            let syns: Vec<&str> = rest.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            table
                .insert(word, &syns)
                .map_err(|e| Error::InvalidArgument(format!("synonym line {}: {e}", n + 1)))?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationConfig {
    pub synonyms: SynonymTable,
    /// Probability of replacing each word that has synonyms.
    pub substitution_rate: f64,
    /// Default number of paraphrases per input.
    pub passes: usize,
    pub seed: u64,
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.substitution_rate) {
            return Err(Error::InvalidArgument(format!(
                "substitution rate must lie in [0, 1], got {}",
                self.substitution_rate
            )));
        }
        Ok(())
    }

    /// True when [`apply_phi`] cannot change any text.
    pub fn is_identity(&self) -> bool {
        self.substitution_rate == 0.0 || self.synonyms.is_empty()
    }
}

pub(crate) fn text_hash(text: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(text.as_bytes());
    h.finish()
}

/// Deterministic paraphrase of `text` for `(text, cfg.seed, variant)`.
///
/// Each word found in the synonym table is replaced, with probability
/// `substitution_rate`, by a synonym chosen from the seeded stream. Output
/// words are space-joined; text with no substitution is returned verbatim.
pub fn apply_phi(text: &str, cfg: &AugmentationConfig, variant: u64) -> String {
    if cfg.is_identity() {
        return text.to_string();
    }
    let mut rng = rng::stream(cfg.seed ^ text_hash(text), variant);
    let mut changed = false;
    let words: Vec<String> = text
        .split_whitespace()
        .map(|w| match cfg.synonyms.get(w) {
            Some(syns) => {
                // Draw for every eligible word so the stream layout does not
                // depend on earlier outcomes.
                let hit = rng.random_bool(cfg.substitution_rate);
                let pick = syns.choose(&mut rng).expect("non-empty synonym list");
                if hit {
                    changed = true;
                    pick.clone()
                } else {
                    w.to_string()
                }
            }
            None => w.to_string(),
        })
        .collect();
    if changed {
        words.join(" ")
    } else {
        text.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bank_table() -> SynonymTable {
        SynonymTable::parse("bank: banking\ncode: pin\n").unwrap()
    }

    fn cfg(rate: f64) -> AugmentationConfig {
        AugmentationConfig {
            synonyms: bank_table(),
            substitution_rate: rate,
            passes: 10,
            seed: 3,
        }
    }

    #[test]
    fn zero_rate_is_identity() {
        let t = "my bank  security code is";
        assert_eq!(apply_phi(t, &cfg(0.0), 4), t);
    }

    #[test]
    fn forced_substitution() {
        assert_eq!(
            apply_phi("my bank security code is", &cfg(1.0), 0),
            "my banking security pin is"
        );
        // Case-insensitive lookup.
        assert_eq!(apply_phi("My Bank security", &cfg(1.0), 0), "My banking security");
    }

    #[test]
    fn deterministic_per_variant() {
        let mut table = SynonymTable::new();
        table.insert("code", &["pin", "number", "password", "passcode"]).unwrap();
        table.insert("bank", &["banking", "savings", "credit"]).unwrap();
        let c = AugmentationConfig {
            synonyms: table,
            substitution_rate: 0.7,
            passes: 10,
            seed: 11,
        };
        let t = "my bank security code is";
        assert_eq!(apply_phi(t, &c, 2), apply_phi(t, &c, 2));
        let outs: std::collections::HashSet<_> = (0..20).map(|k| apply_phi(t, &c, k)).collect();
        assert!(outs.len() > 1);
    }

    #[test]
    fn table_parsing_errors() {
        assert!(SynonymTable::parse("bank banking").is_err());
        assert!(SynonymTable::parse("bank:").is_err());
        assert!(SynonymTable::parse("bank: savings bank").is_err());
        let t = SynonymTable::parse("# comment\n\nbank: banking, savings\n").unwrap();
        assert_eq!(t.get("BANK").unwrap(), &["banking".to_string(), "savings".to_string()]);
    }

    proptest! {
        #[test]
        fn preserves_word_count_and_unlisted_words(
            words in prop::collection::vec(prop::sample::select(vec!["my", "bank", "code", "is", "the", "river"]), 0..12),
            variant in 0u64..100,
            rate in 0.0f64..=1.0,
        ) {
            let text = words.join(" ");
            let out = apply_phi(&text, &cfg(rate), variant);
            let out_words: Vec<&str> = out.split_whitespace().collect();
            prop_assert_eq!(out_words.len(), words.len());
            for (a, b) in words.iter().zip(&out_words) {
                if *a != "bank" && *a != "code" {
                    prop_assert_eq!(a, b);
                }
            }
        }
    }
}
