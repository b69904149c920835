//! Canary templates: planting copies of a secret sentence and enumerating
//! the full space of candidate fills.

use std::fs;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{Corpus, TokenSequence, Tokenizer, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Default limit on the number of candidates [`enumerate_canaries`] produces.
pub const DEFAULT_ENUMERATION_CAP: usize = 10_000;

/// A prefix followed by one slot token made of `slot_count` characters from
/// `slot_alphabet`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanaryTemplate {
    pub prefix: String,
    pub slot_alphabet: Vec<char>,
    pub slot_count: usize,
}

impl CanaryTemplate {
    pub fn new(prefix: impl Into<String>, alphabet: &str, slot_count: usize) -> Result<Self> {
        let slot_alphabet: Vec<char> = alphabet.chars().collect();
        let mut seen = slot_alphabet.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != slot_alphabet.len() {
            return Err(Error::InvalidArgument("slot alphabet has repeated characters".into()));
        }
        if slot_count > 0 && slot_alphabet.is_empty() {
            return Err(Error::InvalidArgument("empty slot alphabet".into()));
        }
        if slot_alphabet.iter().any(|c| c.is_whitespace()) {
            return Err(Error::InvalidArgument("slot alphabet contains whitespace".into()));
        }
        Ok(Self {
            prefix: prefix.into(),
            slot_alphabet,
            slot_count,
        })
    }

    /// `|alphabet|^slot_count`, saturating at `u128::MAX`.
    pub fn space_size(&self) -> u128 {
        (self.slot_alphabet.len() as u128)
            .checked_pow(self.slot_count as u32)
            .unwrap_or(u128::MAX)
    }

    pub fn validate_fill(&self, fill: &str) -> Result<()> {
        let n = fill.chars().count();
        if n != self.slot_count {
            return Err(Error::IncompatibleFill {
                fill: fill.into(),
                reason: format!("expected {} characters, got {n}", self.slot_count),
            });
        }
        if let Some(c) = fill.chars().find(|c| !self.slot_alphabet.contains(c)) {
            return Err(Error::IncompatibleFill {
                fill: fill.into(),
                reason: format!("character {c:?} is not in the slot alphabet"),
            });
        }
        Ok(())
    }

    /// All fills in lexicographic order with respect to the alphabet order.
    pub fn fills(&self, cap: usize) -> Result<Vec<String>> {
        let size = self.space_size();
        if size > cap as u128 {
            return Err(Error::EnumerationCap { size, cap });
        }
        let k = self.slot_alphabet.len();
        let mut digits = vec![0usize; self.slot_count];
        let mut out = Vec::with_capacity(size as usize);
        for _ in 0..size {
            out.push(digits.iter().map(|&d| self.slot_alphabet[d]).collect());
            // Odometer increment, last position fastest.
            for pos in (0..self.slot_count).rev() {
                digits[pos] += 1;
                if digits[pos] < k {
                    break;
                }
                digits[pos] = 0;
            }
        }
        Ok(out)
    }

    /// Sentence text for `fill`.
    pub fn instantiate(&self, fill: &str) -> String {
        let prefix = self.prefix.trim();
        match (prefix.is_empty(), fill.is_empty()) {
            (_, true) => prefix.to_string(),
            (true, false) => fill.to_string(),
            (false, false) => format!("{prefix} {fill}"),
        }
    }

    /// Token strings for `fill`: the tokenized prefix plus one slot token.
    pub fn tokens(&self, fill: &str, tokenizer: &Tokenizer) -> Vec<String> {
        let unbounded = Tokenizer {
            max_len: usize::MAX,
            ..*tokenizer
        };
        let mut toks = unbounded.tokenize(&self.prefix);
        if !fill.is_empty() {
            toks.extend(unbounded.tokenize(fill));
        }
        toks
    }

    fn check_case_collisions(&self, tokenizer: &Tokenizer) -> Result<()> {
        if tokenizer.lowercase {
            let mut lowered: Vec<String> =
                self.slot_alphabet.iter().map(|c| c.to_lowercase().collect()).collect();
            lowered.sort();
            lowered.dedup();
            if lowered.len() != self.slot_alphabet.len() {
                return Err(Error::InvalidArgument(
                    "slot alphabet collapses under lowercasing".into(),
                ));
            }
        }
        Ok(())
    }

    /// Adds every token any candidate needs to `vocab`, so each fill can be
    /// scored as a distinct token.
    pub fn extend_vocabulary(
        &self,
        vocab: &mut Vocabulary,
        tokenizer: &Tokenizer,
        cap: usize,
    ) -> Result<()> {
        self.check_case_collisions(tokenizer)?;
        for t in self.tokens("", tokenizer) {
            vocab.insert(&t);
        }
        let unbounded = Tokenizer {
            max_len: usize::MAX,
            ..*tokenizer
        };
        for fill in self.fills(cap)? {
            for t in unbounded.tokenize(&fill) {
                vocab.insert(&t);
            }
        }
        Ok(())
    }
}

/// Record of a planting operation, persisted next to the run outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanaryManifest {
    pub template: CanaryTemplate,
    pub fill: String,
    pub count: usize,
    /// Indices of the planted copies in the resulting corpus, ascending.
    pub positions: Vec<usize>,
}

impl CanaryManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn sentence(&self) -> String {
        self.template.instantiate(&self.fill)
    }
}

/// Inserts `count` copies of the instantiated canary at seed-chosen positions.
///
/// The vocabulary is extended with the canary's tokens and, when the slot
/// space fits under `cap`, with every candidate fill. Planted copies are
/// labelled sensitive when the corpus carries labels.
pub fn plant_canary(
    corpus: &Corpus,
    template: &CanaryTemplate,
    fill: &str,
    count: usize,
    seed: u64,
    cap: usize,
) -> Result<(Corpus, CanaryManifest)> {
    template.validate_fill(fill)?;
    let mut out = corpus.clone();
    if template.space_size() <= cap as u128 {
        template.extend_vocabulary(&mut out.vocabulary, &corpus.tokenizer, cap)?;
    } else {
        for t in template.tokens(fill, &corpus.tokenizer) {
            out.vocabulary.insert(&t);
        }
    }

    let total = corpus.len() + count;
    let mut positions = index::sample(&mut rng::stream(seed, tag::PLANT), total, count).into_vec();
    positions.sort_unstable();

    let canary = TokenSequence::new(
        out.vocabulary.encode(&template.tokens(fill, &corpus.tokenizer)),
        template.instantiate(fill),
    );
    let mut sequences = Vec::with_capacity(total);
    let mut labels = corpus.labels.as_ref().map(|_| Vec::with_capacity(total));
    let mut originals = corpus.sequences.iter().enumerate();
    let mut planted = positions.iter().peekable();
    for slot in 0..total {
        if planted.peek() == Some(&&slot) {
            planted.next();
            sequences.push(canary.clone());
            if let Some(l) = labels.as_mut() {
                l.push(true);
            }
        } else {
            let (i, s) = originals.next().expect("slot accounting");
            sequences.push(s.clone());
            if let Some(l) = labels.as_mut() {
                l.push(corpus.labels.as_ref().unwrap()[i]);
            }
        }
    }
    out.sequences = sequences;
    out.labels = labels;

    let manifest = CanaryManifest {
        template: template.clone(),
        fill: fill.to_string(),
        count,
        positions,
    };
    Ok((out, manifest))
}

/// Every candidate canary in fill order, encoded under `vocab`.
pub fn enumerate_canaries(
    template: &CanaryTemplate,
    vocab: &Vocabulary,
    tokenizer: &Tokenizer,
    cap: usize,
) -> Result<Vec<TokenSequence>> {
    template.check_case_collisions(tokenizer)?;
    Ok(template
        .fills(cap)?
        .into_iter()
        .map(|fill| {
            TokenSequence::new(
                vocab.encode(&template.tokens(&fill, tokenizer)),
                template.instantiate(&fill),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_corpus;
    use std::collections::HashSet;
    use std::io::Write;

    fn bank() -> CanaryTemplate {
        CanaryTemplate::new("My bank security code is ", "0123456789", 3).unwrap()
    }

    fn base_corpus(lines: usize) -> Corpus {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for i in 0..lines {
            writeln!(f, "neutral line {i}").unwrap();
        }
        load_corpus(f.path(), true, 1).unwrap()
    }

    fn exact_matches(c: &Corpus, text: &str) -> usize {
        c.sequences.iter().filter(|s| s.source_text == text).count()
    }

    #[test]
    fn candidate_counts() {
        assert_eq!(bank().fills(DEFAULT_ENUMERATION_CAP).unwrap().len(), 1000);
        let nine = CanaryTemplate::new("p", "123456789", 3).unwrap();
        assert_eq!(nine.space_size(), 729);
        assert_eq!(nine.fills(DEFAULT_ENUMERATION_CAP).unwrap().len(), 729);
        let empty = CanaryTemplate::new("just the prefix", "0123456789", 0).unwrap();
        let v = Vocabulary::new();
        let cands = enumerate_canaries(&empty, &v, &Tokenizer::default(), 10).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].source_text, "just the prefix");
    }

    #[test]
    fn enumeration_order_and_cap() {
        let t = CanaryTemplate::new("x", "ba", 2).unwrap();
        assert_eq!(t.fills(10).unwrap(), vec!["bb", "ba", "ab", "aa"]);
        assert!(matches!(
            bank().fills(999),
            Err(Error::EnumerationCap { size: 1000, cap: 999 })
        ));
    }

    #[test]
    fn enumeration_has_no_duplicates() {
        let t = bank();
        let mut v = Vocabulary::new();
        t.extend_vocabulary(&mut v, &Tokenizer::default(), 2000).unwrap();
        let cands = enumerate_canaries(&t, &v, &Tokenizer::default(), 2000).unwrap();
        let distinct: HashSet<_> = cands.iter().map(|c| c.ids.clone()).collect();
        assert_eq!(distinct.len(), 1000);
        assert!(cands.iter().all(|c| !c.ids.contains(&v.unk_id())));
    }

    #[test]
    fn fill_validation() {
        let t = bank();
        assert!(t.validate_fill("450").is_ok());
        assert!(t.validate_fill("45").is_err());
        assert!(t.validate_fill("45a").is_err());
        let c = base_corpus(3);
        assert!(plant_canary(&c, &t, "4500", 1, 0, 10_000).is_err());
    }

    #[test]
    fn plant_five_copies() {
        let c = base_corpus(20);
        let t = bank();
        let (planted, manifest) = plant_canary(&c, &t, "450", 5, 42, 10_000).unwrap();
        assert_eq!(planted.len(), 25);
        assert_eq!(exact_matches(&planted, "My bank security code is 450"), 5);
        assert_eq!(manifest.positions.len(), 5);
        for &p in &manifest.positions {
            assert_eq!(planted.sequences[p].source_text, manifest.sentence());
        }
        // Original order of the other lines is preserved.
        let rest: Vec<_> = planted
            .sequences
            .iter()
            .filter(|s| s.source_text != manifest.sentence())
            .collect();
        assert!(rest.iter().zip(&c.sequences).all(|(a, b)| *a == b));
        // Every fill is now a scoreable token.
        assert!(planted.vocabulary.contains("000") && planted.vocabulary.contains("999"));
        assert_eq!(planted.vocabulary.decode(&planted.sequences[manifest.positions[0]].ids),
            "my bank security code is 450");
    }

    #[test]
    fn plant_zero_is_identity_on_sequences() {
        let c = base_corpus(10);
        let (planted, manifest) = plant_canary(&c, &bank(), "450", 0, 1, 10_000).unwrap();
        assert_eq!(planted.sequences, c.sequences);
        assert!(manifest.positions.is_empty());
    }

    #[test]
    fn plant_450_copies() {
        let c = base_corpus(300);
        let (planted, _) = plant_canary(&c, &bank(), "450", 450, 7, 10_000).unwrap();
        assert_eq!(planted.len(), 750);
        assert_eq!(exact_matches(&planted, "My bank security code is 450"), 450);
    }

    #[test]
    fn plant_marks_labels() {
        let mut c = base_corpus(4);
        c.labels = Some(vec![false; 4]);
        let (planted, m) = plant_canary(&c, &bank(), "123", 2, 3, 10_000).unwrap();
        let labels = planted.labels.unwrap();
        assert_eq!(labels.iter().filter(|&&l| l).count(), 2);
        for p in m.positions {
            assert!(labels[p]);
        }
    }

    #[test]
    fn manifest_roundtrip() {
        let c = base_corpus(5);
        let (_, m) = plant_canary(&c, &bank(), "450", 3, 9, 10_000).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.save(f.path()).unwrap();
        assert_eq!(CanaryManifest::load(f.path()).unwrap(), m);
    }
}
