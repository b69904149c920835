//! Splitting a minibatch into sensitive and non-sensitive parts.

use regex::Regex;

use super::model::DetectorModel;
use crate::corpus::TokenSequence;
use crate::error::Result;

/// Anything that can flag a sequence's text as sensitive.
pub trait SensitivityOracle {
    fn is_sensitive(&self, text: &str) -> bool;
}

impl SensitivityOracle for DetectorModel {
    fn is_sensitive(&self, text: &str) -> bool {
        self.classify_text(text).0.is_sensitive()
    }
}

/// Flags everything; partitioning with it reproduces full DP-SGD.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysSensitive;

/// Flags nothing; partitioning with it reproduces plain SGD.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverSensitive;

impl SensitivityOracle for AlwaysSensitive {
    fn is_sensitive(&self, _: &str) -> bool {
        true
    }
}

impl SensitivityOracle for NeverSensitive {
    fn is_sensitive(&self, _: &str) -> bool {
        false
    }
}

/// Format-based baseline: a sequence is sensitive when its lowercased text
/// matches any of the patterns.
#[derive(Debug, Clone)]
pub struct FormatDetector {
    patterns: Vec<Regex>,
}

impl FormatDetector {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self> {
        let patterns = patterns
            .iter()
            .map(|p| Regex::new(p.as_ref()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { patterns })
    }

    pub fn patterns(&self) -> impl Iterator<Item = &str> {
        self.patterns.iter().map(Regex::as_str)
    }
}

impl SensitivityOracle for FormatDetector {
    fn is_sensitive(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        self.patterns.iter().any(|p| p.is_match(&lower))
    }
}

impl<O: SensitivityOracle + ?Sized> SensitivityOracle for &O {
    fn is_sensitive(&self, text: &str) -> bool {
        (**self).is_sensitive(text)
    }
}

impl<O: SensitivityOracle + ?Sized> SensitivityOracle for Box<O> {
    fn is_sensitive(&self, text: &str) -> bool {
        (**self).is_sensitive(text)
    }
}

/// `(B_S, B_NS)`: both parts keep the batch order.
pub fn partition_batch<'a, O: SensitivityOracle + ?Sized>(
    oracle: &O,
    batch: &[&'a TokenSequence],
) -> (Vec<&'a TokenSequence>, Vec<&'a TokenSequence>) {
    batch.iter().partition(|s| oracle.is_sensitive(&s.source_text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs() -> Vec<TokenSequence> {
        ["a b", "my code is 123", "c d", "the pin is 999"]
            .iter()
            .enumerate()
            .map(|(i, t)| TokenSequence::new(vec![i, i + 1], *t))
            .collect()
    }

    #[test]
    fn stubs() {
        let s = seqs();
        let batch: Vec<&TokenSequence> = s.iter().collect();
        let (b_s, b_ns) = partition_batch(&AlwaysSensitive, &batch);
        assert_eq!(b_s, batch);
        assert!(b_ns.is_empty());
        let (b_s, b_ns) = partition_batch(&NeverSensitive, &batch);
        assert!(b_s.is_empty());
        assert_eq!(b_ns, batch);
    }

    #[test]
    fn regex_partition_preserves_order() {
        let s = seqs();
        let batch: Vec<&TokenSequence> = s.iter().rev().collect();
        let det = FormatDetector::new(&[r"\bis\s+\d{3}\b"]).unwrap();
        let (b_s, b_ns) = partition_batch(&det, &batch);
        let texts = |v: &[&TokenSequence]| v.iter().map(|s| s.source_text.clone()).collect::<Vec<_>>();
        assert_eq!(texts(&b_s), ["the pin is 999", "my code is 123"]);
        assert_eq!(texts(&b_ns), ["c d", "a b"]);
    }

    #[test]
    fn bad_pattern() {
        assert!(FormatDetector::new(&["("]).is_err());
    }
}
