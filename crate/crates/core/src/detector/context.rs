//! Shortest suffix context that, after paraphrasing, still predicts a token.

use super::phi::{apply_phi, AugmentationConfig};
use crate::corpus::{TokenSequence, Tokenizer, Vocabulary};
use crate::error::{Error, Result};
use crate::lm::{next_token_probs, LmParameters};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaContext {
    /// Suffix `x_start .. x_{i-1}` (1-based; `len == 0` is the empty context).
    Found {
        start: usize,
        len: usize,
        ids: Vec<usize>,
        gap: f64,
    },
    /// No suffix, including the full prefix, stays within `alpha` once
    /// paraphrased.
    NotFound { best_gap: f64 },
}

impl AlphaContext {
    pub fn len(&self) -> Option<usize> {
        match self {
            AlphaContext::Found { len, .. } => Some(*len),
            AlphaContext::NotFound { .. } => None,
        }
    }
}

/// Gap `|p(x_i | x_1..x_{i-1}) - p(x_i | phi(s))|` for every suffix `s` of
/// the prefix, indexed by suffix length `0..i`.
pub fn suffix_gaps<T: Scalar>(
    params: &LmParameters<T>,
    seq: &TokenSequence,
    target_index: usize,
    cfg: &AugmentationConfig,
    vocab: &Vocabulary,
    tokenizer: &Tokenizer,
) -> Result<Vec<f64>> {
    if target_index == 0 || target_index > seq.ids.len() {
        return Err(Error::InvalidArgument(format!(
            "target index {target_index} outside 1..={}",
            seq.ids.len()
        )));
    }
    let prefix = &seq.ids[..target_index - 1];
    let target = seq.ids[target_index - 1];
    let reference = next_token_probs(params, prefix)?[target].as_f64();
    let unbounded = Tokenizer {
        max_len: usize::MAX,
        ..*tokenizer
    };
    (0..=prefix.len())
        .map(|len| {
            let suffix = &prefix[prefix.len() - len..];
            let ids = if len == 0 {
                Vec::new()
            } else {
                let text = apply_phi(&vocab.decode(suffix), cfg, 0);
                vocab.encode(&unbounded.tokenize(&text))
            };
            let p = next_token_probs(params, &ids)?[target].as_f64();
            Ok((reference - p).abs())
        })
        .collect()
}

/// Shortest suffix of `x_1..x_{i-1}` whose paraphrase keeps the probability
/// of `x_i` within `alpha` of its full-prefix value. `target_index` is
/// 1-based.
pub fn alpha_context<T: Scalar>(
    params: &LmParameters<T>,
    seq: &TokenSequence,
    target_index: usize,
    alpha: f64,
    cfg: &AugmentationConfig,
    vocab: &Vocabulary,
    tokenizer: &Tokenizer,
) -> Result<AlphaContext> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
    }
    let gaps = suffix_gaps(params, seq, target_index, cfg, vocab, tokenizer)?;
    let prefix_len = target_index - 1;
    match gaps.iter().position(|&g| g <= alpha) {
        Some(len) => Ok(AlphaContext::Found {
            start: target_index - len,
            len,
            ids: seq.ids[prefix_len - len..prefix_len].to_vec(),
            gap: gaps[len],
        }),
        None => Ok(AlphaContext::NotFound {
            best_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        }),
    }
}
