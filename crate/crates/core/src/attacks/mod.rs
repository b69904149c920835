//! Black-box attacks that only query model perplexities: canary exposure
//! and perplexity-ranking membership inference.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenSequence};
use crate::error::{Error, Result};
use crate::lm::{perplexity, LmParameters};
use crate::rng::{self, tag};
use crate::scalar::Scalar;

/// Number of perplexities `<= planted`, the planted entry included.
pub fn rank_from_perplexities(perplexities: &[f64], planted_index: usize) -> Result<usize> {
    if perplexities.is_empty() {
        return Err(Error::InvalidArgument("empty candidate list".into()));
    }
    let planted = *perplexities.get(planted_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "planted index {planted_index} outside {} candidates",
            perplexities.len()
        ))
    })?;
    if !planted.is_finite() {
        return Err(Error::NonFinite(format!("planted perplexity {planted}")));
    }
    Ok(perplexities.iter().filter(|&&p| p <= planted).count())
}

/// Perplexity of every candidate in list order.
pub fn candidate_perplexities<T: Scalar>(params: &LmParameters<T>, candidates: &[TokenSequence]) -> Result<Vec<f64>> {
    candidates.iter().map(|c| Ok(perplexity(params, c)?.as_f64())).collect()
}

pub fn canary_rank<T: Scalar>(params: &LmParameters<T>, candidates: &[TokenSequence], planted_index: usize) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty candidate list".into()));
    }
    rank_from_perplexities(&candidate_perplexities(params, candidates)?, planted_index)
}

/// `log2 |R| - log2 rank`.
pub fn exposure(rank: usize, space_size: usize) -> Result<f64> {
    if rank == 0 || rank > space_size {
        return Err(Error::InvalidArgument(format!("rank {rank} outside 1..={space_size}")));
    }
    Ok((space_size as f64).log2() - (rank as f64).log2())
}

/// Accuracy of predicting the `n` lowest-perplexity entries of the pooled
/// set as members. Members and non-members are pooled alternately
/// (`m1, n1, m2, n2, ...`) and ties keep pool order, so a constant scorer
/// lands exactly on chance.
pub fn mi_accuracy_from_perplexities(members: &[f64], non_members: &[f64]) -> Result<f64> {
    let n = members.len();
    if n == 0 || n != non_members.len() {
        return Err(Error::InvalidArgument(format!(
            "membership inference needs equal non-empty sets, got {} and {}",
            n,
            non_members.len()
        )));
    }
    let mut pool: Vec<(f64, bool)> = members
        .iter()
        .zip(non_members)
        .flat_map(|(&m, &x)| [(m, true), (x, false)])
        .collect();
    if pool.iter().any(|p| p.0.is_nan()) {
        return Err(Error::NonFinite("membership perplexity".into()));
    }
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    let hits = pool[..n].iter().filter(|p| p.1).count();
    // Each false positive displaces exactly one member, so true negatives
    // equal true positives.
    Ok((2 * hits) as f64 / (2 * n) as f64)
}

pub fn membership_inference<T: Scalar>(
    params: &LmParameters<T>,
    members: &[TokenSequence],
    non_members: &[TokenSequence],
) -> Result<f64> {
    if members.len() != non_members.len() {
        return Err(Error::InvalidArgument(format!(
            "membership inference needs equal sets, got {} and {}",
            members.len(),
            non_members.len()
        )));
    }
    mi_accuracy_from_perplexities(
        &candidate_perplexities(params, members)?,
        &candidate_perplexities(params, non_members)?,
    )
}

/// Seeded sample of `n` members from `train` and `n` non-members from `test`.
/// Texts are deduplicated and any text present in both corpora is excluded,
/// so the two sets never share a sentence.
pub fn build_mi_dataset(
    train: &Corpus,
    test: &Corpus,
    n: usize,
    seed: u64,
) -> Result<(Vec<TokenSequence>, Vec<TokenSequence>)> {
    build_mi_dataset_from(&train.sequences, &test.sequences, n, seed)
}

pub fn build_mi_dataset_from(
    train: &[TokenSequence],
    test: &[TokenSequence],
    n: usize,
    seed: u64,
) -> Result<(Vec<TokenSequence>, Vec<TokenSequence>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("membership set size must be positive".into()));
    }
    let texts = |s: &[TokenSequence]| s.iter().map(|x| x.source_text.clone()).collect::<HashSet<_>>();
    let (train_texts, test_texts) = (texts(train), texts(test));
    let eligible = |seqs: &[TokenSequence], other: &HashSet<String>| {
        let mut seen = HashSet::new();
        seqs.iter()
            .filter(|s| !other.contains(&s.source_text) && seen.insert(s.source_text.clone()))
            .cloned()
            .collect::<Vec<_>>()
    };
    let members = eligible(train, &test_texts);
    let non_members = eligible(test, &train_texts);
    if members.len() < n || non_members.len() < n {
        return Err(Error::InvalidArgument(format!(
            "need {n} distinct members and non-members, have {} and {}",
            members.len(),
            non_members.len()
        )));
    }
    let mut rng = rng::stream(seed, tag::MI_SAMPLE);
    let mut pick = |pool: Vec<TokenSequence>| {
        let mut idx = index::sample(&mut rng, pool.len(), n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pool[i].clone()).collect::<Vec<_>>()
    };
    let members = pick(members);
    let non_members = pick(non_members);
    Ok((members, non_members))
}

/// One attack evaluation of one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub run_id: String,
    pub regime: String,
    pub epoch: usize,
    pub valid_perplexity: f64,
    pub canary_rank: usize,
    pub exposure: f64,
    pub candidate_space_size: usize,
    pub mi_accuracy: f64,
}

pub const ATTACK_CSV_HEADER: &str = "run_id,regime,epoch,valid_perplexity,canary_rank,exposure,mi_accuracy";

impl AttackReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.run_id,
            self.regime,
            self.epoch,
            self.valid_perplexity,
            self.canary_rank,
            self.exposure,
            self.mi_accuracy
        )
    }
}

pub fn write_attack_csv(reports: &[AttackReport], path: &Path) -> Result<()> {
    let mut out = String::from(ATTACK_CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `index,text,perplexity` for every candidate.
pub fn write_perplexity_table(candidates: &[TokenSequence], perplexities: &[f64], path: &Path) -> Result<()> {
    if candidates.len() != perplexities.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} candidates, {} perplexities",
            candidates.len(),
            perplexities.len()
        )));
    }
    let mut out = String::from("index,text,perplexity\n");
    for (i, (c, p)) in candidates.iter().zip(perplexities).enumerate() {
        let _ = writeln!(out, "{i},\"{}\",{p}", c.source_text.replace('"', "\"\""));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
