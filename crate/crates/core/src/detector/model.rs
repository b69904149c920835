//! Logistic sensitive-sequence classifier and its training data.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};

use super::features::{normalize, FeatureSpec, SparseVec};
use super::phi::{apply_phi, AugmentationConfig};
use crate::corpus::{Corpus, TokenSequence};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Sensitive,
    NonSensitive,
}

impl Label {
    pub fn is_sensitive(self) -> bool {
        self == Label::Sensitive
    }
}

/// Texts with binary labels (`true` = sensitive).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub examples: Vec<(String, bool)>,
}

impl LabeledDataset {
    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.1).count()
    }

    pub fn negatives(&self) -> usize {
        self.examples.len() - self.positives()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetOptions {
    /// Paraphrases generated per seed sentence.
    pub variants_per_seed: usize,
    /// Upper bound on negatives sampled from the corpus.
    pub max_negatives: usize,
    pub seed: u64,
}

/// Positives are the seed sentences plus their paraphrases; negatives are
/// sampled from `negatives`. Both classes are deduplicated and any negative
/// whose normalized text equals a positive is dropped.
pub fn build_detector_dataset(
    sensitive_seeds: &[String],
    negatives: &Corpus,
    cfg: &AugmentationConfig,
    opts: &DatasetOptions,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    if sensitive_seeds.is_empty() {
        return Err(Error::DegenerateDataset("no sensitive seeds".into()));
    }
    let mut seen = HashSet::new();
    let mut positives = Vec::new();
    for s in sensitive_seeds {
        let variants = std::iter::once(s.clone())
            .chain((0..opts.variants_per_seed as u64).map(|k| apply_phi(s, cfg, k)));
        for v in variants {
            if seen.insert(normalize(&v)) {
                positives.push(v);
            }
        }
    }

    let mut pool: Vec<&str> = Vec::new();
    let mut pool_seen = HashSet::new();
    for seq in &negatives.sequences {
        let key = normalize(&seq.source_text);
        if !seen.contains(&key) && pool_seen.insert(key) {
            pool.push(&seq.source_text);
        }
    }
    if pool.is_empty() {
        return Err(Error::DegenerateDataset("no negatives after deduplication".into()));
    }
    let take = opts.max_negatives.min(pool.len());
    let mut picked = index::sample(&mut rng::stream(opts.seed, tag::NEGATIVES), pool.len(), take).into_vec();
    picked.sort_unstable();

    let mut examples: Vec<(String, bool)> = positives.into_iter().map(|p| (p, true)).collect();
    examples.extend(picked.into_iter().map(|i| (pool[i].to_string(), false)));
    Ok(LabeledDataset { examples })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub eta: f64,
    pub seed: u64,
    /// Largest validation false-positive rate the threshold may allow.
    pub fpr_cap: f64,
    pub l2: f64,
    pub features: FeatureSpec,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 300,
            eta: 2.0,
            seed: 0,
            fpr_cap: 0.05,
            l2: 1e-4,
            features: FeatureSpec::default(),
        }
    }
}

/// Rates measured on the held-out fold.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeldOutMetrics {
    pub positives: usize,
    pub negatives: usize,
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub features: FeatureSpec,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Sequences scoring at or above this are sensitive.
    pub threshold: f64,
    /// True-positive rate on the held-out fold.
    pub measured_gamma: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn sparse_dot(w: &[f64], x: &SparseVec) -> f64 {
    x.iter().map(|&(i, v)| w[i] * v).sum()
}

impl DetectorModel {
    /// `sigmoid(w . features(text) + b)`.
    pub fn score(&self, text: &str) -> f64 {
        sigmoid(sparse_dot(&self.weights, &self.features.featurize(text)) + self.bias)
    }

    pub fn classify_text(&self, text: &str) -> (Label, f64) {
        let s = self.score(text);
        let label = if s >= self.threshold {
            Label::Sensitive
        } else {
            Label::NonSensitive
        };
        (label, s)
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self {
            threshold,
            ..self.clone()
        }
    }
}

/// Classifies the sequence's source text.
pub fn classify(model: &DetectorModel, seq: &TokenSequence) -> (Label, f64) {
    model.classify_text(&seq.source_text)
}

/// Fraction of `held_out_positives` labelled sensitive.
pub fn estimate_gamma(model: &DetectorModel, held_out_positives: &[String]) -> Result<f64> {
    if held_out_positives.is_empty() {
        return Err(Error::InvalidArgument("gamma needs at least one positive".into()));
    }
    let hits = held_out_positives
        .iter()
        .filter(|t| model.classify_text(t).0.is_sensitive())
        .count();
    Ok(hits as f64 / held_out_positives.len() as f64)
}

/// Stratified 60/20/20 split of one class into train, validation, held-out.
fn three_way(mut idx: Vec<usize>, rng: &mut rng::SeededRng) -> Result<[Vec<usize>; 3]> {
    if idx.len() < 3 {
        return Err(Error::DegenerateDataset(format!(
            "each class needs at least 3 examples, found {}",
            idx.len()
        )));
    }
    idx.shuffle(rng);
    let n = idx.len();
    let n_val = ((n as f64 * 0.2).round() as usize).max(1);
    let n_held = ((n as f64 * 0.2).round() as usize).max(1);
    let n_train = n - n_val - n_held;
    if n_train == 0 {
        return Err(Error::DegenerateDataset("class too small to split".into()));
    }
    let held = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok([idx, val, held])
}

/// Threshold with the highest validation TPR among those keeping validation
/// FPR within `cap`, placed midway between the highest negative score it
/// must exclude and the lowest positive score it keeps.
fn choose_threshold(pos: &[f64], neg: &[f64], cap: f64) -> f64 {
    let mut neg_sorted = neg.to_vec();
    neg_sorted.sort_by(|a, b| b.total_cmp(a));
    let allowed = (cap * neg.len() as f64 + 1e-9).floor() as usize;
    let floor = if allowed >= neg_sorted.len() {
        0.0
    } else {
        neg_sorted[allowed]
    };
    let kept_min = pos
        .iter()
        .copied()
        .filter(|&p| p > floor)
        .fold(f64::INFINITY, f64::min);
    if kept_min.is_finite() {
        0.5 * (floor + kept_min)
    } else {
        // No positive clears the FPR constraint.
        f64::min(1.0, floor + f64::EPSILON)
    }
}

/// Trains a class-balanced L2-regularized logistic regression by full-batch
/// gradient descent, then picks the decision threshold on the validation
/// fold and measures gamma on the held-out fold.
pub fn train_detector(dataset: &LabeledDataset, opts: &TrainOptions) -> Result<(DetectorModel, HeldOutMetrics)> {
    let pos_idx: Vec<usize> = (0..dataset.examples.len()).filter(|&i| dataset.examples[i].1).collect();
    let neg_idx: Vec<usize> = (0..dataset.examples.len()).filter(|&i| !dataset.examples[i].1).collect();
    if pos_idx.is_empty() || neg_idx.is_empty() {
        return Err(Error::DegenerateDataset("both labels must be present".into()));
    }
    let mut rng = rng::stream(opts.seed, tag::DETECTOR);
    let [pos_train, pos_val, pos_held] = three_way(pos_idx, &mut rng)?;
    let [neg_train, neg_val, neg_held] = three_way(neg_idx, &mut rng)?;

    let feats: Vec<SparseVec> = dataset
        .examples
        .iter()
        .map(|(t, _)| opts.features.featurize(t))
        .collect();
    let dim = opts.features.dim();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let w_pos = 0.5 / pos_train.len() as f64;
    let w_neg = 0.5 / neg_train.len() as f64;
    let train: Vec<(usize, f64, f64)> = pos_train
        .iter()
        .map(|&i| (i, 1.0, w_pos))
        .chain(neg_train.iter().map(|&i| (i, 0.0, w_neg)))
        .collect();
    let mut gw = vec![0.0; dim];
    for _ in 0..opts.epochs {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for &(i, y, weight) in &train {
            let err = weight * (sigmoid(sparse_dot(&w, &feats[i]) + b) - y);
            for &(j, v) in &feats[i] {
                gw[j] += err * v;
            }
            gb += err;
        }
        for (wj, gj) in w.iter_mut().zip(&gw) {
            *wj -= opts.eta * (gj + opts.l2 * *wj);
        }
        b -= opts.eta * gb;
    }

    let mut model = DetectorModel {
        features: opts.features,
        weights: w,
        bias: b,
        threshold: 0.5,
        measured_gamma: 0.0,
    };
    let scores = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| model.score(&dataset.examples[i].0)).collect() };
    model.threshold = choose_threshold(&scores(&pos_val), &scores(&neg_val), opts.fpr_cap);

    let held_pos: Vec<String> = pos_held.iter().map(|&i| dataset.examples[i].0.clone()).collect();
    model.measured_gamma = estimate_gamma(&model, &held_pos)?;
    let fp = neg_held
        .iter()
        .filter(|&&i| model.classify_text(&dataset.examples[i].0).0.is_sensitive())
        .count();
    let metrics = HeldOutMetrics {
        positives: pos_held.len(),
        negatives: neg_held.len(),
        true_positive_rate: model.measured_gamma,
        false_positive_rate: fp as f64 / neg_held.len() as f64,
    };
    Ok((model, metrics))
}

const DETECTOR_MAGIC: &str = "CADPDET1";

/// Text header line followed by the weights and bias as little-endian `f64`.
pub fn save_detector(model: &DetectorModel, path: &Path) -> Result<()> {
    let f = &model.features;
    let header = format!(
        "{DETECTOR_MAGIC} char_dim={} word_dim={} char_min={} char_max={} word_max={} threshold={} measured_gamma={}\n",
        f.char_dim, f.word_dim, f.char_min, f.char_max, f.word_max, model.threshold, model.measured_gamma
    );
    let mut out = header.into_bytes();
    for v in model.weights.iter().chain(std::iter::once(&model.bias)) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_detector(path: &Path) -> Result<DetectorModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |r: &str| Error::Checkpoint(format!("{}: {r}", path.display()));
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8"))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(DETECTOR_MAGIC) {
        return Err(bad("wrong magic"));
    }
    let mut get = |key: &str| -> Result<String> {
        let part = parts.next().ok_or_else(|| bad("truncated header"))?;
        part.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| bad(&format!("expected {key}")))
    };
    let num = |s: String| s.parse::<usize>().map_err(|_| bad("bad dimension"));
    let float = |s: String| s.parse::<f64>().map_err(|_| bad("bad number"));
    let features = FeatureSpec {
        char_dim: num(get("char_dim")?)?,
        word_dim: num(get("word_dim")?)?,
        char_min: num(get("char_min")?)?,
        char_max: num(get("char_max")?)?,
        word_max: num(get("word_max")?)?,
    };
    let threshold = float(get("threshold")?)?;
    let measured_gamma = float(get("measured_gamma")?)?;
    let body = &bytes[nl + 1..];
    if body.len() != 8 * (features.dim() + 1) {
        return Err(bad("weight block does not match the header dimensions"));
    }
    let mut vals: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let bias = vals.pop().unwrap();
    Ok(DetectorModel {
        features,
        weights: vals,
        bias,
        threshold,
        measured_gamma,
    })
}
