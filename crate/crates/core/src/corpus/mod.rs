//! Tokenized corpora, vocabularies, deterministic splits and minibatch order.

mod canary;

pub use canary::{enumerate_canaries, plant_canary, CanaryManifest, CanaryTemplate, DEFAULT_ENUMERATION_CAP};

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, tag};

pub const UNK: &str = "<unk>";
pub const DEFAULT_MAX_LEN: usize = 64;

/// Whitespace word tokenizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tokenizer {
    pub lowercase: bool,
    /// Lines longer than this are truncated.
    pub max_len: usize,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self {
            lowercase: true,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .take(self.max_len)
            .map(|w| {
                if self.lowercase {
                    w.to_lowercase()
                } else {
                    w.to_string()
                }
            })
            .collect()
    }
}

/// Bijective token/id map. Id 0 is reserved for [`UNK`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Vocabulary containing only the unknown token.
    pub fn new() -> Self {
        let mut v = Self {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        v.insert(UNK);
        v
    }

    /// Builds a vocabulary from token occurrences, keeping those seen at least
    /// `min_count` times. Ids are assigned by descending frequency, ties broken
    /// lexicographically.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && t != UNK)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut v = Self::new();
        for (t, _) in kept {
            v.insert(t);
        }
        v
    }

    pub fn unk_id(&self) -> usize {
        0
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// Returns the id of `token`, appending it when absent.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        let id = self.id_to_token.len();
        self.id_to_token.push(token.to_string());
        self.token_to_id.insert(token.to_string(), id);
        id
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(self.unk_id()))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.id_to_token {
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut v = Self {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        for (line_no, line) in text.lines().enumerate() {
            if line.is_empty() || line.contains(char::is_whitespace) {
                return Err(Error::format(path, format!("line {}: invalid token", line_no + 1)));
            }
            if v.contains(line) {
                return Err(Error::format(path, format!("line {}: duplicate token", line_no + 1)));
            }
            v.insert(line);
        }
        if v.token(0) != Some(UNK) {
            return Err(Error::format(path, "first line must be the unknown token"));
        }
        Ok(v)
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

/// One encoded line of text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    /// Original line, kept for the sensitivity detector.
    pub source_text: String,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>, source_text: impl Into<String>) -> Self {
        Self {
            ids,
            source_text: source_text.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub sequences: Vec<TokenSequence>,
    pub vocabulary: Vocabulary,
    /// Ground-truth sensitivity, when known.
    pub labels: Option<Vec<bool>>,
    pub tokenizer: Tokenizer,
}

/// Options for [`load_corpus_with`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub tokenizer: Tokenizer,
    pub min_count: usize,
    /// Optional file with one `0`/`1` label per corpus line.
    pub labels: Option<PathBuf>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            tokenizer: Tokenizer::default(),
            min_count: 1,
            labels: None,
        }
    }
}

/// Loads a one-sequence-per-line UTF-8 file.
pub fn load_corpus(path: &Path, lowercase: bool, min_count: usize) -> Result<Corpus> {
    load_corpus_with(
        path,
        &LoadOptions {
            tokenizer: Tokenizer {
                lowercase,
                max_len: DEFAULT_MAX_LEN,
            },
            min_count,
            labels: None,
        },
    )
}

/// Lines with fewer than two tokens carry no prediction target and are
/// dropped along with their labels.
pub fn load_corpus_with(path: &Path, opts: &LoadOptions) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    let raw_labels = match &opts.labels {
        Some(p) => Some(read_labels(p, lines.len())?),
        None => None,
    };

    let mut kept_lines = Vec::new();
    let mut kept_tokens = Vec::new();
    let mut kept_labels = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let toks = opts.tokenizer.tokenize(line);
        if toks.len() < 2 {
            continue;
        }
        kept_lines.push(line.trim());
        kept_tokens.push(toks);
        if let Some(l) = &raw_labels {
            kept_labels.push(l[i]);
        }
    }
    if kept_tokens.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let vocabulary = Vocabulary::from_tokens(
        kept_tokens.iter().flat_map(|t| t.iter().map(String::as_str)),
        opts.min_count.max(1),
    );
    let sequences = kept_lines
        .into_iter()
        .zip(&kept_tokens)
        .map(|(line, toks)| TokenSequence::new(vocabulary.encode(toks), line))
        .collect();
    Ok(Corpus {
        sequences,
        vocabulary,
        labels: raw_labels.map(|_| kept_labels),
        tokenizer: opts.tokenizer,
    })
}

fn read_labels(path: &Path, expected: usize) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels = text
        .lines()
        .enumerate()
        .map(|(i, l)| match l.trim() {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(Error::format(path, format!("line {}: bad label {other:?}", i + 1))),
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != expected {
        return Err(Error::format(
            path,
            format!("{} labels for {} corpus lines", labels.len(), expected),
        ));
    }
    Ok(labels)
}

impl Corpus {
    /// Encodes `text` under this corpus' tokenizer and vocabulary.
    pub fn encode_text(&self, text: &str) -> TokenSequence {
        let toks = self.tokenizer.tokenize(text);
        TokenSequence::new(self.vocabulary.encode(&toks), text.trim())
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<bool> {
        self.labels.as_ref().map(|l| l[i])
    }

    fn subset(&self, idx: &[usize]) -> Corpus {
        Corpus {
            sequences: idx.iter().map(|&i| self.sequences[i].clone()).collect(),
            vocabulary: self.vocabulary.clone(),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            tokenizer: self.tokenizer,
        }
    }

    /// Sequences whose ground-truth label equals `sensitive`.
    pub fn with_label(&self, sensitive: bool) -> Option<Corpus> {
        let labels = self.labels.as_ref()?;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| labels[i] == sensitive).collect();
        Some(self.subset(&idx))
    }
}

/// Seeded random partition into `(train, test)` of sizes `ceil(f*N)` and the
/// remainder. Each side keeps the original relative order.
pub fn split(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = corpus.len();
    // The epsilon keeps 0.7 * 10 from rounding up to 8.
    let n_train = ((train_fraction * n as f64 - 1e-9).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, tag::SPLIT));
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((corpus.subset(&train_idx), corpus.subset(&test_idx)))
}

/// Epoch order over a corpus: shuffled by `(seed, epoch)`, chunked into
/// fixed-size batches with a possibly short final batch.
#[derive(Debug, Clone)]
pub struct Minibatches {
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Minibatches {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(batch)
    }
}

pub fn minibatches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Minibatches> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, tag::EPOCH_BASE + epoch));
    Ok(Minibatches {
        order,
        batch_size,
        pos: 0,
    })
}
