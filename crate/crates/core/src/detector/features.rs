//! Hashed character and word n-gram features.

use std::hash::Hasher;

use fnv::FnvHasher;

/// Feature extractor layout. Character n-grams occupy `[0, char_dim)` and word
/// n-grams `[char_dim, char_dim + word_dim)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpec {
    pub char_dim: usize,
    pub word_dim: usize,
    pub char_min: usize,
    pub char_max: usize,
    pub word_max: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            char_dim: 1 << 14,
            word_dim: 1 << 12,
            char_min: 3,
            char_max: 5,
            word_max: 2,
        }
    }
}

/// Sparse feature vector: sorted unique indices with values.
pub type SparseVec = Vec<(usize, f64)>;

fn bucket(namespace: u8, gram: &[u8], dim: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write_u8(namespace);
    h.write(gram);
    (h.finish() % dim as u64) as usize
}

/// Lowercases and maps every digit to `0`, so secrets with different fills
/// share features.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .flat_map(char::to_lowercase)
                .map(|c| if c.is_ascii_digit() { '0' } else { c })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        self.char_dim + self.word_dim
    }

    /// L2-normalized hashed n-gram counts.
    pub fn featurize(&self, text: &str) -> SparseVec {
        let norm = normalize(text);
        let mut idx: Vec<usize> = Vec::new();

        let padded: Vec<char> = format!(" {norm} ").chars().collect();
        let mut buf = String::new();
        for n in self.char_min..=self.char_max {
            if n == 0 || padded.len() < n {
                continue;
            }
            for win in padded.windows(n) {
                buf.clear();
                buf.extend(win);
                idx.push(bucket(n as u8, buf.as_bytes(), self.char_dim));
            }
        }

        let words: Vec<&str> = norm.split(' ').filter(|w| !w.is_empty()).collect();
        for n in 1..=self.word_max {
            if words.len() < n {
                continue;
            }
            for win in words.windows(n) {
                let gram = win.join(" ");
                idx.push(self.char_dim + bucket(100 + n as u8, gram.as_bytes(), self.word_dim));
            }
        }

        idx.sort_unstable();
        let mut out: SparseVec = Vec::new();
        for i in idx {
            match out.last_mut() {
                Some((j, v)) if *j == i => *v += 1.0,
                _ => out.push((i, 1.0)),
            }
        }
        let norm2: f64 = out.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm2 > 0.0 {
            for (_, v) in &mut out {
                *v /= norm2;
            }
        }
        out
    }
}
