//! `detector-train` configuration and run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::parse_kv;
use crate::corpus::{load_corpus_with, LoadOptions, Tokenizer};
use crate::detector::{
    build_detector_dataset, save_detector, train_detector, AugmentationConfig, DatasetOptions, DetectorModel,
    FeatureSpec, HeldOutMetrics, SynonymTable, TrainOptions,
};
use crate::error::{Error, Result};

pub const DETECTOR_FILE: &str = "detector.bin";
pub const DETECTOR_METRICS_FILE: &str = "detector_metrics.json";

pub const DETECTOR_KEYS: &[(&str, &str)] = &[
    ("seeds", "sensitive seed sentences, one per line (required)"),
    ("negatives", "neutral sentences, one per line (required)"),
    ("synonyms", "synonym table for paraphrase augmentation (required)"),
    ("substitution_rate", "paraphraser substitution probability (default 0.5)"),
    ("variants_per_seed", "paraphrases per seed (default 10)"),
    ("max_negatives", "negatives sampled (default 1000)"),
    ("epochs", "gradient-descent epochs (default 300)"),
    ("learning_rate", "step size (default 2.0)"),
    ("l2", "weight decay (default 1e-4)"),
    ("fpr_cap", "largest validation false-positive rate (default 0.05)"),
    ("char_dim", "character n-gram buckets (default 16384)"),
    ("word_dim", "word n-gram buckets (default 4096)"),
    ("seed", "split, sampling and paraphrase seed (required)"),
    ("output_dir", "directory for the checkpoint and metrics (default detector)"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub seeds: PathBuf,
    pub negatives: PathBuf,
    pub synonyms: PathBuf,
    pub substitution_rate: f64,
    pub variants_per_seed: usize,
    pub max_negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub fpr_cap: f64,
    pub char_dim: usize,
    pub word_dim: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl DetectorConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let map = parse_kv(text, DETECTOR_KEYS)?;
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let req = |k: &str| map.get(k).ok_or_else(|| Error::Config(format!("missing required key {k:?}")));
        let num = |k: &str, default: f64| -> Result<f64> {
            map.get(k)
                .map_or(Ok(default), |v| v.parse().map_err(|_| Error::Config(format!("{k}: cannot parse {v:?}"))))
        };
        let count = |k: &str, default: usize| -> Result<usize> {
            map.get(k)
                .map_or(Ok(default), |v| v.parse().map_err(|_| Error::Config(format!("{k}: cannot parse {v:?}"))))
        };
        let defaults = FeatureSpec::default();
        let cfg = Self {
            seeds: resolve(req("seeds")?),
            negatives: resolve(req("negatives")?),
            synonyms: resolve(req("synonyms")?),
            substitution_rate: num("substitution_rate", 0.5)?,
            variants_per_seed: count("variants_per_seed", 10)?,
            max_negatives: count("max_negatives", 1000)?,
            epochs: count("epochs", 300)?,
            learning_rate: num("learning_rate", 2.0)?,
            l2: num("l2", 1e-4)?,
            fpr_cap: num("fpr_cap", 0.05)?,
            char_dim: count("char_dim", defaults.char_dim)?,
            word_dim: count("word_dim", defaults.word_dim)?,
            seed: req("seed")?
                .parse()
                .map_err(|_| Error::Config("seed: expected an unsigned integer".into()))?,
            output_dir: map.get("output_dir").map_or_else(|| base.join("detector"), |p| resolve(p)),
        };
        if cfg.char_dim == 0 || cfg.word_dim == 0 {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.fpr_cap) {
            return Err(Error::Config(format!("fpr_cap must lie in [0, 1], got {}", cfg.fpr_cap)));
        }
        Ok(cfg)
    }

    pub fn augmentation(&self) -> Result<AugmentationConfig> {
        let aug = AugmentationConfig {
            synonyms: SynonymTable::load(&self.synonyms)?,
            substitution_rate: self.substitution_rate,
            passes: self.variants_per_seed,
            seed: self.seed,
        };
        aug.validate()?;
        Ok(aug)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub positives: usize,
    pub negatives: usize,
    pub held_out_positives: usize,
    pub held_out_negatives: usize,
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
    pub threshold: f64,
    pub checkpoint: String,
}

/// Builds the augmented dataset, trains, and writes `detector.bin` with a
/// metrics file into the output directory.
pub fn train_detector_from_config(cfg: &DetectorConfig) -> Result<(DetectorModel, HeldOutMetrics, DetectorReport)> {
    let seeds_text = fs::read_to_string(&cfg.seeds).map_err(|e| Error::io(&cfg.seeds, e))?;
    let seeds: Vec<String> = seeds_text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    let negatives = load_corpus_with(
        &cfg.negatives,
        &LoadOptions {
            tokenizer: Tokenizer::default(),
            min_count: 1,
            labels: None,
        },
    )?;
    let aug = cfg.augmentation()?;
    let dataset = build_detector_dataset(
        &seeds,
        &negatives,
        &aug,
        &DatasetOptions {
            variants_per_seed: cfg.variants_per_seed,
            max_negatives: cfg.max_negatives,
            seed: cfg.seed,
        },
    )?;
    let opts = TrainOptions {
        epochs: cfg.epochs,
        eta: cfg.learning_rate,
        seed: cfg.seed,
        fpr_cap: cfg.fpr_cap,
        l2: cfg.l2,
        features: FeatureSpec {
            char_dim: cfg.char_dim,
            word_dim: cfg.word_dim,
            ..FeatureSpec::default()
        },
    };
    let (model, metrics) = train_detector(&dataset, &opts)?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    save_detector(&model, &cfg.output_dir.join(DETECTOR_FILE))?;
    let report = DetectorReport {
        positives: dataset.positives(),
        negatives: dataset.negatives(),
        held_out_positives: metrics.positives,
        held_out_negatives: metrics.negatives,
        true_positive_rate: metrics.true_positive_rate,
        false_positive_rate: metrics.false_positive_rate,
        threshold: model.threshold,
        checkpoint: DETECTOR_FILE.to_string(),
    };
    let path = cfg.output_dir.join(DETECTOR_METRICS_FILE);
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok((model, metrics, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_reject() {
        let text = "seeds = s.txt\nnegatives = n.txt\nsynonyms = syn.txt\nseed = 4\n";
        let c = DetectorConfig::parse(text, Path::new("/d")).unwrap();
        assert_eq!(c.seeds, PathBuf::from("/d/s.txt"));
        assert_eq!(c.output_dir, PathBuf::from("/d/detector"));
        assert_eq!(c.variants_per_seed, 10);
        assert!(DetectorConfig::parse(&format!("{text}bogus = 1\n"), Path::new(".")).is_err());
        assert!(DetectorConfig::parse("seeds = s\n", Path::new(".")).is_err());
        assert!(DetectorConfig::parse(&format!("{text}fpr_cap = 2\n"), Path::new(".")).is_err());
    }
}
