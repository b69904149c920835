//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_ENUMERATION_CAP;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Plain SGD on every batch.
    Nodp,
    /// Private step on every batch.
    Dpsgd,
    /// Private step on sequences matching a secret-format pattern.
    Sdpsgd,
    /// Private step on sequences the detector flags.
    Cadp,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Nodp, Regime::Dpsgd, Regime::Sdpsgd, Regime::Cadp];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Nodp => "nodp",
            Regime::Dpsgd => "dpsgd",
            Regime::Sdpsgd => "sdpsgd",
            Regime::Cadp => "cadp",
        }
    }

    pub fn has_private_steps(self) -> bool {
        self != Regime::Nodp
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown regime {s:?}")))
    }
}

/// Which detector partitions batches in the cadp regime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectorChoice {
    Model(PathBuf),
    AlwaysSensitive,
    NeverSensitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackSchedule {
    Final,
    EveryEpoch,
    None,
}

/// Which ground-truth population membership inference samples from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiPopulation {
    Sensitive,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanaryConfig {
    pub prefix: String,
    pub alphabet: String,
    pub slots: usize,
    pub fill: String,
    pub count: usize,
}

/// Every field of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub regime: Regime,
    pub corpus: PathBuf,
    pub labels: Option<PathBuf>,
    pub lowercase: bool,
    pub min_count: usize,
    pub max_len: usize,
    pub train_fraction: f64,
    pub canary: Option<CanaryConfig>,
    pub enumeration_cap: usize,
    pub d_emb: usize,
    pub d_hid: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub sigma: f64,
    pub clip: f64,
    pub delta: f64,
    pub alpha: f64,
    pub private_learning_rate: f64,
    pub detector: Option<DetectorChoice>,
    pub secret_pattern: Vec<String>,
    /// Detection rate assumed for the pattern baseline.
    pub gamma: f64,
    pub synonyms: Option<PathBuf>,
    pub substitution_rate: f64,
    pub phi_seed: u64,
    pub mi_n: usize,
    pub mi_population: MiPopulation,
    pub attacks: AttackSchedule,
    pub data_seed: u64,
    pub init_seed: u64,
    pub noise_seed: u64,
    pub mi_seed: u64,
    pub output_dir: PathBuf,
}

pub const DEFAULT_SECRET_PATTERN: &str = r"\bis\s+\d{3}\b";

/// Every accepted key with a one-line description, in documentation order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("run_id", "name used in reports (default: config file stem)"),
    ("regime", "nodp | dpsgd | sdpsgd | cadp (required)"),
    ("corpus", "one sequence per line (required)"),
    ("labels", "optional ground-truth file, one 0/1 per corpus line"),
    ("lowercase", "true | false (default true)"),
    ("min_count", "rarer tokens map to <unk> (default 1)"),
    ("max_len", "tokens kept per line (default 64)"),
    ("train_fraction", "share of lines in the training split (default 0.8)"),
    ("canary_prefix", "canary text before the slot; enables planting"),
    ("canary_alphabet", "slot characters (default 0123456789)"),
    ("canary_slots", "slot length (default 3)"),
    ("canary_fill", "planted fill (required with canary_prefix)"),
    ("canary_count", "copies planted into the training split (default 50)"),
    ("enumeration_cap", "largest candidate space enumerated (default 10000)"),
    ("d_emb", "embedding width (default 64)"),
    ("d_hid", "LSTM hidden width (default 64)"),
    ("epochs", "training epochs (default 20)"),
    ("batch_size", "minibatch size (default 32)"),
    ("learning_rate", "SGD step size for plain updates (default 1.0)"),
    ("sigma", "noise multiplier (default 1.0)"),
    ("clip", "per-example L2 clipping bound (default 1.0)"),
    ("delta", "target delta (default 1e-5)"),
    ("alpha", "Renyi order (default 2)"),
    ("private_learning_rate", "step size for private updates (default learning_rate)"),
    ("detector", "cadp: detector checkpoint path, always_sensitive or never_sensitive"),
    ("secret_pattern", "sdpsgd: regex over lowercased text; repeat the key for more"),
    ("gamma", "sdpsgd: detection rate assumed for the budget (default 1.0)"),
    ("synonyms", "synonym table for the paraphraser used by context audits"),
    ("substitution_rate", "paraphraser substitution probability (default 0.5)"),
    ("phi_seed", "paraphraser seed (default data_seed)"),
    ("mi_n", "membership-inference set size per side (default 50)"),
    ("mi_population", "sensitive | all (default sensitive when labels exist)"),
    ("mi_seed", "membership sample seed (default data_seed)"),
    ("attacks", "final | every_epoch | none (default final)"),
    ("data_seed", "split, planting and shuffling seed (required)"),
    ("init_seed", "parameter initialisation seed (required)"),
    ("noise_seed", "privacy noise seed (required)"),
    ("output_dir", "run directory (default runs/<run_id>)"),
];

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// only `secret_pattern` may repeat.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !CONFIG_KEYS.iter().any(|(key, _)| *key == k) {
            return Err(Error::Config(format!("line {}: unknown key {k:?}", n + 1)));
        }
        if k != "secret_pattern" && out.iter().any(|(seen, _)| seen == k) {
            return Err(Error::Config(format!("line {}: duplicate key {k:?}", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Parses a config whose keys must all come from `keys` and may not repeat.
pub fn parse_kv(text: &str, keys: &[(&str, &str)]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !keys.iter().any(|(key, _)| *key == k) {
            return Err(Error::Config(format!("line {}: unknown key {k:?}", n + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k:?}", n + 1)));
        }
    }
    Ok(map)
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl ExperimentConfig {
    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        Self::parse(&text, base, stem)
    }

    pub fn parse(text: &str, base: &Path, default_run_id: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        let mut patterns = Vec::new();
        for (k, v) in &pairs {
            if k == "secret_pattern" {
                patterns.push(v.clone());
            } else {
                map.insert(k, v);
            }
        }
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let req = |k: &str| -> Result<&str> {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::Config(format!("missing required key {k:?}")))
        };
        fn opt<T: FromStr>(map: &BTreeMap<&str, &str>, k: &str, default: T) -> Result<T> {
            map.get(k).map_or(Ok(default), |v| parse_value(k, v))
        }

        let run_id = map.get("run_id").map_or(default_run_id.to_string(), |s| s.to_string());
        if run_id.is_empty() || run_id.contains([',', '"', '\n']) {
            return Err(Error::Config(format!("run_id {run_id:?} must be non-empty without commas or quotes")));
        }
        let regime: Regime = req("regime")?.parse()?;
        let labels = map.get("labels").map(|p| resolve(p));

        let canary = match map.get("canary_prefix") {
            Some(prefix) => Some(CanaryConfig {
                prefix: prefix.to_string(),
                alphabet: map.get("canary_alphabet").unwrap_or(&"0123456789").to_string(),
                slots: opt(&map, "canary_slots", 3)?,
                fill: req("canary_fill")?.to_string(),
                count: opt(&map, "canary_count", 50)?,
            }),
            None => {
                if let Some(k) = ["canary_alphabet", "canary_slots", "canary_fill", "canary_count"]
                    .into_iter()
                    .find(|k| map.contains_key(k))
                {
                    return Err(Error::Config(format!("{k} given without canary_prefix")));
                }
                None
            }
        };

        let learning_rate = opt(&map, "learning_rate", 1.0)?;
        let detector = match map.get("detector") {
            None => None,
            Some(&"always_sensitive") => Some(DetectorChoice::AlwaysSensitive),
            Some(&"never_sensitive") => Some(DetectorChoice::NeverSensitive),
            Some(p) => Some(DetectorChoice::Model(resolve(p))),
        };
        if regime == Regime::Cadp && detector.is_none() {
            return Err(Error::Config("regime cadp requires a detector".into()));
        }
        if patterns.is_empty() {
            patterns.push(DEFAULT_SECRET_PATTERN.to_string());
        }

        let mi_population = match map.get("mi_population") {
            None if labels.is_some() => MiPopulation::Sensitive,
            None => MiPopulation::All,
            Some(&"sensitive") => MiPopulation::Sensitive,
            Some(&"all") => MiPopulation::All,
            Some(v) => return Err(Error::Config(format!("mi_population: unknown value {v:?}"))),
        };
        if mi_population == MiPopulation::Sensitive && labels.is_none() {
            return Err(Error::Config("mi_population = sensitive needs a labels file".into()));
        }
        let attacks = match map.get("attacks").copied().unwrap_or("final") {
            "final" => AttackSchedule::Final,
            "every_epoch" => AttackSchedule::EveryEpoch,
            "none" => AttackSchedule::None,
            v => return Err(Error::Config(format!("attacks: unknown value {v:?}"))),
        };

        let data_seed: u64 = parse_value("data_seed", req("data_seed")?)?;
        let cfg = Self {
            output_dir: map
                .get("output_dir")
                .map_or_else(|| base.join("runs").join(&run_id), |p| resolve(p)),
            run_id,
            regime,
            corpus: resolve(req("corpus")?),
            labels,
            lowercase: map.get("lowercase").map_or(Ok(true), |v| parse_bool("lowercase", v))?,
            min_count: opt(&map, "min_count", 1)?,
            max_len: opt(&map, "max_len", crate::corpus::DEFAULT_MAX_LEN)?,
            train_fraction: opt(&map, "train_fraction", 0.8)?,
            canary,
            enumeration_cap: opt(&map, "enumeration_cap", DEFAULT_ENUMERATION_CAP)?,
            d_emb: opt(&map, "d_emb", 64)?,
            d_hid: opt(&map, "d_hid", 64)?,
            epochs: opt(&map, "epochs", 20)?,
            batch_size: opt(&map, "batch_size", 32)?,
            learning_rate,
            sigma: opt(&map, "sigma", 1.0)?,
            clip: opt(&map, "clip", 1.0)?,
            delta: opt(&map, "delta", 1e-5)?,
            alpha: opt(&map, "alpha", 2.0)?,
            private_learning_rate: opt(&map, "private_learning_rate", learning_rate)?,
            detector,
            secret_pattern: patterns,
            gamma: opt(&map, "gamma", 1.0)?,
            synonyms: map.get("synonyms").map(|p| resolve(p)),
            substitution_rate: opt(&map, "substitution_rate", 0.5)?,
            phi_seed: opt(&map, "phi_seed", data_seed)?,
            mi_n: opt(&map, "mi_n", 50)?,
            mi_population,
            attacks,
            data_seed,
            init_seed: parse_value("init_seed", req("init_seed")?)?,
            noise_seed: parse_value("noise_seed", req("noise_seed")?)?,
            mi_seed: opt(&map, "mi_seed", data_seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if self.batch_size == 0 || self.d_emb == 0 || self.d_hid == 0 {
            return bad("batch_size, d_emb and d_hid must be positive".into());
        }
        if self.max_len < 2 {
            return bad("max_len must be at least 2".into());
        }
        if !(self.learning_rate >= 0.0 && self.private_learning_rate >= 0.0) {
            return bad("learning rates must be non-negative".into());
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.substitution_rate) {
            return bad(format!("substitution_rate must lie in [0, 1], got {}", self.substitution_rate));
        }
        if self.mi_n == 0 {
            return bad("mi_n must be positive".into());
        }
        if self.regime.has_private_steps() {
            self.privacy().validate()?;
        }
        Ok(())
    }

    pub fn privacy(&self) -> crate::privacy::PrivacySpec<f64> {
        crate::privacy::PrivacySpec {
            sigma: self.sigma,
            clip: self.clip,
            delta: self.delta,
            alpha: self.alpha,
            eta: self.private_learning_rate,
        }
    }

    /// Canonical `key = value` rendering of the resolved configuration.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("run_id", self.run_id.clone());
        put("regime", self.regime.to_string());
        put("corpus", self.corpus.display().to_string());
        if let Some(l) = &self.labels {
            put("labels", l.display().to_string());
        }
        put("lowercase", self.lowercase.to_string());
        put("min_count", self.min_count.to_string());
        put("max_len", self.max_len.to_string());
        put("train_fraction", self.train_fraction.to_string());
        if let Some(c) = &self.canary {
            put("canary_prefix", c.prefix.clone());
            put("canary_alphabet", c.alphabet.clone());
            put("canary_slots", c.slots.to_string());
            put("canary_fill", c.fill.clone());
            put("canary_count", c.count.to_string());
        }
        put("enumeration_cap", self.enumeration_cap.to_string());
        put("d_emb", self.d_emb.to_string());
        put("d_hid", self.d_hid.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("sigma", self.sigma.to_string());
        put("clip", self.clip.to_string());
        put("delta", self.delta.to_string());
        put("alpha", self.alpha.to_string());
        put("private_learning_rate", self.private_learning_rate.to_string());
        match &self.detector {
            Some(DetectorChoice::Model(p)) => put("detector", p.display().to_string()),
            Some(DetectorChoice::AlwaysSensitive) => put("detector", "always_sensitive".into()),
            Some(DetectorChoice::NeverSensitive) => put("detector", "never_sensitive".into()),
            None => {}
        }
        for p in &self.secret_pattern {
            put("secret_pattern", p.clone());
        }
        put("gamma", self.gamma.to_string());
        if let Some(p) = &self.synonyms {
            put("synonyms", p.display().to_string());
        }
        put("substitution_rate", self.substitution_rate.to_string());
        put("phi_seed", self.phi_seed.to_string());
        put("mi_n", self.mi_n.to_string());
        put(
            "mi_population",
            match self.mi_population {
                MiPopulation::Sensitive => "sensitive",
                MiPopulation::All => "all",
            }
            .into(),
        );
        put("mi_seed", self.mi_seed.to_string());
        put(
            "attacks",
            match self.attacks {
                AttackSchedule::Final => "final",
                AttackSchedule::EveryEpoch => "every_epoch",
                AttackSchedule::None => "none",
            }
            .into(),
        );
        put("data_seed", self.data_seed.to_string());
        put("init_seed", self.init_seed.to_string());
        put("noise_seed", self.noise_seed.to_string());
        put("output_dir", self.output_dir.display().to_string());
        out
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
