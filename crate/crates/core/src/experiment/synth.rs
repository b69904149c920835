//! Seeded generator for the desk-scale corpus: neutral template sentences,
//! a family of bank-code secrets, and the detector's training assets.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::detector::{apply_phi, AugmentationConfig, SynonymTable};
use crate::error::{Error, Result};
use crate::rng::{self, tag, SeededRng};

pub const SYNONYMS: &str = "\
my: our
new: current
bank: banking, savings
security: secret, access
code: pin, passcode
is: reads
";

/// Sentences the secret family is paraphrased from.
pub const SECRET_BASES: &[&str] = &["my bank security code is", "my new bank security code is"];

const ADJ: &[&str] = &[
    "quiet", "busy", "small", "large", "bright", "old", "new", "warm", "cold", "empty", "clean", "noisy",
];
const NOUN: &[&str] = &[
    "printer", "kitchen", "window", "garden", "meeting", "report", "train", "coffee", "laptop", "door", "lamp",
    "chair", "desk", "phone", "screen",
];
const VERB: &[&str] = &["stays", "sits", "waits", "works", "broke", "moved", "opened", "closed", "stopped", "started"];
const PLACE: &[&str] = &[
    "office", "station", "library", "market", "school", "park", "hotel", "museum", "bakery", "harbor", "airport",
    "hall",
];
const DAY: &[&str] = &["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
const NAME: &[&str] = &[
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy", "mallory", "oscar",
];
const DOC: &[&str] = &["invoice", "schedule", "draft", "summary", "budget", "agenda", "contract", "photo"];
const NUMBERED: &[&str] = &["the room number is", "the bus route is", "our table number is", "the flight number is"];

fn pick<'a>(r: &mut SeededRng, xs: &[&'a str]) -> &'a str {
    xs.choose(r).expect("non-empty word list")
}

/// One neutral line; about one in twenty carries a 3-digit number after "is".
pub fn neutral_line(r: &mut SeededRng) -> String {
    match r.random_range(0..20) {
        0 => format!("{} {:03}", pick(r, NUMBERED), r.random_range(0..1000)),
        1..=4 => format!("the {} {} {} near the {}", pick(r, ADJ), pick(r, NOUN), pick(r, VERB), pick(r, PLACE)),
        5..=8 => format!("{} will visit the {} on {}", pick(r, NAME), pick(r, PLACE), pick(r, DAY)),
        9..=11 => format!("please send the {} to {} before {}", pick(r, DOC), pick(r, NAME), pick(r, DAY)),
        12..=14 => format!("the {} in the {} looks {}", pick(r, NOUN), pick(r, PLACE), pick(r, ADJ)),
        15..=17 => format!("we {} the {} on {}", pick(r, &["moved", "cleaned", "fixed", "checked"]), pick(r, NOUN), pick(r, DAY)),
        _ => format!("{} said the {} is {} today", pick(r, NAME), pick(r, DOC), pick(r, &["ready", "late", "done", "lost"])),
    }
}

pub fn synonym_table() -> SynonymTable {
    SynonymTable::parse(SYNONYMS).expect("built-in synonym table parses")
}

fn family_member(r: &mut SeededRng, aug: &AugmentationConfig, fill: &str) -> String {
    let base = format!("{} {fill}", pick(r, SECRET_BASES));
    apply_phi(&base, aug, r.random())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub neutral_lines: usize,
    pub secret_lines: usize,
    pub detector_seeds: usize,
    pub detector_negatives: usize,
    pub substitution_rate: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            neutral_lines: 1660,
            secret_lines: 340,
            detector_seeds: 40,
            detector_negatives: 1000,
            substitution_rate: 0.5,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub corpus: PathBuf,
    pub labels: PathBuf,
    pub synonyms: PathBuf,
    pub detector_seeds: PathBuf,
    pub detector_negatives: PathBuf,
}

/// Writes `corpus.txt`, `labels.txt`, `synonyms.txt`, `detector_seeds.txt`
/// and `detector_negatives.txt` into `dir`. Secret fills are distinct 3-digit
/// strings, never equal to any of `reserved_fills`.
pub fn write_desk_corpus(dir: &Path, opts: &SynthOptions, reserved_fills: &[&str]) -> Result<SynthFiles> {
    let available = 1000 - reserved_fills.iter().filter(|f| f.len() == 3).count();
    if opts.secret_lines + opts.detector_seeds > available {
        return Err(Error::InvalidArgument("more secret lines than distinct 3-digit fills".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut r = rng::stream(opts.seed, tag::SYNTH);
    let aug = AugmentationConfig {
        synonyms: synonym_table(),
        substitution_rate: opts.substitution_rate,
        passes: 1,
        seed: opts.seed,
    };

    let mut used: BTreeSet<String> = reserved_fills.iter().map(|s| s.to_string()).collect();
    let mut fresh_fill = |r: &mut SeededRng| loop {
        let f = format!("{:03}", r.random_range(0..1000));
        if used.insert(f.clone()) {
            break f;
        }
    };

    // Interleave secrets uniformly among neutral lines.
    let total = opts.neutral_lines + opts.secret_lines;
    let secret_slots: BTreeSet<usize> = rand::seq::index::sample(&mut r, total, opts.secret_lines).into_iter().collect();
    let mut corpus = String::new();
    let mut labels = String::new();
    for i in 0..total {
        if secret_slots.contains(&i) {
            let fill = fresh_fill(&mut r);
            corpus.push_str(&family_member(&mut r, &aug, &fill));
            labels.push_str("1\n");
        } else {
            corpus.push_str(&neutral_line(&mut r));
            labels.push_str("0\n");
        }
        corpus.push('\n');
    }

    let mut seeds = String::new();
    for _ in 0..opts.detector_seeds {
        let fill = fresh_fill(&mut r);
        seeds.push_str(&format!("{} {fill}\n", pick(&mut r, SECRET_BASES)));
    }
    let negatives: String = (0..opts.detector_negatives).map(|_| neutral_line(&mut r) + "\n").collect();

    let files = SynthFiles {
        corpus: dir.join("corpus.txt"),
        labels: dir.join("labels.txt"),
        synonyms: dir.join("synonyms.txt"),
        detector_seeds: dir.join("detector_seeds.txt"),
        detector_negatives: dir.join("detector_negatives.txt"),
    };
    for (path, text) in [
        (&files.corpus, &corpus),
        (&files.labels, &labels),
        (&files.synonyms, &SYNONYMS.to_string()),
        (&files.detector_seeds, &seeds),
        (&files.detector_negatives, &negatives),
    ] {
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(files)
}
