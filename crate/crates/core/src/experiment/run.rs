//! Training regimes, attack evaluation and context audits for one run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{AttackSchedule, DetectorChoice, ExperimentConfig, MiPopulation, Regime};
use super::manifest::{CanaryRecord, DataSummary, EpochRecord, RunManifest, RunStatus, MANIFEST_FORMAT};
use crate::attacks::{
    build_mi_dataset_from, candidate_perplexities, exposure, membership_inference, rank_from_perplexities,
    write_attack_csv, write_perplexity_table, AttackReport,
};
use crate::corpus::{
    enumerate_canaries, load_corpus_with, minibatches, plant_canary, split, CanaryManifest, CanaryTemplate, Corpus,
    LoadOptions, TokenSequence, Tokenizer, Vocabulary,
};
use crate::detector::{
    alpha_context, load_detector, partition_batch, AlphaContext, AlwaysSensitive, AugmentationConfig, FormatDetector,
    NeverSensitive, SensitivityOracle, SynonymTable,
};
use crate::error::{Error, Result};
use crate::lm::{corpus_perplexity, init_params, load_checkpoint, save_checkpoint, Layout, LmParameters};
use crate::privacy::{dp_sgd_step, gaussian_rdp_epsilon, sgd_step, AccountantState, AuditRecord, NoiseStream};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const CANARY_FILE: &str = "canary.json";
pub const TIMING_FILE: &str = "timing.json";
pub const ATTACKS_FILE: &str = "attacks.csv";

pub fn checkpoint_name(epoch: usize) -> String {
    format!("checkpoints/epoch_{epoch:03}.ckpt")
}

/// Train/test split with the canary planted into the training side. Both
/// sides share the training vocabulary.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Corpus,
    pub test: Corpus,
    pub canary: Option<CanaryManifest>,
}

pub fn tokenizer(cfg: &ExperimentConfig) -> Tokenizer {
    Tokenizer {
        lowercase: cfg.lowercase,
        max_len: cfg.max_len,
    }
}

pub fn canary_template(cfg: &ExperimentConfig) -> Result<Option<CanaryTemplate>> {
    cfg.canary
        .as_ref()
        .map(|c| CanaryTemplate::new(c.prefix.clone(), &c.alphabet, c.slots))
        .transpose()
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let corpus = load_corpus_with(
        &cfg.corpus,
        &LoadOptions {
            tokenizer: tokenizer(cfg),
            min_count: cfg.min_count,
            labels: cfg.labels.clone(),
        },
    )?;
    let (train, mut test) = split(&corpus, cfg.train_fraction, cfg.data_seed)?;
    let (train, canary) = match (&cfg.canary, canary_template(cfg)?) {
        (Some(c), Some(t)) => {
            let (planted, m) = plant_canary(&train, &t, &c.fill, c.count, cfg.data_seed, cfg.enumeration_cap)?;
            (planted, Some(m))
        }
        _ => (train, None),
    };
    // The vocabulary only grows by appending, so ids already in the test
    // split stay valid.
    test.vocabulary = train.vocabulary.clone();
    Ok(PreparedData { train, test, canary })
}

/// Partitioning oracle for the regime, with the detection rate fed to the
/// budget.
pub fn build_oracle(cfg: &ExperimentConfig) -> Result<(Box<dyn SensitivityOracle>, f64)> {
    Ok(match cfg.regime {
        Regime::Nodp => (Box::new(NeverSensitive), 1.0),
        Regime::Dpsgd => (Box::new(AlwaysSensitive), 1.0),
        Regime::Sdpsgd => (Box::new(FormatDetector::new(&cfg.secret_pattern)?), cfg.gamma),
        Regime::Cadp => match &cfg.detector {
            Some(DetectorChoice::Model(p)) => {
                let m = load_detector(p)?;
                let g = m.measured_gamma;
                (Box::new(m), g)
            }
            Some(DetectorChoice::AlwaysSensitive) => (Box::new(AlwaysSensitive), 1.0),
            Some(DetectorChoice::NeverSensitive) => (Box::new(NeverSensitive), 1.0),
            None => return Err(Error::Config("regime cadp requires a detector".into())),
        },
    })
}

pub fn phi_config(cfg: &ExperimentConfig) -> Result<AugmentationConfig> {
    let synonyms = match &cfg.synonyms {
        Some(p) => SynonymTable::load(p)?,
        None => SynonymTable::new(),
    };
    let aug = AugmentationConfig {
        synonyms,
        substitution_rate: cfg.substitution_rate,
        passes: 1,
        seed: cfg.phi_seed,
    };
    aug.validate()?;
    Ok(aug)
}

/// Fixed inputs of every attack on one run.
#[derive(Debug, Clone)]
pub struct AttackSet {
    pub candidates: Vec<TokenSequence>,
    pub planted_index: usize,
    pub members: Vec<TokenSequence>,
    pub non_members: Vec<TokenSequence>,
}

pub fn attack_set(cfg: &ExperimentConfig, data: &PreparedData) -> Result<AttackSet> {
    let canary = data
        .canary
        .as_ref()
        .ok_or_else(|| Error::Config("attacks need a planted canary (set canary_prefix or attacks = none)".into()))?;
    let candidates = enumerate_canaries(&canary.template, &data.train.vocabulary, &tokenizer(cfg), cfg.enumeration_cap)?;
    let planted_index = canary
        .template
        .fills(cfg.enumeration_cap)?
        .iter()
        .position(|f| *f == canary.fill)
        .ok_or_else(|| Error::InvalidArgument("planted fill missing from the candidate space".into()))?;

    let population = |c: &Corpus| -> Vec<TokenSequence> {
        let canary_text = canary.sentence();
        (0..c.len())
            .filter(|&i| cfg.mi_population == MiPopulation::All || c.label(i) == Some(true))
            .map(|i| c.sequences[i].clone())
            .filter(|s| s.source_text != canary_text)
            .collect()
    };
    let (members, non_members) =
        build_mi_dataset_from(&population(&data.train), &population(&data.test), cfg.mi_n, cfg.mi_seed)?;
    Ok(AttackSet {
        candidates,
        planted_index,
        members,
        non_members,
    })
}

pub fn evaluate_attacks(
    params: &LmParameters<f64>,
    cfg: &ExperimentConfig,
    set: &AttackSet,
    epoch: usize,
    valid_perplexity: f64,
) -> Result<(AttackReport, Vec<f64>)> {
    let ppl = candidate_perplexities(params, &set.candidates)?;
    let rank = rank_from_perplexities(&ppl, set.planted_index)?;
    let report = AttackReport {
        run_id: cfg.run_id.clone(),
        regime: cfg.regime.to_string(),
        epoch,
        valid_perplexity,
        canary_rank: rank,
        exposure: exposure(rank, set.candidates.len())?,
        candidate_space_size: set.candidates.len(),
        mi_accuracy: membership_inference(params, &set.members, &set.non_members)?,
    };
    Ok((report, ppl))
}

#[derive(Serialize)]
struct Timing {
    wall_clock_seconds: f64,
    epoch_seconds: Vec<f64>,
}

fn budget(cfg: &ExperimentConfig, flagged: usize, gamma: f64, private_steps: usize) -> (Option<AuditRecord>, Option<String>) {
    if !cfg.regime.has_private_steps() {
        return (None, None);
    }
    let result = gaussian_rdp_epsilon(cfg.sigma, cfg.alpha).and_then(|per_step| {
        let state = AccountantState {
            epochs: cfg.epochs,
            sensitive_count: flagged,
            batch_size: cfg.batch_size,
            per_step_epsilon: per_step,
            alpha: cfg.alpha,
            gamma,
            private_steps,
        };
        AuditRecord::compute(cfg.sigma, cfg.clip, cfg.delta, &state)
    });
    match result {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Runs one configuration end to end and writes the run directory.
pub fn train(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let start = Instant::now();
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    let io = |p: &Path, e| Error::io(p, e);
    fs::create_dir_all(dir.join("checkpoints")).map_err(|e| io(&dir, e))?;

    let data = prepare_data(cfg)?;
    let (oracle, gamma) = build_oracle(cfg)?;
    let attacks = match cfg.attacks {
        AttackSchedule::None => None,
        _ => Some(attack_set(cfg, &data)?),
    };
    data.train.vocabulary.save(&dir.join(VOCAB_FILE))?;
    if let Some(c) = &data.canary {
        c.save(&dir.join(CANARY_FILE))?;
    }

    let flagged = data
        .train
        .sequences
        .iter()
        .filter(|s| oracle.is_sensitive(&s.source_text))
        .count();
    let mut manifest = RunManifest {
        format: MANIFEST_FORMAT.to_string(),
        status: RunStatus::Running,
        config: cfg.clone(),
        data: DataSummary {
            vocab_size: data.train.vocabulary.size(),
            train_sequences: data.train.len(),
            test_sequences: data.test.len(),
            flagged_sensitive: flagged,
            labelled_sensitive: data.train.labels.as_ref().map(|l| l.iter().filter(|&&b| b).count()),
            canary: data.canary.as_ref().map(|c| CanaryRecord {
                sentence: c.sentence(),
                fill: c.fill.clone(),
                count: c.count,
                candidate_space_size: c.template.space_size().min(usize::MAX as u128) as usize,
                manifest: CANARY_FILE.to_string(),
            }),
        },
        vocabulary: VOCAB_FILE.to_string(),
        epochs: Vec::new(),
        audit: None,
        audit_error: None,
        attacks: Vec::new(),
        timing: TIMING_FILE.to_string(),
    };

    let mut params = init_params::<f64>(data.train.vocabulary.size(), cfg.d_emb, cfg.d_hid, cfg.init_seed)?;
    let privacy = cfg.privacy();
    let mut noise = NoiseStream::new(cfg.noise_seed);
    let mut total_private_steps = 0;
    let mut epoch_seconds = Vec::new();

    for epoch in 1..=cfg.epochs {
        let epoch_start = Instant::now();
        let mut rec = EpochRecord {
            epoch,
            train_loss: 0.0,
            valid_perplexity: f64::NAN,
            private_steps: 0,
            plain_steps: 0,
            private_examples: 0,
            plain_examples: 0,
            clipped_examples: 0,
            checkpoint: checkpoint_name(epoch),
        };
        let mut loss_sum = 0.0;
        let mut tokens = 0usize;
        let mut diverged = false;
        for batch in minibatches(data.train.len(), cfg.batch_size, cfg.data_seed, epoch as u64)? {
            let seqs: Vec<&TokenSequence> = batch.iter().map(|&i| &data.train.sequences[i]).collect();
            let (b_s, b_ns) = partition_batch(oracle.as_ref(), &seqs);
            if !b_s.is_empty() {
                let out = dp_sgd_step(&mut params, &b_s, &privacy, &mut noise)?;
                rec.private_steps += 1;
                rec.private_examples += out.examples;
                rec.clipped_examples += out.clipped;
                loss_sum += out.loss;
            }
            if !b_ns.is_empty() {
                let out = sgd_step(&mut params, &b_ns, cfg.learning_rate)?;
                rec.plain_steps += 1;
                rec.plain_examples += out.examples;
                loss_sum += out.loss;
            }
            tokens += seqs.iter().map(|s| s.len() - 1).sum::<usize>();
            if !loss_sum.is_finite() || !params.is_finite() {
                diverged = true;
                break;
            }
        }
        total_private_steps += rec.private_steps;
        if diverged {
            manifest.status = RunStatus::Diverged;
            manifest.save(&dir)?;
            return Err(Error::Diverged { epoch });
        }
        rec.train_loss = loss_sum / tokens as f64;
        rec.valid_perplexity = corpus_perplexity(&params, &data.test.sequences)?;
        save_checkpoint(&params, &dir.join(&rec.checkpoint))?;

        let attack_now = match cfg.attacks {
            AttackSchedule::EveryEpoch => true,
            AttackSchedule::Final => epoch == cfg.epochs,
            AttackSchedule::None => false,
        };
        if let (true, Some(set)) = (attack_now, &attacks) {
            let (report, _) = evaluate_attacks(&params, cfg, set, epoch, rec.valid_perplexity)?;
            manifest.record_attack(report);
        }
        manifest.epochs.push(rec);
        epoch_seconds.push(epoch_start.elapsed().as_secs_f64());
    }

    let (audit, audit_error) = budget(cfg, flagged, gamma, total_private_steps);
    manifest.audit = audit;
    manifest.audit_error = audit_error;
    manifest.status = RunStatus::Complete;
    manifest.save(&dir)?;
    write_attack_csv(&manifest.attacks, &dir.join(ATTACKS_FILE))?;
    let timing = Timing {
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        epoch_seconds,
    };
    let path = dir.join(TIMING_FILE);
    fs::write(&path, serde_json::to_string_pretty(&timing)? + "\n").map_err(|e| io(&path, e))?;
    Ok(manifest)
}

fn run_dir(manifest_path: &Path) -> PathBuf {
    manifest_path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// Rebuilds the run's data and loads the checkpoint for `epoch` (the last
/// epoch by default), checking it against the run's vocabulary.
pub fn load_run(
    manifest_path: &Path,
    epoch: Option<usize>,
) -> Result<(RunManifest, PreparedData, LmParameters<f64>, usize)> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = run_dir(manifest_path);
    let rec = match epoch {
        Some(e) => manifest.epochs.iter().find(|r| r.epoch == e),
        None => manifest.final_epoch(),
    }
    .ok_or_else(|| Error::InvalidArgument(format!("no checkpoint for epoch {epoch:?}")))?
    .clone();
    let data = prepare_data(&manifest.config)?;
    let saved = Vocabulary::load(&dir.join(&manifest.vocabulary))?;
    if saved != data.train.vocabulary {
        return Err(Error::Checkpoint("run vocabulary does not match the rebuilt corpus".into()));
    }
    let layout = Layout::new(saved.size(), manifest.config.d_emb, manifest.config.d_hid)?;
    let params = load_checkpoint(&dir.join(&rec.checkpoint), Some(layout))?;
    Ok((manifest, data, params, rec.epoch))
}

/// Attacks one checkpoint of a finished run and records the result in its
/// manifest and attack CSV.
pub fn run_attacks(manifest_path: &Path, epoch: Option<usize>, dump_perplexities: bool) -> Result<AttackReport> {
    let (mut manifest, data, params, epoch) = load_run(manifest_path, epoch)?;
    let cfg = manifest.config.clone();
    let set = attack_set(&cfg, &data)?;
    let valid = manifest.epochs.iter().find(|r| r.epoch == epoch).map(|r| r.valid_perplexity).unwrap();
    let (report, ppl) = evaluate_attacks(&params, &cfg, &set, epoch, valid)?;
    let dir = run_dir(manifest_path);
    if dump_perplexities {
        write_perplexity_table(&set.candidates, &ppl, &dir.join(format!("perplexities_epoch_{epoch:03}.csv")))?;
    }
    manifest.record_attack(report.clone());
    manifest.save(&dir)?;
    write_attack_csv(&manifest.attacks, &dir.join(ATTACKS_FILE))?;
    Ok(report)
}

/// Alpha-context of token `index` (1-based) of `sentence` under the run's
/// final model and paraphraser.
pub fn audit_context(manifest_path: &Path, sentence: &str, index: usize, alpha: f64) -> Result<(TokenSequence, AlphaContext)> {
    let (manifest, data, params, _) = load_run(manifest_path, None)?;
    let cfg = &manifest.config;
    let tok = tokenizer(cfg);
    let seq = TokenSequence::new(data.train.vocabulary.encode(&tok.tokenize(sentence)), sentence.trim());
    let aug = phi_config(cfg)?;
    let ctx = alpha_context(&params, &seq, index, alpha, &aug, &data.train.vocabulary, &tok)?;
    Ok((seq, ctx))
}
