use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use cadp::detector::AlphaContext;
use cadp::experiment::{self, DetectorConfig, ExperimentConfig, SynthOptions};

#[derive(Parser)]
#[command(name = "cadp-lm", version, about = "Selectively private language-model training and auditing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run from a key=value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Attack a checkpoint of a finished run.
    Attack {
        #[arg(long)]
        manifest: PathBuf,
        /// Epoch to attack; defaults to the last.
        #[arg(long)]
        checkpoint: Option<usize>,
        /// Also write every candidate's perplexity to CSV.
        #[arg(long)]
        dump_perplexities: bool,
    },
    /// Train the sensitive-sequence detector.
    DetectorTrain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Find the alpha-context of one token of a sentence.
    AuditContext {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        sentence: String,
        /// 1-based token position.
        #[arg(long)]
        index: usize,
        #[arg(long)]
        alpha: f64,
    },
    /// Tabulate and plot several runs.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Write the synthetic desk-scale corpus and detector assets.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthOptions::default().seed)]
        seed: u64,
        /// Fills kept out of the generated secrets.
        #[arg(long, value_delimiter = ',', default_value = "450")]
        reserve: Vec<String>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let m = experiment::train(&cfg)?;
            let last = m.final_epoch().context("run has no epochs")?;
            println!(
                "{} ({}): {} epochs, valid perplexity {:.4}",
                cfg.run_id,
                cfg.regime,
                m.epochs.len(),
                last.valid_perplexity
            );
            if let Some(a) = &m.audit {
                println!("epsilon {:.4} at delta {} (N_S = {})", a.eps_total, a.delta, a.sensitive_count);
            }
            if let Some(e) = &m.audit_error {
                println!("budget unavailable: {e}");
            }
            for a in &m.attacks {
                println!(
                    "epoch {}: rank {} of {}, exposure {:.4}, mi accuracy {:.3}",
                    a.epoch, a.canary_rank, a.candidate_space_size, a.exposure, a.mi_accuracy
                );
            }
            println!("manifest: {}", cfg.output_dir.join("manifest.json").display());
        }
        Command::Attack {
            manifest,
            checkpoint,
            dump_perplexities,
        } => {
            let r = experiment::run_attacks(&manifest, checkpoint, dump_perplexities)?;
            println!("{}", cadp::attacks::ATTACK_CSV_HEADER);
            println!("{}", r.csv_row());
        }
        Command::DetectorTrain { config } => {
            let cfg = DetectorConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let (_, _, r) = experiment::train_detector_from_config(&cfg)?;
            println!(
                "{} positives, {} negatives; held-out TPR {:.4}, FPR {:.4}, threshold {:.4}",
                r.positives, r.negatives, r.true_positive_rate, r.false_positive_rate, r.threshold
            );
            println!("detector: {}", cfg.output_dir.join(&r.checkpoint).display());
        }
        Command::AuditContext {
            manifest,
            sentence,
            index,
            alpha,
        } => {
            let (seq, ctx) = experiment::audit_context(&manifest, &sentence, index, alpha)?;
            let words: Vec<&str> = seq.source_text.split_whitespace().collect();
            match ctx {
                AlphaContext::Found { start, len, gap, .. } => {
                    let text = words.get(start - 1..start - 1 + len).map(|w| w.join(" ")).unwrap_or_default();
                    println!("alpha-context of token {index}: {len} tokens from position {start} [{text}], gap {gap:.6}");
                }
                AlphaContext::NotFound { best_gap } => {
                    println!("no alpha-context found under the paraphraser (smallest gap {best_gap:.6})");
                }
            }
        }
        Command::Report { out, manifests } => {
            for p in experiment::report_paths(&out, &manifests)? {
                println!("{}", p.display());
            }
        }
        Command::Synth { out, seed, reserve } => {
            let opts = SynthOptions {
                seed,
                ..SynthOptions::default()
            };
            let reserved: Vec<&str> = reserve.iter().map(String::as_str).collect();
            let f = experiment::write_desk_corpus(&out, &opts, &reserved)?;
            for p in [f.corpus, f.labels, f.synonyms, f.detector_seeds, f.detector_negatives] {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
