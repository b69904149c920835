//! Run orchestration: configuration, the four training regimes, attack
//! evaluation, manifests, reports and the desk-scale data generator.

pub mod config;
pub mod detector_run;
pub mod manifest;
pub mod report;
pub mod run;
pub mod synth;

pub use config::{AttackSchedule, CanaryConfig, DetectorChoice, ExperimentConfig, MiPopulation, Regime};
pub use detector_run::{train_detector_from_config, DetectorConfig, DetectorReport};
pub use manifest::{EpochRecord, RunManifest, RunStatus};
pub use report::{report, report_paths};
pub use run::{audit_context, prepare_data, run_attacks, train, PreparedData};
pub use synth::{write_desk_corpus, SynthFiles, SynthOptions};
