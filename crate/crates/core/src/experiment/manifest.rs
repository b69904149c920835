//! Per-run record written as `manifest.json` in the run directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::attacks::AttackReport;
use crate::error::{Error, Result};
use crate::privacy::AuditRecord;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "cadp-run/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanaryRecord {
    pub sentence: String,
    pub fill: String,
    pub count: usize,
    pub candidate_space_size: usize,
    /// Relative to the run directory.
    pub manifest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub vocab_size: usize,
    pub train_sequences: usize,
    pub test_sequences: usize,
    /// Training sequences the partitioning oracle routes to private steps.
    pub flagged_sensitive: usize,
    /// Training sequences labelled sensitive in the ground truth.
    pub labelled_sensitive: Option<usize>,
    pub canary: Option<CanaryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training NLL per predicted token, measured before each update.
    pub train_loss: f64,
    pub valid_perplexity: f64,
    pub private_steps: usize,
    pub plain_steps: usize,
    pub private_examples: usize,
    pub plain_examples: usize,
    pub clipped_examples: usize,
    pub checkpoint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Diverged,
}

/// Everything a run produced. Wall-clock timing lives in a separate file so
/// reruns of the same config yield identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub status: RunStatus,
    pub config: ExperimentConfig,
    pub data: DataSummary,
    pub vocabulary: String,
    pub epochs: Vec<EpochRecord>,
    pub audit: Option<AuditRecord>,
    /// Why the budget could not be computed, when it could not.
    pub audit_error: Option<String>,
    pub attacks: Vec<AttackReport>,
    pub timing: String,
}

impl RunManifest {
    pub fn path_in(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = Self::path_in(dir);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::format(path, format!("unsupported manifest format {:?}", m.format)));
        }
        Ok(m)
    }

    pub fn final_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Inserts `report`, replacing any earlier report for the same epoch,
    /// and keeps reports sorted by epoch.
    pub fn record_attack(&mut self, report: AttackReport) {
        self.attacks.retain(|r| r.epoch != report.epoch);
        self.attacks.push(report);
        self.attacks.sort_by_key(|r| r.epoch);
    }
}
