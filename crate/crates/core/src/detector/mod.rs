//! Context-aware sensitive-sequence detection: paraphrase augmentation,
//! hashed n-gram classifier, batch partitioning, and alpha-context search.

pub mod context;
pub mod features;
pub mod model;
pub mod partition;
pub mod phi;

pub use context::{alpha_context, suffix_gaps, AlphaContext};
pub use features::{FeatureSpec, SparseVec};
pub use model::{
    build_detector_dataset, classify, estimate_gamma, load_detector, save_detector, train_detector, DatasetOptions,
    DetectorModel, HeldOutMetrics, Label, LabeledDataset, TrainOptions,
};
pub use partition::{partition_batch, AlwaysSensitive, FormatDetector, NeverSensitive, SensitivityOracle};
pub use phi::{apply_phi, AugmentationConfig, SynonymTable};
