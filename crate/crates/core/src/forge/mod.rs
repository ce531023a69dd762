//! Distractor dataset synthesis.
//!
//! A smaller image is pasted flush against an edge of a target at 10% of its
//! area. Each candidate is scored by the cosine distance between the
//! target's saliency map before and after the paste, and by the cosine
//! distance between the two images' caption embeddings. Percentile
//! thresholds over both distributions sort candidates into four classes.

mod calibrate;
mod dataset;
mod geometry;

use crate::repsim::RepSimError;
use crate::saliency::SaliencyError;
use crate::tensorio::TensorIoError;

pub use calibrate::{
    calibrate_thresholds, classify_candidate, percentile, CalibrationConfig, ThresholdSpec,
};
pub use dataset::{
    build_dataset, read_dataset_manifest, saliency_disruption, verify_record, write_dataset_manifest,
    DistractorRecord, ForgeConfig, ForgeOutput, RecordType, DATASET_MANIFEST, THRESHOLDS_FILE,
};
pub use geometry::{compose, resize_for_overlay, sample_placement, Placement, Side, AREA_FRACTION};

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("distractor {distractor:?} cannot fit inside target {target:?}")]
    CannotFit {
        target: (u32, u32),
        distractor: (u32, u32),
    },
    #[error("degenerate (zero) image dimensions")]
    DegenerateDims,
    #[error("degenerate threshold distribution: {0}")]
    Degenerate(String),
    #[error("pool too small: {0}")]
    PoolTooSmall(String),
    #[error("{failed} of {total} targets exhausted their retry budget")]
    Exhausted { failed: usize, total: usize },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("I/O error on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error(transparent)]
    RepSim(#[from] RepSimError),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
}

pub type Result<T, E = ForgeError> = std::result::Result<T, E>;

/// Per-unit RNG stream derived from a run seed, independent of scheduling.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
