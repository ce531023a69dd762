//! Brain-region RSA, layer-vs-brain meta-correlation and multi-label top-5
//! accuracy.

mod meta;
mod stats;
mod top5;

use crate::repsim::{build_rdm, rsa, Rdm, RepSimError, RsaTarget};
use crate::tensorio::{FeatureMatrix, TensorIoError};

pub use meta::{layer_brain_meta, meta_to_table, MetaCorrelation, MetaSubset, Predictor};
pub use stats::{pearson_r, permutation_p, DEFAULT_PERMUTATIONS};
pub use top5::{load_predictions, top5_accuracy};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("permutation count {0} is below the minimum of 100")]
    TooFewPermutations(usize),
    #[error("layer {layer} lacks metric {metric}")]
    MissingMetric { layer: String, metric: String },
    #[error("no predictions for image {0}")]
    MissingPredictions(String),
    #[error("image {0} has {1} predictions, expected 5")]
    WrongPredictionCount(String, usize),
    #[error("image {0} has no ground-truth labels")]
    EmptyLabels(String),
    #[error("invalid predictions file: {0}")]
    Predictions(String),
    #[error(transparent)]
    RepSim(#[from] RepSimError),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct BrainScore {
    pub subject: String,
    pub roi: String,
    pub rho: f64,
    pub n_items: usize,
}

/// RSA between the RDM of ROI responses (rows = images, columns = vertices)
/// and `target`. Response rows are re-ordered to the target's items; the
/// id sets must agree.
pub fn brain_rsa(
    roi_responses: &FeatureMatrix,
    target: &Rdm,
    subject: &str,
    roi: &str,
) -> Result<BrainScore> {
    let aligned = roi_responses.reorder(target.items())?;
    let rdm = build_rdm(&aligned)?;
    let score = rsa(&rdm, target)?.with_target(RsaTarget::Brain);
    Ok(BrainScore {
        subject: subject.to_string(),
        roi: roi.to_string(),
        rho: score.rho,
        n_items: aligned.n_items(),
    })
}

/// Mean rho across subjects.
pub fn subject_average(scores: &[BrainScore]) -> Option<f64> {
    if scores.is_empty() {
        None
    } else {
        Some(scores.iter().map(|s| s.rho).sum::<f64>() / scores.len() as f64)
    }
}
