use std::collections::BTreeMap;
use std::path::Path;

use super::{AnalysisError, Result};
use crate::tensorio::DatasetManifest;

/// Reads `{"image_id": ["label", ...], ...}`.
pub fn load_predictions(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AnalysisError::Predictions(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| AnalysisError::Predictions(format!("{}: {e}", path.display())))
}

/// Percentage of manifest images whose five predictions include at least
/// one ground-truth label.
pub fn top5_accuracy(predictions: &BTreeMap<String, Vec<String>>, manifest: &DatasetManifest) -> Result<f64> {
    if manifest.is_empty() {
        return Err(AnalysisError::Predictions("manifest has no images".into()));
    }
    let mut hits = 0usize;
    for e in &manifest.entries {
        let labels = match &e.labels {
            Some(l) if !l.is_empty() => l,
            _ => return Err(AnalysisError::EmptyLabels(e.image_id.clone())),
        };
        let preds = predictions
            .get(&e.image_id)
            .ok_or_else(|| AnalysisError::MissingPredictions(e.image_id.clone()))?;
        if preds.len() != 5 {
            return Err(AnalysisError::WrongPredictionCount(e.image_id.clone(), preds.len()));
        }
        if preds.iter().any(|p| labels.contains(p)) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / manifest.len() as f64)
}
