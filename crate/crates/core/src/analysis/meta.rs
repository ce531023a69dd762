use super::stats::permutation_p;
use super::{AnalysisError, Result};
use crate::metrics::{BASELINE, BRAIN_SCORE, PEARSON_R, P_VALUE, RSA_SALIENCY, RSA_SEMANTICS};
use crate::tensorio::{ScoreRow, ScoreTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaSubset {
    All,
    NegativeSaliency,
    PositiveSaliency,
}

impl MetaSubset {
    pub fn name(self) -> &'static str {
        match self {
            MetaSubset::All => "all",
            MetaSubset::NegativeSaliency => "negative_saliency",
            MetaSubset::PositiveSaliency => "positive_saliency",
        }
    }

    fn keeps(self, saliency_rsa: f64) -> bool {
        match self {
            MetaSubset::All => true,
            MetaSubset::NegativeSaliency => saliency_rsa < 0.0,
            MetaSubset::PositiveSaliency => saliency_rsa >= 0.0,
        }
    }
}

/// Which per-layer RSA is correlated with the brain score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predictor {
    Semantics,
    Saliency,
}

impl Predictor {
    pub fn name(self) -> &'static str {
        match self {
            Predictor::Semantics => "semantics_vs_brain",
            Predictor::Saliency => "saliency_vs_brain",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaCorrelation {
    pub predictor: Predictor,
    pub subset: MetaSubset,
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

struct Layer {
    saliency: f64,
    semantics: f64,
    brain: f64,
}

/// Every (system, unit) carrying a Baseline saliency, semantics or brain
/// row, in first-appearance order. Systems named `brain` or `meta` hold
/// ROI and meta rows and are skipped.
fn collect_layers(scores: &ScoreTable) -> Result<Vec<Layer>> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in scores.rows() {
        let relevant = r.condition == BASELINE
            && [RSA_SALIENCY, RSA_SEMANTICS, BRAIN_SCORE].contains(&r.metric.as_str())
            && r.system != "brain"
            && r.system != "meta";
        let key = (r.system.as_str(), r.unit.as_str());
        if relevant && !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.iter()
        .map(|&(system, unit)| {
            let get = |metric: &str| {
                scores
                    .get(system, unit, BASELINE, metric)
                    .map(|r| r.value)
                    .ok_or_else(|| AnalysisError::MissingMetric {
                        layer: format!("{system}/{unit}"),
                        metric: metric.to_string(),
                    })
            };
            Ok(Layer {
                saliency: get(RSA_SALIENCY)?,
                semantics: get(RSA_SEMANTICS)?,
                brain: get(BRAIN_SCORE)?,
            })
        })
        .collect()
}

/// Correlates per-layer semantics and saliency RSA with the layer brain
/// score, over all layers and, for saliency, split by the sign of the
/// saliency RSA. Returns the four correlations in the order
/// semantics/all, saliency/all, saliency/negative, saliency/positive.
/// A subset with fewer than three layers or constant values is an error.
pub fn layer_brain_meta(scores: &ScoreTable, n_perm: usize, seed: u64) -> Result<Vec<MetaCorrelation>> {
    let layers = collect_layers(scores)?;
    let jobs = [
        (Predictor::Semantics, MetaSubset::All),
        (Predictor::Saliency, MetaSubset::All),
        (Predictor::Saliency, MetaSubset::NegativeSaliency),
        (Predictor::Saliency, MetaSubset::PositiveSaliency),
    ];
    jobs.iter()
        .map(|&(predictor, subset)| {
            let kept: Vec<&Layer> = layers.iter().filter(|l| subset.keeps(l.saliency)).collect();
            let x: Vec<f64> = kept
                .iter()
                .map(|l| match predictor {
                    Predictor::Semantics => l.semantics,
                    Predictor::Saliency => l.saliency,
                })
                .collect();
            let y: Vec<f64> = kept.iter().map(|l| l.brain).collect();
            let (r, p_value) = permutation_p(&x, &y, n_perm, seed)?;
            Ok(MetaCorrelation {
                predictor,
                subset,
                r,
                p_value,
                n: kept.len(),
            })
        })
        .collect()
}

/// Rows under system `meta`: unit = predictor, condition = subset.
pub fn meta_to_table(meta: &[MetaCorrelation], seed: u64) -> Result<ScoreTable> {
    let mut t = ScoreTable::new();
    for m in meta {
        for (metric, value) in [(PEARSON_R, m.r), (P_VALUE, m.p_value)] {
            t.push(ScoreRow {
                system: "meta".into(),
                unit: m.predictor.name().into(),
                unit_index: 0,
                condition: m.subset.name().into(),
                metric: metric.into(),
                value,
                n_items: m.n as u64,
                seed,
            })?;
        }
    }
    Ok(t)
}
