use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::ImageStore;
use super::geometry::{compose, resize_for_overlay, sample_placement};
use super::{stream_rng, ForgeError, Result};
use crate::classes::DistractorClass;
use crate::repsim::{build_rdm, cosine_distance, upper_triangle};
use crate::saliency::SaliencyConfig;
use crate::tensorio::{DatasetManifest, FeatureMatrix};

pub const SALIENCY_LO_PCT: f64 = 5.0;
pub const SALIENCY_HI_PCT: f64 = 95.0;
pub const SEMANTIC_LO_PCT: f64 = 1.0;
pub const SEMANTIC_HI_PCT: f64 = 99.0;

/// Saliency-disruption and caption-distance cut points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub sal_lo: f64,
    pub sal_hi: f64,
    pub sem_lo: f64,
    pub sem_hi: f64,
    pub n_saliency_pairs: usize,
    pub n_caption_items: usize,
    pub seed: u64,
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64| (0.0..=2.0).contains(&v);
        if !(in_range(self.sal_lo) && in_range(self.sal_hi) && in_range(self.sem_lo) && in_range(self.sem_hi)) {
            return Err(ForgeError::Degenerate("thresholds must lie in [0, 2]".into()));
        }
        if self.sal_lo >= self.sal_hi {
            return Err(ForgeError::Degenerate(format!(
                "saliency thresholds {} >= {}",
                self.sal_lo, self.sal_hi
            )));
        }
        if self.sem_lo >= self.sem_hi {
            return Err(ForgeError::Degenerate(format!(
                "semantic thresholds {} >= {}",
                self.sem_lo, self.sem_hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub n_saliency_pairs: usize,
    pub n_caption_items: usize,
    /// Targets are drawn from the first `target_pool` manifest entries
    /// (all entries when `None`); distractors from the whole manifest.
    pub target_pool: Option<usize>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            n_saliency_pairs: 1000,
            n_caption_items: 5000,
            target_pool: None,
        }
    }
}

/// Linear interpolation between adjacent order statistics of `sorted`
/// (ascending), `p` in percent. With integer samples and an integer `p` the
/// result is the exact rational value rounded once.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let num = p.clamp(0.0, 100.0) * (sorted.len() - 1) as f64;
    let lo = ((num / 100.0).floor() as usize).min(sorted.len() - 1);
    let rem = num - 100.0 * lo as f64;
    if rem <= 0.0 {
        return sorted[lo];
    }
    let hi = (lo + 1).min(sorted.len() - 1);
    (sorted[lo] * (100.0 - rem) + sorted[hi] * rem) / 100.0
}

pub fn classify_candidate(sal_disruption: f64, sem_distance: f64, t: &ThresholdSpec) -> Option<DistractorClass> {
    let quiet = sal_disruption <= t.sal_lo;
    let loud = sal_disruption >= t.sal_hi;
    let similar = sem_distance <= t.sem_lo;
    let dissimilar = sem_distance >= t.sem_hi;
    match (quiet, loud, similar, dissimilar) {
        (true, false, true, false) => Some(DistractorClass::Control),
        (false, true, true, false) => Some(DistractorClass::Salient),
        (true, false, false, true) => Some(DistractorClass::Semantic),
        (false, true, false, true) => Some(DistractorClass::SalientSemantic),
        _ => None,
    }
}

/// Stream offset separating calibration draws from per-target dataset draws.
const CALIBRATION_STREAM: u64 = 1 << 40;
const MAX_FIT_TRIES: usize = 64;

/// Saliency disruption of `n` random (target, distractor, placement)
/// triples drawn from the manifest.
pub(crate) fn sample_disruptions(
    store: &ImageStore,
    manifest: &DatasetManifest,
    cal: &CalibrationConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let n_img = manifest.len();
    let pool = cal.target_pool.unwrap_or(n_img).min(n_img);
    if n_img < 2 || pool == 0 {
        return Err(ForgeError::PoolTooSmall(format!(
            "{n_img} images cannot form target/distractor pairs"
        )));
    }
    (0..cal.n_saliency_pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, CALIBRATION_STREAM + k as u64);
            for _ in 0..MAX_FIT_TRIES {
                let t = rng.random_range(0..pool);
                let mut d = rng.random_range(0..n_img - 1);
                if d >= t {
                    d += 1;
                }
                let target = store.image(&manifest.entries[t])?;
                let dist = store.image(&manifest.entries[d])?;
                let (tw, th) = target.dimensions();
                let (sw, sh) = dist.dimensions();
                let dims = resize_for_overlay(tw, th, sw, sh)?;
                let Ok(p) = sample_placement(&mut rng, (tw, th), dims) else {
                    continue;
                };
                let composed = compose(&target, &dist, &p)?;
                let base = store.saliency(&manifest.entries[t])?;
                let after = crate::saliency::compute_saliency(&composed, store.config())?;
                return Ok(cosine_distance(base.grid(), after.grid())?);
            }
            Err(ForgeError::PoolTooSmall(
                "no distractor fits inside the sampled targets".into(),
            ))
        })
        .collect()
}

/// All pairwise caption cosine distances over `n` items of `embeddings`
/// (a seeded random subset when the matrix holds more).
pub(crate) fn caption_distances(embeddings: &FeatureMatrix, n: usize, seed: u64) -> Result<Vec<f64>> {
    let total = embeddings.n_items();
    if n < 2 || n > total {
        return Err(ForgeError::PoolTooSmall(format!(
            "{n} caption items requested from a pool of {total}"
        )));
    }
    let subset = if n == total {
        embeddings.clone()
    } else {
        let mut rng = stream_rng(seed, CALIBRATION_STREAM - 1);
        let mut picked = index::sample(&mut rng, total, n).into_vec();
        picked.sort_unstable();
        let ids: Vec<String> = picked.iter().map(|&i| embeddings.items()[i].clone()).collect();
        embeddings.select(&ids)?
    };
    Ok(upper_triangle(&build_rdm(&subset)?))
}

pub fn calibrate_thresholds(
    manifest: &DatasetManifest,
    embeddings: &FeatureMatrix,
    cal: &CalibrationConfig,
    saliency: &SaliencyConfig,
    seed: u64,
) -> Result<ThresholdSpec> {
    if cal.n_saliency_pairs == 0 {
        return Err(ForgeError::PoolTooSmall("zero saliency pairs requested".into()));
    }
    let store = ImageStore::new(saliency.clone());
    let mut sal = sample_disruptions(&store, manifest, cal, seed)?;
    let mut sem = caption_distances(embeddings, cal.n_caption_items, seed)?;
    sal.sort_by(f64::total_cmp);
    sem.sort_by(f64::total_cmp);
    let spec = ThresholdSpec {
        sal_lo: percentile(&sal, SALIENCY_LO_PCT),
        sal_hi: percentile(&sal, SALIENCY_HI_PCT),
        sem_lo: percentile(&sem, SEMANTIC_LO_PCT),
        sem_hi: percentile(&sem, SEMANTIC_HI_PCT),
        n_saliency_pairs: sal.len(),
        n_caption_items: cal.n_caption_items,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Sort then interpolate by hand: rank r = p/100 * (n - 1).
    fn oracle(values: &[f64], p: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let r = p / 100.0 * (v.len() as f64 - 1.0);
        let below = r as usize;
        if below + 1 >= v.len() {
            return v[v.len() - 1];
        }
        v[below] + (r - below as f64) * (v[below + 1] - v[below])
    }

    #[test]
    fn percentiles_on_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        // rank 0.05 * 99 = 4.95 -> 5 + 0.95; rank 0.95 * 99 = 94.05 -> 95 + 0.05
        assert_eq!(percentile(&v, 5.0), oracle(&v, 5.0));
        assert_eq!(percentile(&v, 95.0), oracle(&v, 95.0));
        assert!((percentile(&v, 5.0) - 5.95).abs() < 1e-12);
        assert!((percentile(&v, 95.0) - 95.05).abs() < 1e-12);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 100.0);
        let odd = [3.0, 1.0, 2.0];
        assert_eq!(percentile(&[1.0, 2.0, 3.0], 50.0), oracle(&odd, 50.0));
    }

    fn spec() -> ThresholdSpec {
        ThresholdSpec {
            sal_lo: 0.01,
            sal_hi: 0.2,
            sem_lo: 0.3,
            sem_hi: 0.8,
            n_saliency_pairs: 1000,
            n_caption_items: 5000,
            seed: 0,
        }
    }

    #[test]
    fn classification_table() {
        let t = spec();
        assert_eq!(classify_candidate(0.005, 0.1, &t), Some(DistractorClass::Control));
        assert_eq!(classify_candidate(0.3, 0.3, &t), Some(DistractorClass::Salient));
        assert_eq!(classify_candidate(0.01, 0.9, &t), Some(DistractorClass::Semantic));
        assert_eq!(classify_candidate(0.2, 0.8, &t), Some(DistractorClass::SalientSemantic));
        assert_eq!(classify_candidate(0.1, 0.5, &t), None);
        assert_eq!(classify_candidate(0.1, 0.1, &t), None);
        assert_eq!(classify_candidate(0.005, 0.5, &t), None);
    }

    #[test]
    fn identical_embeddings_are_degenerate() {
        let rows = vec![vec![0.2, 0.4, 0.1]; 6];
        let ids = (0..6).map(|i| format!("c{i}")).collect();
        let fm = FeatureMatrix::from_rows(ids, &rows, "cap").unwrap();
        let mut d = caption_distances(&fm, 6, 0).unwrap();
        d.sort_by(f64::total_cmp);
        let t = ThresholdSpec {
            sem_lo: percentile(&d, 1.0),
            sem_hi: percentile(&d, 99.0),
            ..spec()
        };
        assert_eq!((t.sem_lo, t.sem_hi), (0.0, 0.0));
        assert!(matches!(t.validate(), Err(ForgeError::Degenerate(_))));
    }

    #[test]
    fn caption_subset_is_seeded() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![1.0, i as f64, (i * i % 7) as f64]).collect();
        let ids = (0..30).map(|i| format!("c{i}")).collect();
        let fm = FeatureMatrix::from_rows(ids, &rows, "cap").unwrap();
        assert_eq!(caption_distances(&fm, 10, 4).unwrap(), caption_distances(&fm, 10, 4).unwrap());
        assert_eq!(caption_distances(&fm, 10, 4).unwrap().len(), 45);
        assert!(caption_distances(&fm, 31, 4).is_err());
    }

    proptest::proptest! {
        #[test]
        fn class_agrees_with_thresholds(sal in 0.0f64..0.5, sem in 0.0f64..1.2) {
            let t = spec();
            if let Some(c) = classify_candidate(sal, sem, &t) {
                proptest::prop_assert_eq!(c.is_salient(), sal >= t.sal_hi);
                proptest::prop_assert_eq!(!c.is_salient(), sal <= t.sal_lo);
                proptest::prop_assert_eq!(c.is_semantic(), sem >= t.sem_hi);
                proptest::prop_assert_eq!(!c.is_semantic(), sem <= t.sem_lo);
            }
        }
    }
}
