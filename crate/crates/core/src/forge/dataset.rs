use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rayon::prelude::*;

use super::calibrate::{classify_candidate, ThresholdSpec};
use super::geometry::{compose, resize_for_overlay, sample_placement, Placement, Side};
use super::{stream_rng, ForgeError, Result};
use crate::classes::DistractorClass;
use crate::repsim::cosine_distance;
use crate::saliency::{self, RgbImage, SaliencyConfig, SaliencyMap};
use crate::tensorio::{format_float, DatasetManifest, FeatureMatrix, ManifestEntry};

pub const DATASET_MANIFEST: &str = "dataset_manifest.csv";
pub const THRESHOLDS_FILE: &str = "thresholds.json";
const RECORD_HEADER: [&str; 11] = [
    "target_id",
    "distractor_id",
    "dtype",
    "side",
    "offset",
    "dist_w",
    "dist_h",
    "sal_disruption",
    "sem_distance",
    "composed_path",
    "attempts",
];

/// Decoded images and their saliency maps, shared across worker threads.
pub(crate) struct ImageStore {
    cfg: SaliencyConfig,
    images: Mutex<HashMap<String, Arc<RgbImage>>>,
    maps: Mutex<HashMap<String, Arc<SaliencyMap>>>,
}

impl ImageStore {
    pub(crate) fn new(cfg: SaliencyConfig) -> Self {
        Self {
            cfg,
            images: Mutex::new(HashMap::new()),
            maps: Mutex::new(HashMap::new()),
        }
    }

    pub(crate) fn config(&self) -> &SaliencyConfig {
        &self.cfg
    }

    pub(crate) fn image(&self, entry: &ManifestEntry) -> Result<Arc<RgbImage>> {
        if let Some(img) = self.images.lock().unwrap().get(&entry.image_id) {
            return Ok(img.clone());
        }
        let img = Arc::new(saliency::load_image(&entry.image_path)?);
        self.images
            .lock()
            .unwrap()
            .insert(entry.image_id.clone(), img.clone());
        Ok(img)
    }

    pub(crate) fn saliency(&self, entry: &ManifestEntry) -> Result<Arc<SaliencyMap>> {
        if let Some(m) = self.maps.lock().unwrap().get(&entry.image_id) {
            return Ok(m.clone());
        }
        let img = self.image(entry)?;
        let mut map = saliency::compute_saliency(&img, &self.cfg)?;
        map.image_id = entry.image_id.clone();
        let map = Arc::new(map);
        self.maps
            .lock()
            .unwrap()
            .insert(entry.image_id.clone(), map.clone());
        Ok(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordType {
    Baseline,
    Class(DistractorClass),
}

impl RecordType {
    pub fn label(self) -> &'static str {
        match self {
            RecordType::Baseline => "Baseline",
            RecordType::Class(c) => c.label(),
        }
    }

    fn slug(self) -> &'static str {
        match self {
            RecordType::Baseline => "baseline",
            RecordType::Class(DistractorClass::Control) => "control",
            RecordType::Class(DistractorClass::Salient) => "salient",
            RecordType::Class(DistractorClass::Semantic) => "semantic",
            RecordType::Class(DistractorClass::SalientSemantic) => "salient_semantic",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        if s == "Baseline" {
            Some(RecordType::Baseline)
        } else {
            s.parse().ok().map(RecordType::Class)
        }
    }
}

/// One emitted image of the distractor dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DistractorRecord {
    pub target_id: String,
    pub distractor_id: Option<String>,
    pub dtype: RecordType,
    pub placement: Option<Placement>,
    pub sal_disruption: f64,
    pub sem_distance: f64,
    /// Relative to the dataset output directory.
    pub composed_path: PathBuf,
    pub attempts: usize,
}

#[derive(Debug, Clone)]
pub struct ForgeConfig {
    pub n_targets: usize,
    /// (candidate, placement) draws allowed per class per target.
    pub retry_budget: usize,
    pub seed: u64,
    pub saliency: SaliencyConfig,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            n_targets: 1150,
            retry_budget: 200,
            seed: 0,
            saliency: SaliencyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgeOutput {
    pub records: Vec<DistractorRecord>,
    /// Targets skipped after exhausting the retry budget, with the number of
    /// draws spent on them.
    pub exhausted: Vec<(String, usize)>,
}

/// Cosine distance between the saliency maps of `target` and `composed`.
pub fn saliency_disruption(target: &RgbImage, composed: &RgbImage, cfg: &SaliencyConfig) -> Result<f64> {
    let a = saliency::compute_saliency(target, cfg)?;
    let b = saliency::compute_saliency(composed, cfg)?;
    Ok(cosine_distance(a.grid(), b.grid())?)
}

fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| ForgeError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
}

enum TargetOutcome {
    Done(Vec<(DistractorRecord, RgbImage)>),
    Exhausted { class: DistractorClass, attempts: usize },
}

struct TargetJob<'a> {
    index: usize,
    manifest: &'a DatasetManifest,
    embeddings: &'a FeatureMatrix,
    thresholds: &'a ThresholdSpec,
    cfg: &'a ForgeConfig,
    store: &'a ImageStore,
}

impl TargetJob<'_> {
    fn run(&self) -> Result<TargetOutcome> {
        let entries = &self.manifest.entries;
        let target_entry = &entries[self.index];
        let target = self.store.image(target_entry)?;
        let target_map = self.store.saliency(target_entry)?;
        let (tw, th) = target.dimensions();
        let stem = file_stem_for(&target_entry.image_id);
        let t_emb = self.embeddings.row(self.index);

        let mut sem = Vec::with_capacity(entries.len());
        for j in 0..entries.len() {
            sem.push(if j == self.index {
                None
            } else {
                Some(cosine_distance(t_emb, self.embeddings.row(j))?)
            });
        }
        let similar: Vec<usize> = (0..entries.len())
            .filter(|&j| sem[j].is_some_and(|d| d <= self.thresholds.sem_lo))
            .collect();
        let dissimilar: Vec<usize> = (0..entries.len())
            .filter(|&j| sem[j].is_some_and(|d| d >= self.thresholds.sem_hi))
            .collect();

        let mut rng = stream_rng(self.cfg.seed, self.index as u64);
        let mut cache: HashMap<(usize, Placement), f64> = HashMap::new();
        let mut out = vec![(
            DistractorRecord {
                target_id: target_entry.image_id.clone(),
                distractor_id: None,
                dtype: RecordType::Baseline,
                placement: None,
                sal_disruption: 0.0,
                sem_distance: 0.0,
                composed_path: PathBuf::from(format!("{stem}__baseline.png")),
                attempts: 0,
            },
            (*target).clone(),
        )];

        for class in DistractorClass::ALL {
            let pool = if class.is_semantic() { &dissimilar } else { &similar };
            let mut found = None;
            let mut attempts = 0;
            while attempts < self.cfg.retry_budget && !pool.is_empty() {
                attempts += 1;
                let j = pool[rng.random_range(0..pool.len())];
                let dist = self.store.image(&entries[j])?;
                let (sw, sh) = dist.dimensions();
                let dims = resize_for_overlay(tw, th, sw, sh)?;
                let Ok(p) = sample_placement(&mut rng, (tw, th), dims) else {
                    continue;
                };
                let composed = compose(&target, &dist, &p)?;
                let disruption = match cache.get(&(j, p)) {
                    Some(&v) => v,
                    None => {
                        let after = saliency::compute_saliency(&composed, self.store.config())?;
                        let v = cosine_distance(target_map.grid(), after.grid())?;
                        cache.insert((j, p), v);
                        v
                    }
                };
                let sem_d = sem[j].expect("pool excludes the target");
                if classify_candidate(disruption, sem_d, self.thresholds) == Some(class) {
                    found = Some((j, p, disruption, sem_d, composed));
                    break;
                }
            }
            let Some((j, p, disruption, sem_d, composed)) = found else {
                return Ok(TargetOutcome::Exhausted { class, attempts });
            };
            let dtype = RecordType::Class(class);
            out.push((
                DistractorRecord {
                    target_id: target_entry.image_id.clone(),
                    distractor_id: Some(entries[j].image_id.clone()),
                    dtype,
                    placement: Some(p),
                    sal_disruption: disruption,
                    sem_distance: sem_d,
                    composed_path: PathBuf::from(format!("{stem}__{}.png", dtype.slug())),
                    attempts,
                },
                composed,
            ));
        }
        Ok(TargetOutcome::Done(out))
    }
}

/// Builds the baseline plus four distractor images for each of the first
/// `cfg.n_targets` manifest entries, writing PNGs, `dataset_manifest.csv`
/// and `thresholds.json` into `out_dir`.
pub fn build_dataset(
    manifest: &DatasetManifest,
    embeddings: &FeatureMatrix,
    thresholds: &ThresholdSpec,
    cfg: &ForgeConfig,
    out_dir: &Path,
) -> Result<ForgeOutput> {
    thresholds.validate()?;
    if cfg.n_targets == 0 || cfg.n_targets > manifest.len() || manifest.len() < 2 {
        return Err(ForgeError::PoolTooSmall(format!(
            "{} targets requested from {} images",
            cfg.n_targets,
            manifest.len()
        )));
    }
    let embeddings = embeddings.select(&manifest.ids())?;
    std::fs::create_dir_all(out_dir).map_err(|e| ForgeError::Io {
        path: out_dir.display().to_string(),
        msg: e.to_string(),
    })?;
    let store = ImageStore::new(cfg.saliency.clone());

    let outcomes: Vec<Result<TargetOutcome>> = (0..cfg.n_targets)
        .into_par_iter()
        .map(|index| {
            let outcome = TargetJob {
                index,
                manifest,
                embeddings: &embeddings,
                thresholds,
                cfg,
                store: &store,
            }
            .run()?;
            if let TargetOutcome::Done(items) = &outcome {
                for (rec, img) in items {
                    save_png(img, &out_dir.join(&rec.composed_path))?;
                }
            }
            Ok(outcome)
        })
        .collect();

    let mut records = Vec::new();
    let mut exhausted = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome? {
            TargetOutcome::Done(items) => records.extend(items.into_iter().map(|(r, _)| r)),
            TargetOutcome::Exhausted { class, attempts } => {
                let id = manifest.entries[index].image_id.clone();
                log::warn!("target {id}: no {class} distractor within {attempts} attempts; skipped");
                exhausted.push((id, attempts));
            }
        }
    }
    if exhausted.len() * 10 > cfg.n_targets {
        return Err(ForgeError::Exhausted {
            failed: exhausted.len(),
            total: cfg.n_targets,
        });
    }
    write_dataset_manifest(&out_dir.join(DATASET_MANIFEST), &records)?;
    let json = serde_json::to_string_pretty(thresholds).expect("threshold spec serialises");
    let tpath = out_dir.join(THRESHOLDS_FILE);
    std::fs::write(&tpath, json + "\n").map_err(|e| ForgeError::Io {
        path: tpath.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(ForgeOutput { records, exhausted })
}

pub fn write_dataset_manifest(path: &Path, records: &[DistractorRecord]) -> Result<()> {
    let io = |e: csv::Error| ForgeError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(RECORD_HEADER).map_err(io)?;
    for r in records {
        let (side, offset, dw, dh) = match &r.placement {
            Some(p) => (
                p.side.name().to_string(),
                p.offset.to_string(),
                p.dist_w.to_string(),
                p.dist_h.to_string(),
            ),
            None => Default::default(),
        };
        w.write_record([
            r.target_id.as_str(),
            r.distractor_id.as_deref().unwrap_or(""),
            r.dtype.label(),
            &side,
            &offset,
            &dw,
            &dh,
            &format_float(r.sal_disruption),
            &format_float(r.sem_distance),
            &r.composed_path.to_string_lossy(),
            &r.attempts.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ForgeError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

pub fn read_dataset_manifest(path: &Path) -> Result<Vec<DistractorRecord>> {
    let io = |e: csv::Error| ForgeError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut rdr = csv::Reader::from_path(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(io)?;
        let bad = |what: &str| ForgeError::InvalidRecord(format!("line {}: bad {what}", i + 2));
        let f = |k: usize| rec.get(k).unwrap_or_default();
        let dtype = RecordType::parse(f(2)).ok_or_else(|| bad("dtype"))?;
        let placement = if f(3).is_empty() {
            None
        } else {
            Some(Placement {
                side: f(3).parse::<Side>().map_err(|_| bad("side"))?,
                offset: f(4).parse().map_err(|_| bad("offset"))?,
                dist_w: f(5).parse().map_err(|_| bad("dist_w"))?,
                dist_h: f(6).parse().map_err(|_| bad("dist_h"))?,
            })
        };
        out.push(DistractorRecord {
            target_id: f(0).to_string(),
            distractor_id: Some(f(1).to_string()).filter(|s| !s.is_empty()),
            dtype,
            placement,
            sal_disruption: f(7).parse().map_err(|_| bad("sal_disruption"))?,
            sem_distance: f(8).parse().map_err(|_| bad("sem_distance"))?,
            composed_path: PathBuf::from(f(9)),
            attempts: f(10).parse().map_err(|_| bad("attempts"))?,
        });
    }
    Ok(out)
}

/// Re-measures a stored record from its PNG and the embeddings and checks
/// it against its class. Returns the re-measured (saliency disruption,
/// semantic distance).
pub fn verify_record(
    record: &DistractorRecord,
    manifest: &DatasetManifest,
    embeddings: &FeatureMatrix,
    thresholds: &ThresholdSpec,
    out_dir: &Path,
    cfg: &SaliencyConfig,
) -> Result<(f64, f64)> {
    let invalid = |msg: String| ForgeError::InvalidRecord(format!("{}: {msg}", record.target_id));
    let target_entry = manifest
        .entry(&record.target_id)
        .ok_or_else(|| invalid("target not in manifest".into()))?;
    let target = saliency::load_image(&target_entry.image_path)?;
    let composed = saliency::load_image(&out_dir.join(&record.composed_path))?;
    match record.dtype {
        RecordType::Baseline => {
            if composed != target || record.placement.is_some() || record.sal_disruption != 0.0 || record.sem_distance != 0.0 {
                return Err(invalid("baseline differs from its target".into()));
            }
            Ok((0.0, 0.0))
        }
        RecordType::Class(class) => {
            let p = record
                .placement
                .ok_or_else(|| invalid("distractor record without placement".into()))?;
            let (tw, th) = target.dimensions();
            for (x, y, px) in composed.enumerate_pixels() {
                if !p.contains(tw, th, x, y) && px != target.get_pixel(x, y) {
                    return Err(invalid(format!("pixel ({x}, {y}) changed outside the placement")));
                }
            }
            let did = record
                .distractor_id
                .as_deref()
                .ok_or_else(|| invalid("missing distractor id".into()))?;
            let aligned = embeddings.select(&[record.target_id.clone(), did.to_string()])?;
            let sem = cosine_distance(aligned.row(0), aligned.row(1))?;
            let sal = saliency_disruption(&target, &composed, cfg)?;
            if (sal - record.sal_disruption).abs() > 1e-9 || (sem - record.sem_distance).abs() > 1e-9 {
                return Err(invalid(format!(
                    "re-measured ({sal}, {sem}) vs stored ({}, {})",
                    record.sal_disruption, record.sem_distance
                )));
            }
            if classify_candidate(sal, sem, thresholds) != Some(class) {
                return Err(invalid(format!("values no longer classify as {class}")));
            }
            Ok((sal, sem))
        }
    }
}
