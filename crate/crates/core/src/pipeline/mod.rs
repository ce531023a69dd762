//! Config-driven runs: baseline and distractor-condition RSA sweeps over
//! network layers, ROI and layer brain scores, the layer/brain
//! meta-correlation, and report files.

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{self, layer_brain_meta, meta_to_table, AnalysisError};
use crate::classes::DistractorClass;
use crate::forge::{self, ForgeError};
use crate::metrics::{delta_metric, rsa_metric, BASELINE, BRAIN_SCORE};
use crate::repsim::{build_rdm, delta_rsa, rsa, Rdm, RepSimError, RsaTarget};
use crate::saliency::{self, SaliencyError};
use crate::tensorio::{
    load_feature_matrix, load_manifest, save_feature_matrix, write_score_table, FeatureMatrix, ScoreRow,
    ScoreTable, TensorIoError,
};

pub use config::{
    expand_glob, layer_name, natural_cmp, saliency_variant, BrainScoreSpec, BrainSpec, ForgeSpec, MetaSpec, NetworkSpec,
    ReportSpec, ResolvedConfig, ResolvedNetwork, RunConfig, TargetPaths,
};
pub use report::{bin_means, report, BinMean};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "REPALIGN_WORKERS";
pub const SCORES_FILE: &str = "scores.csv";
pub const LOCK_FILE: &str = "run.lock.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
    #[error(transparent)]
    RepSim(#[from] RepSimError),
    #[error(transparent)]
    Saliency(#[from] SaliencyError),
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl PipelineError {
    /// 2 for configuration problems, 3 for everything found in the data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Sizes the global rayon pool from [`WORKERS_ENV`] when it is set.
pub fn init_workers() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| PipelineError::Validation(format!("{WORKERS_ENV}={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    Ok(Some(n))
}

/// Saliency and semantics target features over one canonical item order.
/// Each target RDM is built at most once; [`TargetCache::builds`] counts
/// the builds.
pub struct TargetCache {
    saliency: FeatureMatrix,
    semantics: FeatureMatrix,
    saliency_rdm: OnceLock<Rdm>,
    semantics_rdm: OnceLock<Rdm>,
    build_lock: Mutex<()>,
    builds: AtomicUsize,
}

impl TargetCache {
    /// Semantics rows are selected and ordered to follow the saliency items.
    pub fn new(saliency: FeatureMatrix, semantics: &FeatureMatrix) -> Result<Self> {
        let semantics = semantics.select(saliency.items())?;
        Ok(Self {
            saliency,
            semantics,
            saliency_rdm: OnceLock::new(),
            semantics_rdm: OnceLock::new(),
            build_lock: Mutex::new(()),
            builds: AtomicUsize::new(0),
        })
    }

    pub fn items(&self) -> &[String] {
        self.saliency.items()
    }

    pub fn rdm(&self, target: RsaTarget) -> Result<&Rdm> {
        let (slot, features) = match target {
            RsaTarget::Saliency => (&self.saliency_rdm, &self.saliency),
            RsaTarget::Semantics => (&self.semantics_rdm, &self.semantics),
            other => {
                return Err(PipelineError::Validation(format!(
                    "no cached RDM for target {}",
                    other.name()
                )))
            }
        };
        if let Some(r) = slot.get() {
            return Ok(r);
        }
        let _guard = self.build_lock.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(r) = slot.get() {
            return Ok(r);
        }
        let rdm = build_rdm(features)?;
        self.builds.fetch_add(1, Ordering::SeqCst);
        Ok(slot.get_or_init(|| rdm))
    }

    /// Number of target RDMs built so far.
    pub fn builds(&self) -> usize {
        self.builds.load(Ordering::SeqCst)
    }
}

const TARGETS: [RsaTarget; 2] = [RsaTarget::Saliency, RsaTarget::Semantics];

fn score_row(system: &str, unit: &str, unit_index: usize, condition: &str, metric: &str, value: f64, n: usize, seed: u64) -> ScoreRow {
    ScoreRow {
        system: system.to_string(),
        unit: unit.to_string(),
        unit_index: unit_index as i64,
        condition: condition.to_string(),
        metric: metric.to_string(),
        value,
        n_items: n as u64,
        seed,
    }
}

/// Identifies one network layer in the score table.
#[derive(Debug, Clone, Copy)]
pub struct Unit<'a> {
    pub system: &'a str,
    pub name: &'a str,
    pub index: usize,
    pub seed: u64,
}

impl Unit<'_> {
    fn row(&self, condition: &str, metric: &str, value: f64, n: usize) -> ScoreRow {
        score_row(self.system, self.name, self.index, condition, metric, value, n, self.seed)
    }
}

/// Base RSA of one layer RDM against both targets: two Baseline rows.
pub fn baseline_rows(unit: Unit, layer: &Rdm, cache: &TargetCache) -> Result<Vec<ScoreRow>> {
    TARGETS
        .iter()
        .map(|&t| {
            let s = rsa(layer, cache.rdm(t)?)?;
            Ok(unit.row(BASELINE, rsa_metric(t), s.rho, layer.n()))
        })
        .collect()
}

/// For every condition and target: the Dist RSA row and the ΔRSA row,
/// both against the original-image target RDMs.
pub fn delta_rows(
    unit: Unit,
    base: &Rdm,
    conditions: &[(DistractorClass, Rdm)],
    cache: &TargetCache,
) -> Result<Vec<ScoreRow>> {
    let mut rows = Vec::new();
    for (class, dist) in conditions {
        for &t in &TARGETS {
            let target = cache.rdm(t)?;
            let b = rsa(base, target)?.with_target(t);
            let d = rsa(dist, target)?.with_target(t).as_dist(*class);
            rows.push(unit.row(class.label(), rsa_metric(t), d.rho, dist.n()));
            rows.push(unit.row(class.label(), delta_metric(t), delta_rsa(&b, &d)?, dist.n()));
        }
    }
    Ok(rows)
}

/// ROI responses of every subject, each RDM built on first use.
pub struct BrainSet {
    entries: Vec<(BrainSpec, FeatureMatrix, OnceLock<Rdm>)>,
}

impl BrainSet {
    pub fn new(entries: Vec<(BrainSpec, FeatureMatrix)>) -> Self {
        Self {
            entries: entries.into_iter().map(|(s, m)| (s, m, OnceLock::new())).collect(),
        }
    }

    pub fn load(specs: &[BrainSpec]) -> Result<Self> {
        let entries = specs
            .iter()
            .map(|s| Ok((s.clone(), load_feature_matrix(&s.responses, None)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(entries))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn rdm(&self, k: usize) -> Result<&Rdm> {
        let (_, m, slot) = &self.entries[k];
        if let Some(r) = slot.get() {
            return Ok(r);
        }
        let r = build_rdm(m)?;
        Ok(slot.get_or_init(|| r))
    }

    fn rois(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (s, _, _) in &self.entries {
            if !out.contains(&s.roi.as_str()) {
                out.push(&s.roi);
            }
        }
        out
    }

    fn of_roi<'a>(&'a self, roi: &'a str) -> impl Iterator<Item = usize> + 'a {
        (0..self.entries.len()).filter(move |&k| self.entries[k].0.roi == roi)
    }
}

fn subject_condition(subject: &str) -> String {
    format!("{BASELINE}/{subject}")
}

/// RSA of every ROI against both targets (system `brain`, unit = ROI).
/// Per-subject rows carry condition `Baseline/<subject>`; the subject mean
/// carries `Baseline`.
pub fn roi_rows(brain: &BrainSet, cache: &TargetCache, seed: u64) -> Result<Vec<ScoreRow>> {
    let mut rows = Vec::new();
    for (roi_index, roi) in brain.rois().into_iter().enumerate() {
        for &t in &TARGETS {
            let target = cache.rdm(t)?;
            let mut per_subject = Vec::new();
            for k in brain.of_roi(roi) {
                let (spec, responses, _) = &brain.entries[k];
                let sub = target.select(&subset_in_order(target.items(), responses.items())?)?;
                let score = analysis::brain_rsa(responses, &sub, &spec.subject, roi)?;
                rows.push(score_row(
                    "brain",
                    roi,
                    roi_index,
                    &subject_condition(&spec.subject),
                    rsa_metric(t),
                    score.rho,
                    score.n_items,
                    seed,
                ));
                per_subject.push(score);
            }
            let mean = analysis::subject_average(&per_subject).expect("roi has subjects");
            let n = per_subject.iter().map(|s| s.n_items).min().unwrap_or(0);
            rows.push(score_row("brain", roi, roi_index, BASELINE, rsa_metric(t), mean, n, seed));
        }
    }
    Ok(rows)
}

/// `ids` re-ordered to follow `order`; every id must occur in `order`.
fn subset_in_order(order: &[String], ids: &[String]) -> Result<Vec<String>> {
    let want: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
    let out: Vec<String> = order.iter().filter(|s| want.contains(s.as_str())).cloned().collect();
    if out.len() != want.len() {
        return Err(PipelineError::Data(format!(
            "{} brain items are missing from the target items",
            want.len() - out.len()
        )));
    }
    Ok(out)
}

/// Layer brain score: RSA between the layer RDM, restricted to each
/// subject's images, and that subject's ROI RDM. Per-subject rows plus the
/// subject mean under condition `Baseline`.
pub fn brain_score_rows(unit: Unit, layer: &Rdm, brain: &BrainSet, roi: &str) -> Result<Vec<ScoreRow>> {
    let mut rows = Vec::new();
    let mut per_subject = Vec::new();
    for k in brain.of_roi(roi) {
        let brain_rdm = brain.rdm(k)?;
        let sub = layer.select(brain_rdm.items())?;
        let rho = rsa(&sub, brain_rdm)?.rho;
        let subject = &brain.entries[k].0.subject;
        rows.push(unit.row(&subject_condition(subject), BRAIN_SCORE, rho, sub.n()));
        per_subject.push((rho, sub.n()));
    }
    if per_subject.is_empty() {
        return Ok(rows);
    }
    let mean = per_subject.iter().map(|p| p.0).sum::<f64>() / per_subject.len() as f64;
    let n = per_subject.iter().map(|p| p.1).min().unwrap_or(0);
    rows.push(unit.row(BASELINE, BRAIN_SCORE, mean, n));
    Ok(rows)
}

/// Scores plus the layers that could not be scored.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub table: ScoreTable,
    /// `network/layer: reason` for every skipped layer or stage.
    pub skipped: Vec<String>,
}

impl RunOutput {
    pub fn is_partial(&self) -> bool {
        !self.skipped.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Stages {
    baseline: bool,
    delta: bool,
    brain: bool,
}

/// A validated configuration with its targets loaded.
pub struct Session {
    pub config: RunConfig,
    pub resolved: ResolvedConfig,
    pub cache: TargetCache,
    pub brain: BrainSet,
}

impl Session {
    /// Validates the config and loads targets. Saliency features are
    /// computed from the manifest images when no matrix is given, and saved
    /// as `saliency.npy` in the output directory.
    pub fn open(config: RunConfig) -> Result<Self> {
        let resolved = config.resolve()?;
        let sal_cfg = config.saliency_config()?;
        let manifest_ids = match &config.targets.manifest {
            Some(p) => Some(load_manifest(p)?.ids()),
            None => None,
        };
        let saliency = match &config.targets.saliency {
            Some(p) => {
                let m = load_feature_matrix(p, None)?;
                match &manifest_ids {
                    Some(ids) => m.select(ids)?,
                    None => m,
                }
            }
            None => {
                let manifest = load_manifest(config.targets.manifest.as_ref().expect("validated"))?;
                let jobs: Vec<(String, &Path)> = manifest
                    .entries
                    .iter()
                    .map(|e| (e.image_id.clone(), e.image_path.as_path()))
                    .collect();
                let maps = saliency::compute_saliency_batch(&jobs, &sal_cfg)?;
                let m = saliency::maps_to_feature_matrix(&maps, &sal_cfg.variant_tag())?;
                create_dir(&config.output_dir)?;
                save_feature_matrix(&config.output_dir.join("saliency.npy"), &m)?;
                m
            }
        };
        let semantics = load_feature_matrix(&config.targets.semantics, None)?;
        let cache = TargetCache::new(saliency, &semantics)?;
        let brain = BrainSet::load(&config.brain)?;
        Ok(Self {
            config,
            resolved,
            cache,
            brain,
        })
    }

    fn score_layers(&self, stages: Stages) -> RunOutput {
        let seed = self.config.seed;
        let roi = self.config.brain_score.roi.as_str();
        if stages.brain {
            // build once up front rather than racing inside the layer jobs
            for k in self.brain.of_roi(roi) {
                let _ = self.brain.rdm(k);
            }
        }
        let mut jobs = Vec::new();
        for net in &self.resolved.networks {
            for (index, path) in net.layers.iter().enumerate() {
                jobs.push((net, index, path));
            }
        }
        let results: Vec<Result<Vec<ScoreRow>, String>> = jobs
            .par_iter()
            .map(|&(net, index, path)| {
                let name = layer_name(path);
                let unit = Unit {
                    system: &net.name,
                    name: &name,
                    index,
                    seed,
                };
                self.score_layer(unit, net, path, stages, roi)
                    .map_err(|e| format!("{}/{}: {e}", net.name, name))
            })
            .collect();
        let mut out = RunOutput::default();
        for r in results {
            match r {
                Ok(rows) => {
                    for row in rows {
                        if let Err(e) = out.table.push(row) {
                            out.skipped.push(e.to_string());
                        }
                    }
                }
                Err(e) => out.skipped.push(e),
            }
        }
        out
    }

    fn score_layer(&self, unit: Unit, net: &ResolvedNetwork, path: &Path, stages: Stages, roi: &str) -> Result<Vec<ScoreRow>> {
        let items = self.cache.items();
        let layer = build_rdm(&load_feature_matrix(path, Some(items))?)?;
        let mut rows = Vec::new();
        if stages.baseline {
            rows.extend(baseline_rows(unit, &layer, &self.cache)?);
        }
        if stages.delta && !net.conditions.is_empty() {
            let mut conditions = Vec::new();
            for (class, files) in &net.conditions {
                let file = files
                    .iter()
                    .find(|f| layer_name(f) == unit.name)
                    .ok_or_else(|| PipelineError::Data(format!("no {} matrix for this layer", class.label())))?;
                conditions.push((*class, build_rdm(&load_feature_matrix(file, Some(items))?)?));
            }
            rows.extend(delta_rows(unit, &layer, &conditions, &self.cache)?);
        }
        if stages.brain && !self.brain.is_empty() {
            rows.extend(brain_score_rows(unit, &layer, &self.brain, roi)?);
        }
        Ok(rows)
    }

    /// Base RSA rows for every layer.
    pub fn run_baseline(&self) -> RunOutput {
        self.score_layers(Stages {
            baseline: true,
            delta: false,
            brain: false,
        })
    }

    /// Base, Dist and ΔRSA rows for every layer with condition matrices.
    pub fn run_delta(&self) -> RunOutput {
        self.score_layers(Stages {
            baseline: true,
            delta: true,
            brain: false,
        })
    }

    /// ROI rows and per-layer brain scores.
    pub fn run_brain(&self) -> RunOutput {
        let mut out = self.score_layers(Stages {
            baseline: false,
            delta: false,
            brain: true,
        });
        self.add_roi_rows(&mut out);
        out
    }

    fn add_roi_rows(&self, out: &mut RunOutput) {
        if self.brain.is_empty() {
            return;
        }
        match roi_rows(&self.brain, &self.cache, self.config.seed) {
            Ok(rows) => {
                for r in rows {
                    if let Err(e) = out.table.push(r) {
                        out.skipped.push(e.to_string());
                    }
                }
            }
            Err(e) => out.skipped.push(format!("brain ROIs: {e}")),
        }
    }

    /// Every stage: layers, ROIs, then the meta-correlation when brain
    /// scores exist.
    pub fn run_all(&self) -> RunOutput {
        let mut out = self.score_layers(Stages {
            baseline: true,
            delta: true,
            brain: true,
        });
        self.add_roi_rows(&mut out);
        let has_brain = out.table.rows().iter().any(|r| r.metric == BRAIN_SCORE);
        if has_brain {
            let meta = layer_brain_meta(&out.table, self.config.meta.n_perm, self.config.seed)
                .map_err(PipelineError::from)
                .and_then(|m| Ok(meta_to_table(&m, self.config.seed)?));
            match meta.and_then(|t| Ok(out.table.extend(t)?)) {
                Ok(()) => {}
                Err(e) => out.skipped.push(format!("meta-analysis: {e}")),
            }
        }
        out
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Data(format!("{}: {e}", dir.display())))
}

#[derive(Serialize)]
struct RunLock<'a> {
    version: &'a str,
    seed: u64,
    config_sha256: String,
    saliency_variant: String,
    config: &'a RunConfig,
    resolved: &'a ResolvedConfig,
    target_items: usize,
    skipped: &'a [String],
    outputs: BTreeMap<&'a str, PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the distractor forge described by `[forge]`.
pub fn run_forge(cfg: &RunConfig) -> Result<forge::ForgeOutput> {
    let spec = cfg
        .forge
        .as_ref()
        .ok_or_else(|| PipelineError::Validation("config has no [forge] section".into()))?;
    let manifest = load_manifest(cfg.targets.manifest.as_ref().expect("validated"))?;
    let embeddings = load_feature_matrix(&cfg.targets.semantics, None)?;
    let sal = cfg.saliency_config()?;
    let cal = forge::CalibrationConfig {
        n_saliency_pairs: spec.n_saliency_pairs,
        n_caption_items: spec.n_caption_items.min(embeddings.n_items()),
        target_pool: Some(spec.n_targets.min(manifest.len())),
    };
    let thresholds = forge::calibrate_thresholds(&manifest, &embeddings, &cal, &sal, cfg.seed)?;
    let fcfg = forge::ForgeConfig {
        n_targets: spec.n_targets,
        retry_budget: spec.retry_budget,
        seed: cfg.seed,
        saliency: sal,
    };
    Ok(forge::build_dataset(&manifest, &embeddings, &thresholds, &fcfg, &spec.out)?)
}

/// Full run from a config file: optional forge, all scoring stages,
/// `scores.csv`, report files and `run.lock.json` in the output directory.
pub fn run(config_path: &Path) -> Result<RunOutput> {
    let raw = std::fs::read(config_path)
        .map_err(|e| PipelineError::Validation(format!("{}: {e}", config_path.display())))?;
    let config = RunConfig::load(config_path)?;
    config.resolve()?;
    let mut forge_skipped = Vec::new();
    if config.forge.is_some() {
        let f = run_forge(&config)?;
        forge_skipped.extend(f.exhausted.iter().map(|(id, n)| format!("forge target {id}: exhausted after {n} draws")));
    }
    let session = Session::open(config)?;
    let mut out = session.run_all();
    out.skipped.splice(0..0, forge_skipped);

    let dir = &session.config.output_dir;
    create_dir(dir)?;
    let scores = dir.join(SCORES_FILE);
    write_score_table(&out.table, &scores)?;
    let mut outputs = BTreeMap::new();
    outputs.insert("scores", scores);
    if !out.table.is_empty() {
        report(&out.table, session.config.report.bins, &dir.join("report"))?;
        outputs.insert("report", dir.join("report"));
    }
    let lock = RunLock {
        version: env!("CARGO_PKG_VERSION"),
        seed: session.config.seed,
        config_sha256: sha256_hex(&raw),
        saliency_variant: session.config.saliency_config()?.variant_tag(),
        config: &session.config,
        resolved: &session.resolved,
        target_items: session.cache.items().len(),
        skipped: &out.skipped,
        outputs,
    };
    let json = serde_json::to_string_pretty(&lock).expect("lock serialises");
    std::fs::write(dir.join(LOCK_FILE), json + "\n")
        .map_err(|e| PipelineError::Data(format!("{}: {e}", dir.display())))?;
    Ok(out)
}
