use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::classes::DistractorClass;
use crate::saliency::{Normalization, SaliencyConfig};

/// Top-level run configuration, read from TOML. Relative paths are resolved
/// against the directory holding the config file.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// `localmax` (default) or `range`.
    #[serde(default = "default_variant")]
    pub saliency_variant: String,
    pub targets: TargetPaths,
    #[serde(default)]
    pub networks: Vec<NetworkSpec>,
    #[serde(default)]
    pub brain: Vec<BrainSpec>,
    #[serde(default)]
    pub brain_score: BrainScoreSpec,
    #[serde(default)]
    pub meta: MetaSpec,
    pub forge: Option<ForgeSpec>,
    #[serde(default)]
    pub report: ReportSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TargetPaths {
    /// Image manifest; required when `saliency` is absent or `[forge]` is set.
    pub manifest: Option<PathBuf>,
    /// Precomputed saliency feature matrix. Computed from the manifest
    /// images when absent.
    pub saliency: Option<PathBuf>,
    /// Per-image caption embeddings.
    pub semantics: PathBuf,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: String,
    /// Glob over per-layer `.npy` files; the file stem names the layer.
    pub layers: String,
    /// Distractor class label -> glob over that condition's layer files.
    #[serde(default)]
    pub conditions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BrainSpec {
    pub subject: String,
    pub roi: String,
    pub responses: PathBuf,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BrainScoreSpec {
    /// ROI whose responses define a layer's brain score.
    #[serde(default = "default_roi")]
    pub roi: String,
}

impl Default for BrainScoreSpec {
    fn default() -> Self {
        Self { roi: default_roi() }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MetaSpec {
    #[serde(default = "default_permutations")]
    pub n_perm: usize,
}

impl Default for MetaSpec {
    fn default() -> Self {
        Self {
            n_perm: default_permutations(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ForgeSpec {
    pub out: PathBuf,
    #[serde(default = "default_targets")]
    pub n_targets: usize,
    #[serde(default = "default_retry")]
    pub retry_budget: usize,
    #[serde(default = "default_sal_pairs")]
    pub n_saliency_pairs: usize,
    #[serde(default = "default_caption_items")]
    pub n_caption_items: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl Default for ReportSpec {
    fn default() -> Self {
        Self { bins: default_bins() }
    }
}

fn default_variant() -> String {
    "localmax".into()
}
fn default_roi() -> String {
    "OTC".into()
}
fn default_permutations() -> usize {
    crate::analysis::DEFAULT_PERMUTATIONS
}
fn default_targets() -> usize {
    1150
}
fn default_retry() -> usize {
    200
}
fn default_sal_pairs() -> usize {
    1000
}
fn default_caption_items() -> usize {
    5000
}
fn default_bins() -> usize {
    5
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Validation(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.rebase(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative paths absolute with respect to `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_glob = |g: &mut String| {
            if Path::new(g.as_str()).is_relative() {
                *g = base.join(g.as_str()).to_string_lossy().into_owned();
            }
        };
        fix(&mut self.output_dir);
        if let Some(p) = self.targets.manifest.as_mut() {
            fix(p);
        }
        if let Some(p) = self.targets.saliency.as_mut() {
            fix(p);
        }
        fix(&mut self.targets.semantics);
        for n in &mut self.networks {
            fix_glob(&mut n.layers);
            for g in n.conditions.values_mut() {
                fix_glob(g);
            }
        }
        for b in &mut self.brain {
            fix(&mut b.responses);
        }
        if let Some(f) = self.forge.as_mut() {
            fix(&mut f.out);
        }
    }

    pub fn saliency_config(&self) -> Result<SaliencyConfig, PipelineError> {
        saliency_variant(&self.saliency_variant)
    }

    /// Checks paths, globs and labels, and expands every glob.
    pub fn resolve(&self) -> Result<ResolvedConfig, PipelineError> {
        let bad = PipelineError::Validation;
        self.saliency_config()?;
        let must_exist = |p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(bad(format!("{} does not exist", p.display())))
            }
        };
        if self.targets.saliency.is_none() && self.targets.manifest.is_none() {
            return Err(bad("targets need a saliency matrix or an image manifest".into()));
        }
        if self.forge.is_some() && self.targets.manifest.is_none() {
            return Err(bad("[forge] needs targets.manifest".into()));
        }
        for p in [&self.targets.manifest, &self.targets.saliency].into_iter().flatten() {
            must_exist(p)?;
        }
        must_exist(&self.targets.semantics)?;
        for b in &self.brain {
            must_exist(&b.responses)?;
        }
        if self.report.bins == 0 {
            return Err(bad("report.bins must be positive".into()));
        }
        if self.meta.n_perm < 100 {
            return Err(bad(format!("meta.n_perm {} is below 100", self.meta.n_perm)));
        }

        let mut networks = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for n in &self.networks {
            if !seen.insert(n.name.as_str()) || n.name == "brain" || n.name == "meta" {
                return Err(bad(format!("network name {:?} is reserved or repeated", n.name)));
            }
            let layers = expand_glob(&n.layers)?;
            let mut conditions = Vec::new();
            for (label, pattern) in &n.conditions {
                let class: DistractorClass = label
                    .parse()
                    .map_err(|_| bad(format!("unknown distractor condition {label:?}")))?;
                conditions.push((class, expand_glob(pattern)?));
            }
            conditions.sort_by_key(|(c, _)| *c);
            networks.push(ResolvedNetwork {
                name: n.name.clone(),
                layers,
                conditions,
            });
        }
        Ok(ResolvedConfig { networks })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedNetwork {
    pub name: String,
    pub layers: Vec<PathBuf>,
    pub conditions: Vec<(DistractorClass, Vec<PathBuf>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub networks: Vec<ResolvedNetwork>,
}

/// Saliency settings for a variant name: `localmax` or `range`.
pub fn saliency_variant(name: &str) -> Result<SaliencyConfig, PipelineError> {
    let normalization = match name {
        "localmax" => Normalization::LocalMaxima,
        "range" => Normalization::RangeOnly,
        other => {
            return Err(PipelineError::Validation(format!(
                "unknown saliency variant {other:?} (expected localmax or range)"
            )))
        }
    };
    Ok(SaliencyConfig {
        normalization,
        ..SaliencyConfig::default()
    })
}

/// Layer name of a feature file: its stem.
pub fn layer_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Files matching `pattern`, naturally sorted (`layer2` before `layer10`).
/// An empty match is a validation error.
pub fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>, PipelineError> {
    let paths = glob::glob(pattern).map_err(|e| PipelineError::Validation(format!("{pattern}: {e}")))?;
    let mut out: Vec<PathBuf> = paths
        .filter_map(|p| p.ok())
        .filter(|p| p.is_file())
        .collect();
    if out.is_empty() {
        return Err(PipelineError::Validation(format!("{pattern} matches no files")));
    }
    out.sort_by(|a, b| natural_cmp(&a.to_string_lossy(), &b.to_string_lossy()));
    Ok(out)
}

/// Compares digit runs numerically and everything else bytewise.
pub fn natural_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i].is_ascii_digit() && b[j].is_ascii_digit() {
            let si = i;
            while i < a.len() && a[i].is_ascii_digit() {
                i += 1;
            }
            let sj = j;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            let na = std::str::from_utf8(&a[si..i]).unwrap().trim_start_matches('0');
            let nb = std::str::from_utf8(&b[sj..j]).unwrap().trim_start_matches('0');
            let ord = na.len().cmp(&nb.len()).then_with(|| na.cmp(nb)).then_with(|| (i - si).cmp(&(j - sj)));
            if ord != Ordering::Equal {
                return ord;
            }
        } else {
            if a[i] != b[j] {
                return a[i].cmp(&b[j]);
            }
            i += 1;
            j += 1;
        }
    }
    (a.len() - i).cmp(&(b.len() - j))
}
