//! `manifest.csv` (`image_id,image_path,labels`) plus an optional companion
//! `captions.json` mapping each image id to its caption strings.
//!
//! `labels` is a `;`-separated list of category names and may be empty.
//! Relative image paths are resolved against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use super::{Result, TensorIoError};

pub const MANIFEST_HEADER: [&str; 3] = ["image_id", "image_path", "labels"];
pub const CAPTIONS_FILE: &str = "captions.json";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub image_path: PathBuf,
    pub captions: Vec<String>,
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.image_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == id)
    }

    /// Number of images carrying each caption count, e.g. `{5: 1148, 6: 2}`.
    pub fn caption_counts(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.captions.len()).or_insert(0) += 1;
        }
        out
    }
}

pub fn load_captions(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(super::io_err(path))?;
    serde_json::from_str(&text).map_err(|e| TensorIoError::Json {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Loads a manifest. `captions.json` is read from the same directory when
/// present; otherwise every entry has an empty caption list.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(TensorIoError::MissingFile(path.to_path_buf()));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let captions_path = base.join(CAPTIONS_FILE);
    let captions = if captions_path.exists() {
        load_captions(&captions_path)?
    } else {
        BTreeMap::new()
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| TensorIoError::MalformedRow {
            line: 1,
            msg: e.to_string(),
        })?;
    let header = rdr
        .headers()
        .map_err(|e| TensorIoError::MalformedRow {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if header.len() < 2 || header.get(0) != Some("image_id") || header.get(1) != Some("image_path") {
        return Err(TensorIoError::MalformedRow {
            line: 1,
            msg: format!("expected header {}", MANIFEST_HEADER.join(",")),
        });
    }
    let has_labels = header.get(2) == Some("labels");

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TensorIoError::MalformedRow {
            line,
            msg: e.to_string(),
        })?;
        let id = rec.get(0).unwrap_or_default().trim().to_string();
        let rel = rec.get(1).unwrap_or_default().trim();
        if id.is_empty() || rel.is_empty() {
            return Err(TensorIoError::MalformedRow {
                line,
                msg: "empty image_id or image_path".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(TensorIoError::DuplicateId(id));
        }
        let image_path = base.join(rel);
        if !image_path.exists() {
            return Err(TensorIoError::MissingFile(image_path));
        }
        let labels = if has_labels {
            let raw = rec.get(2).unwrap_or_default();
            let set: Vec<String> = raw
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            Some(set)
        } else {
            None
        };
        entries.push(ManifestEntry {
            captions: captions.get(&id).cloned().unwrap_or_default(),
            image_id: id,
            image_path,
            labels,
        });
    }

    let dataset_name = base
        .file_name()
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(DatasetManifest {
        dataset_name,
        entries,
    })
}
