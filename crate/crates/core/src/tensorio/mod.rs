//! Array, manifest and score-table interchange.
//!
//! Every matrix lives in an NPY file (`<name>.npy`, little-endian `f64`, C
//! order) next to a UTF-8 sidecar `<name>.ids.txt` listing one image id per
//! line in row order.

mod manifest;
pub mod npy;
mod table;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

pub use manifest::{load_captions, load_manifest, DatasetManifest, ManifestEntry};
pub use table::{format_float, read_score_table, write_score_table, ScoreRow, ScoreTable, SCORE_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum TensorIoError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("item ids do not match: missing {missing:?}, unexpected {unexpected:?}")]
    IdMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("non-finite entry at row {row} ({item}), column {col}")]
    NonFinite { row: usize, col: usize, item: String },
    #[error("at least two items are required, found {0}")]
    TooFewItems(usize),
    #[error("duplicate score key {0}")]
    DuplicateKey(String),
    #[error("malformed row {line}: {msg}")]
    MalformedRow { line: usize, msg: String },
    #[error("value {value} for metric {metric:?} is outside its valid range")]
    OutOfRange { metric: String, value: f64 },
    #[error("cannot average an empty list of embeddings")]
    EmptyList,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid JSON in {path}: {msg}")]
    Json { path: PathBuf, msg: String },
}

pub type Result<T, E = TensorIoError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TensorIoError + '_ {
    move |source| TensorIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Row-per-image feature matrix (activations, flattened saliency maps,
/// caption embeddings or ROI responses).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    items: Vec<String>,
    data: Vec<f64>,
    dim: usize,
    source_tag: String,
}

impl FeatureMatrix {
    /// Builds a validated matrix from row-major `data` with `dim` columns.
    pub fn new(
        items: Vec<String>,
        data: Vec<f64>,
        dim: usize,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        if items.len() < 2 {
            return Err(TensorIoError::TooFewItems(items.len()));
        }
        if dim == 0 {
            return Err(TensorIoError::Shape("feature dimension must be at least 1".into()));
        }
        if data.len() != items.len() * dim {
            return Err(TensorIoError::Shape(format!(
                "{} ids but {} values for {} columns",
                items.len(),
                data.len(),
                dim
            )));
        }
        let mut seen = HashSet::with_capacity(items.len());
        for id in &items {
            if !seen.insert(id.as_str()) {
                return Err(TensorIoError::DuplicateId(id.clone()));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorIoError::NonFinite {
                row: pos / dim,
                col: pos % dim,
                item: items[pos / dim].clone(),
            });
        }
        Ok(Self {
            items,
            data,
            dim,
            source_tag: source_tag.into(),
        })
    }

    /// Builds a matrix from explicit rows.
    pub fn from_rows(
        items: Vec<String>,
        rows: &[Vec<f64>],
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(TensorIoError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(items, data, dim, source_tag)
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn set_source_tag(&mut self, tag: impl Into<String>) {
        self.source_tag = tag.into();
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Re-orders rows so that they follow `expected` exactly. The id sets must
    /// be equal.
    pub fn reorder(&self, expected: &[String]) -> Result<Self> {
        let index = self.index_of();
        let want: HashSet<&str> = expected.iter().map(String::as_str).collect();
        let mut missing: Vec<String> = expected
            .iter()
            .filter(|id| !index.contains_key(id.as_str()))
            .cloned()
            .collect();
        let mut unexpected: Vec<String> = self
            .items
            .iter()
            .filter(|id| !want.contains(id.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() || !unexpected.is_empty() || want.len() != expected.len() {
            missing.sort();
            unexpected.sort();
            if missing.is_empty() && unexpected.is_empty() {
                let dup = first_duplicate(expected).unwrap_or_default();
                return Err(TensorIoError::DuplicateId(dup));
            }
            return Err(TensorIoError::IdMismatch {
                missing,
                unexpected,
            });
        }
        self.gather(expected, &index)
    }

    /// Keeps only the rows named in `ids`, in that order. Every id must be
    /// present; extra rows are dropped.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let index = self.index_of();
        let mut missing: Vec<String> = ids
            .iter()
            .filter(|id| !index.contains_key(id.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            missing.sort();
            return Err(TensorIoError::IdMismatch {
                missing,
                unexpected: Vec::new(),
            });
        }
        self.gather(ids, &index)
    }

    fn index_of(&self) -> HashMap<&str, usize> {
        self.items
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    fn gather(&self, ids: &[String], index: &HashMap<&str, usize>) -> Result<Self> {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for id in ids {
            data.extend_from_slice(self.row(index[id.as_str()]));
        }
        Self::new(ids.to_vec(), data, self.dim, self.source_tag.clone())
    }
}

fn first_duplicate(ids: &[String]) -> Option<String> {
    let mut seen = HashSet::new();
    ids.iter().find(|id| !seen.insert(id.as_str())).cloned()
}

/// `foo/bar.npy` -> `foo/bar.ids.txt`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("ids.txt")
}

pub fn read_ids(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Err(TensorIoError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

pub fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut text = String::with_capacity(ids.len() * 16);
    for id in ids {
        text.push_str(id);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// Reads a raw 2-D NPY array with its id sidecar, without feature-matrix
/// validation beyond shape agreement.
pub fn read_matrix_raw(path: &Path) -> Result<(Vec<String>, Vec<f64>, usize)> {
    if !path.exists() {
        return Err(TensorIoError::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(io_err(path))?;
    let arr = npy::read_npy(BufReader::new(file)).map_err(io_err(path))?;
    let ids = read_ids(&sidecar_path(path))?;
    let (rows, cols) = match arr.shape.as_slice() {
        [r, c] => (*r, *c),
        [r] => (*r, 1),
        other => {
            return Err(TensorIoError::Shape(format!(
                "{} has shape {:?}, expected 2-D",
                path.display(),
                other
            )))
        }
    };
    if rows != ids.len() {
        return Err(TensorIoError::Shape(format!(
            "{} has {} rows but its sidecar lists {} ids",
            path.display(),
            rows,
            ids.len()
        )));
    }
    Ok((ids, arr.data, cols))
}

/// Loads a feature matrix and optionally canonicalises its row order.
pub fn load_feature_matrix(path: &Path, expected_items: Option<&[String]>) -> Result<FeatureMatrix> {
    let (ids, data, cols) = read_matrix_raw(path)?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let fm = FeatureMatrix::new(ids, data, cols, tag)?;
    match expected_items {
        Some(expected) => fm.reorder(expected),
        None => Ok(fm),
    }
}

/// Writes a 2-D `rows x cols` array and its id sidecar.
pub fn write_matrix(path: &Path, ids: &[String], data: &[f64], cols: usize) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    npy::write_npy(&mut w, &[ids.len(), cols], data).map_err(io_err(path))?;
    std::io::Write::flush(&mut w).map_err(io_err(path))?;
    write_ids(&sidecar_path(path), ids)
}

pub fn save_feature_matrix(path: &Path, fm: &FeatureMatrix) -> Result<()> {
    write_matrix(path, fm.items(), fm.data(), fm.dim())
}

/// Component-wise arithmetic mean of per-caption embedding vectors.
pub fn average_caption_embeddings(per_caption: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = per_caption.first().ok_or(TensorIoError::EmptyList)?;
    let dim = first.len();
    let mut acc = vec![0.0; dim];
    for v in per_caption {
        if v.len() != dim {
            return Err(TensorIoError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = per_caption.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}
