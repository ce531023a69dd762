//! Cosine-distance RDMs and Spearman-based representational similarity.
//!
//! Dot products use eight interleaved accumulators followed by a fixed
//! reduction tree, so every cell is bitwise reproducible regardless of tiling
//! or thread count.

mod kernel;
mod rank;

use std::path::Path;

use rayon::prelude::*;

use crate::classes::DistractorClass;
use crate::tensorio::{self, FeatureMatrix, TensorIoError};

pub use kernel::dot;
pub use rank::{average_ranks, pearson, spearman_rho};

#[derive(Debug, thiserror::Error)]
pub enum RepSimError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("at least {min} values are required, found {found}")]
    TooShort { min: usize, found: usize },
    #[error("zero-norm vector{}", .0.as_ref().map(|s| format!(" for item {s:?}")).unwrap_or_default())]
    ZeroNorm(Option<String>),
    #[error("correlation undefined: input is constant")]
    Degenerate,
    #[error("RDM item lists differ")]
    ItemMismatch,
    #[error("cannot take a delta between {0}")]
    ScoreMismatch(String),
    #[error("invalid RDM: {0}")]
    InvalidRdm(String),
    #[error(transparent)]
    Io(#[from] TensorIoError),
}

pub type Result<T, E = RepSimError> = std::result::Result<T, E>;

/// `1 - u.v / (|u| |v|)`, clamped to `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(RepSimError::LengthMismatch(u.len(), v.len()));
    }
    let nu = dot(u, u);
    let nv = dot(v, v);
    if nu == 0.0 || nv == 0.0 {
        return Err(RepSimError::ZeroNorm(None));
    }
    Ok(distance_from_dots(dot(u, v), nu, nv))
}

#[inline]
pub(crate) fn distance_from_dots(uv: f64, uu: f64, vv: f64) -> f64 {
    let prod = uu * vv;
    let denom = if prod.is_finite() && prod > 0.0 {
        prod.sqrt()
    } else {
        uu.sqrt() * vv.sqrt()
    };
    (1.0 - uv / denom).clamp(0.0, 2.0)
}

/// Square, symmetric dissimilarity matrix over an ordered item list.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdm {
    items: Vec<String>,
    cells: Vec<f64>,
}

impl Rdm {
    /// Wraps precomputed cells, checking shape, symmetry and zero diagonal.
    pub fn from_cells(items: Vec<String>, cells: Vec<f64>) -> Result<Self> {
        let n = items.len();
        if n < 2 {
            return Err(RepSimError::InvalidRdm(format!("{n} items")));
        }
        if cells.len() != n * n {
            return Err(RepSimError::InvalidRdm(format!(
                "{} cells for {n} items",
                cells.len()
            )));
        }
        for i in 0..n {
            if cells[i * n + i] != 0.0 {
                return Err(RepSimError::InvalidRdm(format!("nonzero diagonal at {i}")));
            }
            for j in i + 1..n {
                let (a, b) = (cells[i * n + j], cells[j * n + i]);
                if !a.is_finite() || a != b {
                    return Err(RepSimError::InvalidRdm(format!(
                        "asymmetric or non-finite cell ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { items, cells })
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.n() + j]
    }

    /// Applies `f` to every off-diagonal cell.
    pub fn map_cells(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = self.n();
        let cells = self
            .cells
            .iter()
            .enumerate()
            .map(|(k, &c)| if k / n == k % n { 0.0 } else { f(c) })
            .collect();
        Self::from_cells(self.items.clone(), cells)
    }

    /// Sub-matrix over `ids`, in the order given.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let pos: std::collections::HashMap<&str, usize> =
            self.items.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let idx: Vec<usize> = ids
            .iter()
            .map(|id| pos.get(id.as_str()).copied().ok_or(RepSimError::ItemMismatch))
            .collect::<Result<_>>()?;
        let n = self.n();
        let cells = idx
            .iter()
            .flat_map(|&i| idx.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.cells[i * n + j])
            .collect();
        Self::from_cells(ids.to_vec(), cells)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        tensorio::write_matrix(path, &self.items, &self.cells, self.n())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (ids, cells, cols) = tensorio::read_matrix_raw(path)?;
        if cols != ids.len() {
            return Err(RepSimError::InvalidRdm(format!(
                "{} is {}x{}, expected square",
                path.display(),
                ids.len(),
                cols
            )));
        }
        Self::from_cells(ids, cells)
    }
}

/// Builds the cosine-distance RDM of the rows of `features`.
pub fn build_rdm(features: &FeatureMatrix) -> Result<Rdm> {
    let n = features.n_items();
    let norms: Vec<f64> = features.rows().map(|r| dot(r, r)).collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(RepSimError::ZeroNorm(Some(features.items()[i].clone())));
    }
    let dots = kernel::gram_upper(features.data(), n, features.dim());
    let mut cells = vec![0.0; n * n];
    for (i, row) in dots.iter().enumerate() {
        for (off, &uv) in row.iter().enumerate() {
            let j = i + 1 + off;
            let d = distance_from_dots(uv, norms[i], norms[j]);
            cells[i * n + j] = d;
            cells[j * n + i] = d;
        }
    }
    Ok(Rdm {
        items: features.items().to_vec(),
        cells,
    })
}

/// Strictly upper-triangular cells in row-major order.
pub fn upper_triangle(rdm: &Rdm) -> Vec<f64> {
    let n = rdm.n();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        out.extend_from_slice(&rdm.cells[i * n + i + 1..(i + 1) * n]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsaKind {
    Base,
    Dist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsaTarget {
    Saliency,
    Semantics,
    Brain,
    Unspecified,
}

impl RsaTarget {
    pub fn name(self) -> &'static str {
        match self {
            RsaTarget::Saliency => "saliency",
            RsaTarget::Semantics => "semantics",
            RsaTarget::Brain => "brain",
            RsaTarget::Unspecified => "unspecified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsaScore {
    pub rho: f64,
    pub n_pairs: usize,
    pub kind: RsaKind,
    pub target: RsaTarget,
    pub condition: Option<DistractorClass>,
}

impl RsaScore {
    pub fn with_target(mut self, target: RsaTarget) -> Self {
        self.target = target;
        self
    }

    /// Marks the score as computed from distractor-condition activations.
    pub fn as_dist(mut self, condition: DistractorClass) -> Self {
        self.kind = RsaKind::Dist;
        self.condition = Some(condition);
        self
    }
}

/// Spearman correlation between the upper triangles of two RDMs over the
/// same ordered items.
pub fn rsa(a: &Rdm, b: &Rdm) -> Result<RsaScore> {
    if a.items != b.items {
        return Err(RepSimError::ItemMismatch);
    }
    let (ta, tb) = rayon::join(|| upper_triangle(a), || upper_triangle(b));
    let rho = spearman_rho(&ta, &tb)?;
    Ok(RsaScore {
        rho,
        n_pairs: ta.len(),
        kind: RsaKind::Base,
        target: RsaTarget::Unspecified,
        condition: None,
    })
}

/// `|dist - base|` for a matching (Base, Dist) pair of scores.
pub fn delta_rsa(base: &RsaScore, dist: &RsaScore) -> Result<f64> {
    if base.kind != RsaKind::Base || dist.kind != RsaKind::Dist {
        return Err(RepSimError::ScoreMismatch(format!(
            "{:?} and {:?} scores",
            base.kind, dist.kind
        )));
    }
    if base.target != dist.target {
        return Err(RepSimError::ScoreMismatch(format!(
            "targets {} and {}",
            base.target.name(),
            dist.target.name()
        )));
    }
    Ok((dist.rho - base.rho).abs())
}

/// RSA for many (candidate, reference) pairs at once.
pub fn rsa_many(pairs: &[(&Rdm, &Rdm)]) -> Vec<Result<RsaScore>> {
    pairs.par_iter().map(|(a, b)| rsa(a, b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("i{i}")).collect()
    }

    fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(ids(rows.len()), rows, "t").unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_distance(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1., 0., 0.], &[0., 1., 0.]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            cosine_distance(&[1., 0.], &[1., 1.]).unwrap(),
            1.0 - 2f64.sqrt() / 2.0,
            epsilon = 1e-15
        );
        assert_eq!(cosine_distance(&[1., 0.], &[-1., 0.]).unwrap(), 2.0);
        assert!(matches!(
            cosine_distance(&[0., 0.], &[1., 0.]),
            Err(RepSimError::ZeroNorm(None))
        ));
        assert!(cosine_distance(&[1.], &[1., 0.]).is_err());
    }

    #[test]
    fn identical_rows_give_zero_rdm() {
        let r = vec![0.1, 0.7, -3.3, 1e-3];
        let rdm = build_rdm(&fm(&[r.clone(), r.clone(), r])).unwrap();
        assert!(rdm.cells().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn zero_row_reports_item() {
        let err = build_rdm(&fm(&[vec![1.0, 0.0], vec![0.0, 0.0]])).unwrap_err();
        match err {
            RepSimError::ZeroNorm(Some(id)) => assert_eq!(id, "i1"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn upper_triangle_order() {
        let n = 4;
        let mut cells = vec![0.0; 16];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let (a, b) = (i.min(j), i.max(j));
                    cells[i * n + j] = (10 * a + b) as f64;
                }
            }
        }
        let rdm = Rdm::from_cells(ids(4), cells).unwrap();
        assert_eq!(upper_triangle(&rdm), vec![1., 2., 3., 12., 13., 23.]);
        let two = Rdm::from_cells(ids(2), vec![0., 0.5, 0.5, 0.]).unwrap();
        assert_eq!(upper_triangle(&two), vec![0.5]);
    }

    #[test]
    fn lower_triangle_is_ignored() {
        // from_cells insists on symmetry; craft the asymmetric case directly
        let rdm = Rdm::from_cells(ids(3), vec![0., 1., 2., 1., 0., 3., 2., 3., 0.]).unwrap();
        let mut perturbed = rdm.clone();
        perturbed.cells[3] = 9.0;
        perturbed.cells[6] = -4.0;
        assert_eq!(upper_triangle(&rdm), upper_triangle(&perturbed));
    }

    #[test]
    fn from_cells_validates() {
        assert!(Rdm::from_cells(ids(2), vec![0., 1., 2., 0.]).is_err());
        assert!(Rdm::from_cells(ids(2), vec![1., 1., 1., 0.]).is_err());
        assert!(Rdm::from_cells(ids(2), vec![0., 1., 1.]).is_err());
    }

    #[test]
    fn rsa_self_and_monotone() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..5).map(|k| ((i * 7 + k * 3) % 11) as f64 + 0.5).collect())
            .collect();
        let d = build_rdm(&fm(&rows)).unwrap();
        let s = rsa(&d, &d).unwrap();
        assert_abs_diff_eq!(s.rho, 1.0, epsilon = 1e-12);
        assert_eq!(s.n_pairs, 15);
        let t = d.map_cells(|c| (3.0 * c).exp()).unwrap();
        assert_abs_diff_eq!(rsa(&d, &t).unwrap().rho, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rsa_requires_same_items() {
        let a = Rdm::from_cells(ids(3), vec![0., 1., 2., 1., 0., 3., 2., 3., 0.]).unwrap();
        let mut other = ids(3);
        other.swap(0, 1);
        let b = Rdm::from_cells(other, a.cells().to_vec()).unwrap();
        assert!(matches!(rsa(&a, &b), Err(RepSimError::ItemMismatch)));
    }

    fn score(rho: f64, kind: RsaKind, target: RsaTarget) -> RsaScore {
        RsaScore {
            rho,
            n_pairs: 45,
            kind,
            target,
            condition: None,
        }
    }

    #[test]
    fn delta_examples() {
        let b = score(0.30, RsaKind::Base, RsaTarget::Saliency);
        let d = score(0.18, RsaKind::Dist, RsaTarget::Saliency);
        assert_abs_diff_eq!(delta_rsa(&b, &d).unwrap(), 0.12, epsilon = 1e-15);
        let b = score(-0.10, RsaKind::Base, RsaTarget::Semantics);
        let d = score(0.10, RsaKind::Dist, RsaTarget::Semantics);
        assert_abs_diff_eq!(delta_rsa(&b, &d).unwrap(), 0.20, epsilon = 1e-15);
        let wrong = score(0.1, RsaKind::Dist, RsaTarget::Saliency);
        assert!(delta_rsa(&b, &wrong).is_err());
        assert!(delta_rsa(&d, &b).is_err());
    }

    #[test]
    fn rdm_round_trips_through_npy() {
        let dir = tempfile::tempdir().unwrap();
        let d = build_rdm(&fm(&[vec![1., 2.], vec![2., 1.], vec![0.5, 3.]])).unwrap();
        let p = dir.path().join("rdm.npy");
        d.save(&p).unwrap();
        assert_eq!(Rdm::load(&p).unwrap(), d);
    }
}
