#![allow(dead_code)]

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repalign::forge::{
    build_dataset, calibrate_thresholds, CalibrationConfig, ForgeConfig, ForgeOutput, ThresholdSpec,
};
use repalign::metrics::{BASELINE, BRAIN_SCORE, RSA_SALIENCY, RSA_SEMANTICS};
use repalign::saliency::SaliencyConfig;
use repalign::tensorio::{
    load_feature_matrix, load_manifest, save_feature_matrix, DatasetManifest, FeatureMatrix, ScoreRow, ScoreTable,
};
use sha2::{Digest, Sha256};

pub const WHITE: [u8; 3] = [255, 255, 255];
pub const BLACK: [u8; 3] = [0, 0, 0];
pub const GRAY: [u8; 3] = [128, 128, 128];

/// Filled disk of radius `r` centred at pixel-centre coordinates (cx, cy).
pub fn disk(w: u32, h: u32, cx: f64, cy: f64, r: f64, fg: [u8; 3], bg: [u8; 3]) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        if dx * dx + dy * dy <= r * r {
            Rgb(fg)
        } else {
            Rgb(bg)
        }
    })
}

pub fn uniform(w: u32, h: u32, c: [u8; 3]) -> RgbImage {
    RgbImage::from_pixel(w, h, Rgb(c))
}

pub fn checker(w: u32, h: u32, cell: u32, a: [u8; 3], b: [u8; 3]) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| if (x / cell + y / cell) % 2 == 0 { Rgb(a) } else { Rgb(b) })
}

/// Bar of the given half-length and half-width through the image centre,
/// rotated by `deg` (counter-clockwise in image coordinates with y down).
pub fn bar(size: u32, deg: f64, half_len: f64, half_w: f64, fg: [u8; 3], bg: [u8; 3]) -> RgbImage {
    let (s, c) = deg.to_radians().sin_cos();
    let m = size as f64 / 2.0;
    RgbImage::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - m, -(y as f64 + 0.5 - m));
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        if along.abs() <= half_len && across.abs() <= half_w {
            Rgb(fg)
        } else {
            Rgb(bg)
        }
    })
}

/// Clockwise quarter turn.
pub fn rotate_cw(img: &RgbImage) -> RgbImage {
    image::imageops::rotate90(img)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| normal(rng)).collect()).collect()
}

/// Box-Muller standard normal.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i:04}")).collect()
}

pub fn save_rows(path: &Path, ids: &[String], rows: &[Vec<f64>]) {
    let m = FeatureMatrix::from_rows(ids.to_vec(), rows, "fixture").unwrap();
    save_feature_matrix(path, &m).unwrap();
}

/// Three copies of a white disk on gray, plus four distractors: gray
/// camouflage and a large white-on-black disk, each in two caption
/// clusters. Targets and the `_a` distractors share caption embedding e1;
/// the `_b` distractors use e2.
pub struct ForgeCorpus {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
}

pub const CORPUS_IDS: [&str; 7] = ["t0", "t1", "t2", "gray_a", "loud_a", "gray_b", "loud_b"];

pub fn forge_corpus(dir: &Path) -> ForgeCorpus {
    std::fs::create_dir_all(dir.join("img")).unwrap();
    let objects = [
        disk(256, 256, 128.0, 128.0, 28.0, WHITE, GRAY),
        disk(256, 256, 128.0, 128.0, 28.0, WHITE, GRAY),
        disk(256, 256, 128.0, 128.0, 28.0, WHITE, GRAY),
    ];
    let loud = disk(256, 256, 128.0, 128.0, 80.0, WHITE, BLACK);
    let images = [
        objects[0].clone(),
        objects[1].clone(),
        objects[2].clone(),
        uniform(256, 256, GRAY),
        loud.clone(),
        uniform(256, 256, GRAY),
        loud,
    ];
    let mut csv = String::from("image_id,image_path,labels\n");
    for (id, img) in CORPUS_IDS.iter().zip(&images) {
        let rel = format!("img/{id}.png");
        img.save(dir.join(&rel)).unwrap();
        csv.push_str(&format!("{id},{rel},\n"));
    }
    let manifest = dir.join("manifest.csv");
    std::fs::write(&manifest, csv).unwrap();
    let rows: Vec<Vec<f64>> = CORPUS_IDS
        .iter()
        .map(|id| if id.ends_with("_b") { vec![0.0, 1.0, 0.0] } else { vec![1.0, 0.0, 0.0] })
        .collect();
    let embeddings = dir.join("captions.npy");
    save_rows(&embeddings, &CORPUS_IDS.map(String::from), &rows);
    ForgeCorpus {
        dir: dir.to_path_buf(),
        manifest,
        embeddings,
    }
}

pub const CLOSED_LOOP_SEED: u64 = 1;

pub fn corpus_inputs(c: &ForgeCorpus) -> (DatasetManifest, FeatureMatrix) {
    (
        load_manifest(&c.manifest).unwrap(),
        load_feature_matrix(&c.embeddings, None).unwrap(),
    )
}

pub fn calibrate_corpus(c: &ForgeCorpus, seed: u64) -> ThresholdSpec {
    let (m, e) = corpus_inputs(c);
    let cal = CalibrationConfig {
        n_saliency_pairs: 60,
        n_caption_items: CORPUS_IDS.len(),
        target_pool: Some(3),
    };
    calibrate_thresholds(&m, &e, &cal, &SaliencyConfig::default(), seed).unwrap()
}

/// Calibrates on the corpus and forges all three targets into `out`.
pub fn forge_corpus_dataset(c: &ForgeCorpus, out: &Path, seed: u64) -> (ThresholdSpec, ForgeOutput) {
    let (m, e) = corpus_inputs(c);
    let t = calibrate_corpus(c, seed);
    let cfg = ForgeConfig {
        n_targets: 3,
        retry_budget: 200,
        seed,
        saliency: SaliencyConfig::default(),
    };
    let out = build_dataset(&m, &e, &t, &cfg, out).unwrap();
    (t, out)
}

pub fn sha256_file(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn layer_row(unit: &str, index: i64, metric: &str, value: f64) -> ScoreRow {
    ScoreRow {
        system: "toy".into(),
        unit: unit.into(),
        unit_index: index,
        condition: BASELINE.into(),
        metric: metric.into(),
        value,
        n_items: 50,
        seed: 0,
    }
}

/// Twelve layers: six with negative saliency RSA, six non-negative.
pub fn toy_table() -> ScoreTable {
    let mut rows = Vec::new();
    for k in 0..12 {
        let unit = format!("l{k}");
        let sal = if k < 6 { -0.05 * (k + 1) as f64 } else { 0.04 * (k - 5) as f64 };
        let sem = 0.05 * k as f64 + 0.01 * ((k * 7) % 5) as f64;
        let brain = 0.3 * sem + 0.02 * ((k * 3) % 4) as f64 - 0.1 * sal;
        rows.push(layer_row(&unit, k as i64, RSA_SALIENCY, sal));
        rows.push(layer_row(&unit, k as i64, RSA_SEMANTICS, sem));
        rows.push(layer_row(&unit, k as i64, BRAIN_SCORE, brain));
    }
    ScoreTable::from_rows(rows).unwrap()
}

pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for k in 0..a.len() {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    1.0 - ab / (aa.sqrt() * bb.sqrt())
}

/// Rank = 1 + #smaller + (#equal - 1) / 2.
pub fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn naive_spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (naive_ranks(x), naive_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Lower-triangular `l` with `l * l^T = a` for a symmetric positive-definite
/// `a`.
pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                assert!(d > 0.0, "matrix is not positive definite");
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Features whose cosine distances are `1 - d / lambda`: rows of the
/// Cholesky factor of `d + lambda * I`, with `lambda` above every row sum of
/// `d` so the shifted matrix is diagonally dominant.
pub fn inverted_features(d: &repalign::repsim::Rdm) -> Vec<Vec<f64>> {
    let n = d.n();
    let lambda = (0..n).map(|i| (0..n).map(|j| d.get(i, j)).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    let g: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { lambda } else { d.get(i, j) }).collect())
        .collect();
    cholesky(&g)
}

/// Sort, then interpolate between the order statistics around
/// rank p/100 * (n - 1) in integer arithmetic; one rounding at the end.
pub fn integer_oracle(values: &[i64], p: u32) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let num = p as usize * (v.len() - 1);
    let (lo, rem) = (num / 100, (num % 100) as i64);
    if rem == 0 {
        return v[lo] as f64;
    }
    (v[lo] * (100 - rem) + v[lo + 1] * rem) as f64 / 100.0
}

/// Sides of at least 256 px, aspect between 1:3 and 3:1.
pub fn photo_dims(r: &mut ChaCha8Rng) -> (u32, u32) {
    loop {
        let (w, h) = (r.random_range(256..2048u32), r.random_range(256..2048u32));
        if w <= 3 * h && h <= 3 * w {
            return (w, h);
        }
    }
}
