//! Itti-Koch style bottom-up saliency.
//!
//! Images are resized so their shorter side is 256 px, split into intensity,
//! red/green and blue/yellow opponency, and four Gabor orientation channels.
//! Each channel runs through a 9-level Gaussian pyramid; center-surround
//! differences at centers {2, 3, 4} and surrounds center + {3, 4} are
//! normalised, summed across scales on the level-4 lattice, and the three
//! conspicuity maps are averaged and resampled to 256 x 256.

mod gabor;
mod map;
mod pyramid;

use std::path::Path;

use rayon::prelude::*;

use crate::tensorio::{FeatureMatrix, TensorIoError};

pub use gabor::GaborPair;
pub use map::Map;
pub use pyramid::{blur, center_surround, gaussian_pyramid, level_dims, reduce};

pub const MAP_SIZE: usize = 256;
pub const MIN_IMAGE_SIDE: usize = 64;
/// Feature maps whose peak falls below this are numerically flat and are
/// treated as empty. Inputs are scaled to `[0, 1]`.
const FLAT_FLOOR: f64 = 1e-9;

pub type RgbImage = image::RgbImage;

#[derive(Debug, thiserror::Error)]
pub enum SaliencyError {
    #[error("image is {width}x{height}; at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE} is required")]
    Undersized { width: u32, height: u32 },
    #[error("a {width}x{height} map cannot hold a {levels}-level pyramid")]
    TooSmall {
        width: usize,
        height: usize,
        levels: usize,
    },
    #[error("invalid pyramid levels: {0}")]
    InvalidLevels(String),
    #[error("cannot decode {path}: {msg}")]
    Decode { path: String, msg: String },
    #[error("cannot write {path}: {msg}")]
    Encode { path: String, msg: String },
    #[error("at least two saliency maps are required")]
    TooFewMaps,
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
}

pub type Result<T, E = SaliencyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Intensity,
    Color,
    Orientation,
}

/// Map normalisation operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Scale to `[0, 1]`, then weight by `(1 - mean_local_max)^2`, the mean
    /// taken over local maxima other than the global one.
    LocalMaxima,
    /// Scale to `[0, 1]` only.
    RangeOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyConfig {
    pub levels: usize,
    pub centers: Vec<usize>,
    pub deltas: Vec<usize>,
    pub orientations: Vec<f64>,
    pub gabor_wavelength: f64,
    pub gabor_octaves: f64,
    pub normalization: Normalization,
    /// Local maxima below this fraction of the global maximum are ignored.
    pub local_max_threshold: f64,
    /// Pyramid level whose lattice holds the conspicuity maps.
    pub accumulation_level: usize,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            levels: 9,
            centers: vec![2, 3, 4],
            deltas: vec![3, 4],
            orientations: vec![0.0, 45.0, 90.0, 135.0],
            gabor_wavelength: 4.0,
            gabor_octaves: 1.0,
            normalization: Normalization::LocalMaxima,
            local_max_threshold: 0.1,
            accumulation_level: 4,
        }
    }
}

impl SaliencyConfig {
    /// Short identifier recorded alongside outputs.
    pub fn variant_tag(&self) -> String {
        let norm = match self.normalization {
            Normalization::LocalMaxima => "localmax",
            Normalization::RangeOnly => "range",
        };
        format!(
            "itti-koch/{norm}/L{}-c{:?}-d{:?}-gabor{}",
            self.levels, self.centers, self.deltas, self.gabor_wavelength
        )
    }

    fn finest_center(&self) -> usize {
        self.centers.iter().copied().min().unwrap_or(0)
    }
}

/// 256 x 256 saliency map of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub image_id: String,
    grid: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(image_id: impl Into<String>, grid: Vec<f64>) -> Self {
        assert_eq!(grid.len(), MAP_SIZE * MAP_SIZE);
        Self {
            image_id: image_id.into(),
            grid,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.grid[row * MAP_SIZE + col]
    }

    pub fn as_map(&self) -> Map {
        Map::new(MAP_SIZE, MAP_SIZE, self.grid.clone())
    }

    /// `(row, col)` of the first maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let (x, y) = self.as_map().argmax();
        (y, x)
    }

    pub fn max(&self) -> f64 {
        self.grid.iter().copied().fold(0.0, f64::max)
    }

    /// Writes an 8-bit grayscale heatmap scaled to the map's maximum.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let max = self.max();
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        let px: Vec<u8> = self
            .grid
            .iter()
            .map(|v| (v * scale).round().clamp(0.0, 255.0) as u8)
            .collect();
        let img = image::GrayImage::from_raw(MAP_SIZE as u32, MAP_SIZE as u32, px)
            .expect("grid has MAP_SIZE^2 cells");
        img.save(path).map_err(|e| SaliencyError::Encode {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }
}

pub fn load_image(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| SaliencyError::Decode {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

fn validate(img: &RgbImage) -> Result<()> {
    if (img.width() as usize) < MIN_IMAGE_SIDE || (img.height() as usize) < MIN_IMAGE_SIDE {
        return Err(SaliencyError::Undersized {
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(())
}

/// Scale so that the shorter side becomes `MAP_SIZE`.
fn working_dims(w: usize, h: usize) -> (usize, usize) {
    let short = w.min(h) as f64;
    let s = MAP_SIZE as f64 / short;
    let scaled = |v: usize| ((v as f64 * s).round() as usize).max(MAP_SIZE);
    if w <= h {
        (MAP_SIZE, scaled(h))
    } else {
        (scaled(w), MAP_SIZE)
    }
}

/// Red, green and blue planes in `[0, 1]`, resampled to the working size.
fn rgb_planes(img: &RgbImage) -> [Map; 3] {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = |c: usize| {
        Map::from_fn(w, h, |x, y| {
            img.get_pixel(x as u32, y as u32).0[c] as f64 / 255.0
        })
    };
    let (ww, wh) = working_dims(w, h);
    [plane(0), plane(1), plane(2)].map(|p| p.resize_bilinear(ww, wh))
}

struct Features {
    intensity: Map,
    rg: Map,
    by: Map,
}

fn features(img: &RgbImage) -> Features {
    let [r, g, b] = rgb_planes(img);
    let intensity = Map::from_fn(r.width(), r.height(), |x, y| {
        (r.get(x, y) + g.get(x, y) + b.get(x, y)) / 3.0
    });
    // hue is only meaningful where there is enough light
    let gate = intensity.max() / 10.0;
    let (w, h) = (r.width(), r.height());
    let mut rg = Vec::with_capacity(w * h);
    let mut by = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = intensity.get(x, y);
            let (rn, gn, bn) = if i > gate && i > 0.0 {
                (r.get(x, y) / i, g.get(x, y) / i, b.get(x, y) / i)
            } else {
                (0.0, 0.0, 0.0)
            };
            let big_r = (rn - (gn + bn) / 2.0).max(0.0);
            let big_g = (gn - (rn + bn) / 2.0).max(0.0);
            let big_b = (bn - (rn + gn) / 2.0).max(0.0);
            let big_y = ((rn + gn) / 2.0 - (rn - gn).abs() / 2.0 - bn).max(0.0);
            rg.push(big_r - big_g);
            by.push(big_b - big_y);
        }
    }
    Features {
        intensity,
        rg: Map::new(w, h, rg),
        by: Map::new(w, h, by),
    }
}

/// Applies the configured normalisation operator.
pub fn normalize(map: &Map, cfg: &SaliencyConfig) -> Map {
    let max = map.max();
    if !(max > FLAT_FLOOR) {
        return Map::filled(map.width(), map.height(), 0.0);
    }
    let scaled = map.map(|v| v.max(0.0) / max);
    match cfg.normalization {
        Normalization::RangeOnly => scaled,
        Normalization::LocalMaxima => {
            let mean = mean_local_maxima(&scaled, cfg.local_max_threshold);
            let w = (1.0 - mean).powi(2);
            scaled.map(|v| v * w)
        }
    }
}

/// Mean of the local maxima (8-neighbourhood, value >= threshold) other than
/// the one holding the global maximum; zero when there are none. A connected
/// plateau of equal cells is one maximum.
fn mean_local_maxima(map: &Map, threshold: f64) -> f64 {
    const TIE: f64 = 1e-9;
    let (w, h) = (map.width(), map.height());
    let global = map.argmax();
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let (mut sum, mut count) = (0.0, 0usize);
    for y0 in 0..h {
        for x0 in 0..w {
            let v = map.get(x0, y0);
            if seen[y0 * w + x0] || v < threshold {
                continue;
            }
            seen[y0 * w + x0] = true;
            stack.push((x0, y0));
            let (mut is_max, mut has_global) = (true, false);
            while let Some((x, y)) = stack.pop() {
                has_global |= (x, y) == global;
                for ny in y.saturating_sub(1)..(y + 2).min(h) {
                    for nx in x.saturating_sub(1)..(x + 2).min(w) {
                        let u = map.get(nx, ny);
                        if u > v + TIE {
                            is_max = false;
                        } else if u >= v - TIE && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            if is_max && !has_global {
                sum += v;
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn check_config(cfg: &SaliencyConfig, w: usize, h: usize) -> Result<()> {
    let max_s = cfg
        .centers
        .iter()
        .flat_map(|c| cfg.deltas.iter().map(move |d| c + d))
        .max()
        .unwrap_or(0);
    if cfg.centers.is_empty() || cfg.deltas.is_empty() || max_s >= cfg.levels {
        return Err(SaliencyError::InvalidLevels(format!(
            "surround level {max_s} needs more than {} levels",
            cfg.levels
        )));
    }
    if cfg.accumulation_level >= cfg.levels {
        return Err(SaliencyError::InvalidLevels(
            "accumulation level beyond pyramid".into(),
        ));
    }
    if level_dims(w, h, cfg.levels).is_none() {
        return Err(SaliencyError::TooSmall {
            width: w,
            height: h,
            levels: cfg.levels,
        });
    }
    Ok(())
}

/// Brings a level-`c` feature map onto the accumulation lattice.
fn to_lattice(map: &Map, c: usize, cfg: &SaliencyConfig, lattice: (usize, usize)) -> Result<Map> {
    let m = if c < cfg.accumulation_level {
        pyramid::reduce_to_level(map, c, cfg.accumulation_level)?
    } else {
        map.clone()
    };
    Ok(if (m.width(), m.height()) == lattice {
        m
    } else {
        m.resize_bilinear(lattice.0, lattice.1)
    })
}

/// Across-scale sum of normalised center-surround maps of one pyramid.
fn across_scale(pyr: &[Map], cfg: &SaliencyConfig, lattice: (usize, usize)) -> Result<Map> {
    let mut acc = Map::filled(lattice.0, lattice.1, 0.0);
    for &c in &cfg.centers {
        for &d in &cfg.deltas {
            let fm = center_surround(pyr, c, c + d)?;
            acc.add_assign(&to_lattice(&normalize(&fm, cfg), c, cfg, lattice)?);
        }
    }
    Ok(acc)
}

fn conspicuity_from(f: &Features, channel: Channel, cfg: &SaliencyConfig) -> Result<Map> {
    let (w, h) = (f.intensity.width(), f.intensity.height());
    check_config(cfg, w, h)?;
    let lattice = level_dims(w, h, cfg.levels).expect("checked")[cfg.accumulation_level];
    match channel {
        Channel::Intensity => {
            let pyr = gaussian_pyramid(&f.intensity, cfg.levels)?;
            across_scale(&pyr, cfg, lattice)
        }
        Channel::Color => {
            let rg = gaussian_pyramid(&f.rg, cfg.levels)?;
            let by = gaussian_pyramid(&f.by, cfg.levels)?;
            let mut acc = across_scale(&rg, cfg, lattice)?;
            acc.add_assign(&across_scale(&by, cfg, lattice)?);
            Ok(acc)
        }
        Channel::Orientation => {
            let pyr = gaussian_pyramid(&f.intensity, cfg.levels)?;
            let first = cfg.finest_center();
            let mut acc = Map::filled(lattice.0, lattice.1, 0.0);
            for &theta in &cfg.orientations {
                let gabor = GaborPair::new(theta, cfg.gabor_wavelength, cfg.gabor_octaves);
                // levels below the finest center are never compared
                let opyr: Vec<Map> = pyr
                    .iter()
                    .enumerate()
                    .map(|(k, level)| {
                        if k < first {
                            Map::filled(level.width(), level.height(), 0.0)
                        } else {
                            gabor.energy(level)
                        }
                    })
                    .collect();
                let per_theta = across_scale(&opyr, cfg, lattice)?;
                acc.add_assign(&normalize(&per_theta, cfg));
            }
            Ok(acc)
        }
    }
}

/// Conspicuity map of one channel on the accumulation lattice, before the
/// final cross-channel normalisation.
pub fn channel_conspicuity(img: &RgbImage, channel: Channel, cfg: &SaliencyConfig) -> Result<Map> {
    validate(img)?;
    conspicuity_from(&features(img), channel, cfg)
}

/// Full saliency map, resampled to 256 x 256.
pub fn compute_saliency(img: &RgbImage, cfg: &SaliencyConfig) -> Result<SaliencyMap> {
    validate(img)?;
    let f = features(img);
    let mut acc: Option<Map> = None;
    for ch in [Channel::Intensity, Channel::Color, Channel::Orientation] {
        let n = normalize(&conspicuity_from(&f, ch, cfg)?, cfg);
        match acc.as_mut() {
            Some(a) => a.add_assign(&n),
            None => acc = Some(n),
        }
    }
    let lattice = acc.expect("three channels").map(|v| v / 3.0);
    let out = lattice
        .resize_bilinear(MAP_SIZE, MAP_SIZE)
        .map(|v| v.max(0.0));
    Ok(SaliencyMap::new("", out.into_data()))
}

/// Saliency maps for many images, computed in parallel, in input order.
pub fn compute_saliency_batch(
    images: &[(String, &Path)],
    cfg: &SaliencyConfig,
) -> Result<Vec<SaliencyMap>> {
    images
        .par_iter()
        .map(|(id, path)| {
            let img = load_image(path)?;
            let mut m = compute_saliency(&img, cfg)?;
            m.image_id = id.clone();
            Ok(m)
        })
        .collect()
}

/// Flattens each map row-major into one row of a feature matrix.
pub fn maps_to_feature_matrix(maps: &[SaliencyMap], source_tag: &str) -> Result<FeatureMatrix> {
    if maps.len() < 2 {
        return Err(SaliencyError::TooFewMaps);
    }
    let items = maps.iter().map(|m| m.image_id.clone()).collect();
    let mut data = Vec::with_capacity(maps.len() * MAP_SIZE * MAP_SIZE);
    for m in maps {
        data.extend_from_slice(&m.grid);
    }
    Ok(FeatureMatrix::new(items, data, MAP_SIZE * MAP_SIZE, source_tag)?)
}

/// Inverse of the flattening in [`maps_to_feature_matrix`].
pub fn feature_row_to_map(id: &str, row: &[f64]) -> SaliencyMap {
    SaliencyMap::new(id, row.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn working_dims_keep_aspect() {
        assert_eq!(working_dims(640, 480), (341, 256));
        assert_eq!(working_dims(256, 256), (256, 256));
        assert_eq!(working_dims(64, 128), (256, 512));
    }

    #[test]
    fn normalize_suppresses_multiple_equal_peaks() {
        let cfg = SaliencyConfig::default();
        let one = Map::from_fn(16, 16, |x, y| if (x, y) == (4, 4) { 2.0 } else { 0.0 });
        let two = Map::from_fn(16, 16, |x, y| {
            if (x, y) == (4, 4) || (x, y) == (12, 12) {
                2.0
            } else {
                0.0
            }
        });
        assert!((normalize(&one, &cfg).max() - 1.0).abs() < 1e-15);
        assert!(normalize(&two, &cfg).max() < 1e-12);
        let flat = Map::filled(8, 8, 1e-12);
        assert_eq!(normalize(&flat, &cfg).max(), 0.0);
    }

    #[test]
    fn undersized_image_rejected() {
        let img = RgbImage::new(63, 200);
        assert!(matches!(
            compute_saliency(&img, &SaliencyConfig::default()),
            Err(SaliencyError::Undersized { .. })
        ));
    }

    #[test]
    fn flatten_is_row_major() {
        let mut grid = vec![0.0; MAP_SIZE * MAP_SIZE];
        grid[256 * 7 + 3] = 1.0;
        let a = SaliencyMap::new("a", grid);
        let b = SaliencyMap::new("b", vec![0.5; MAP_SIZE * MAP_SIZE]);
        let fm = maps_to_feature_matrix(&[a.clone(), b], "maps").unwrap();
        assert_eq!((fm.n_items(), fm.dim()), (2, 65536));
        let nz: Vec<usize> = fm.row(0).iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        assert_eq!(nz, vec![256 * 7 + 3]);
        assert_eq!(feature_row_to_map("a", fm.row(0)), a);
        assert_eq!(a.get(7, 3), 1.0);
        assert!(matches!(
            maps_to_feature_matrix(&[a], "maps"),
            Err(SaliencyError::TooFewMaps)
        ));
    }
}
