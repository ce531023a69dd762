use super::{Map, Result, SaliencyError};

/// Binomial 5-tap low-pass, unit DC gain.
const KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Separable 5-tap blur with replicated borders.
pub fn blur(map: &Map) -> Map {
    let (w, h) = (map.width(), map.height());
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, wt) in KERNEL.iter().enumerate() {
                s += wt * map.get_clamped(x as isize + k as isize - 2, y as isize);
            }
            tmp[y * w + x] = s;
        }
    }
    let tmp = Map::new(w, h, tmp);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, wt) in KERNEL.iter().enumerate() {
                s += wt * tmp.get_clamped(x as isize, y as isize + k as isize - 2);
            }
            out[y * w + x] = s;
        }
    }
    Map::new(w, h, out)
}

/// Blur, then average each 2x2 block. Level-k cell `i` is centred on the
/// midpoint of its two parent cells, so the lattice stays aligned with the
/// pixel-centre resampling in [`Map::resize_bilinear`] and mirror images
/// give mirrored pyramids.
pub fn reduce(map: &Map) -> Result<Map> {
    let (w, h) = (map.width() / 2, map.height() / 2);
    if w == 0 || h == 0 {
        return Err(SaliencyError::TooSmall {
            width: map.width(),
            height: map.height(),
            levels: 2,
        });
    }
    let b = blur(map);
    Ok(Map::from_fn(w, h, |x, y| {
        let (x2, y2) = (2 * x, 2 * y);
        0.25 * ((b.get(x2, y2) + b.get(x2 + 1, y2)) + (b.get(x2, y2 + 1) + b.get(x2 + 1, y2 + 1)))
    }))
}

/// Dimensions of each pyramid level for a `width x height` input, or `None`
/// if some level would be empty.
pub fn level_dims(width: usize, height: usize, levels: usize) -> Option<Vec<(usize, usize)>> {
    let mut dims = Vec::with_capacity(levels);
    let (mut w, mut h) = (width, height);
    for _ in 0..levels {
        if w == 0 || h == 0 {
            return None;
        }
        dims.push((w, h));
        w /= 2;
        h /= 2;
    }
    Some(dims)
}

/// Dyadic Gaussian pyramid: level 0 is the input, level k is level k-1
/// blurred and decimated by two. Every level must keep at least one cell.
pub fn gaussian_pyramid(map: &Map, levels: usize) -> Result<Vec<Map>> {
    if levels < 2 {
        return Err(SaliencyError::InvalidLevels(format!(
            "a pyramid needs at least 2 levels, got {levels}"
        )));
    }
    if level_dims(map.width(), map.height(), levels).is_none() {
        return Err(SaliencyError::TooSmall {
            width: map.width(),
            height: map.height(),
            levels,
        });
    }
    let mut pyr = Vec::with_capacity(levels);
    pyr.push(map.clone());
    for k in 1..levels {
        let next = reduce(&pyr[k - 1])?;
        pyr.push(next);
    }
    Ok(pyr)
}

/// `|P[c] - upsample(P[s])|` at the resolution of level `c`.
pub fn center_surround(pyr: &[Map], c: usize, s: usize) -> Result<Map> {
    if s <= c || s >= pyr.len() {
        return Err(SaliencyError::InvalidLevels(format!(
            "center {c} / surround {s} invalid for a {}-level pyramid",
            pyr.len()
        )));
    }
    let center = &pyr[c];
    let surround = pyr[s].resize_bilinear(center.width(), center.height());
    Ok(center.zip_with(&surround, |a, b| (a - b).abs()))
}

/// Repeated [`reduce`] until the map reaches pyramid level `to` from `from`.
pub fn reduce_to_level(map: &Map, from: usize, to: usize) -> Result<Map> {
    let mut m = map.clone();
    for _ in from..to {
        m = reduce(&m)?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_map_stays_constant() {
        let pyr = gaussian_pyramid(&Map::filled(64, 48, 0.3), 5).unwrap();
        for level in &pyr {
            assert!(level.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        }
    }

    #[test]
    fn nine_levels_from_256() {
        let pyr = gaussian_pyramid(&Map::filled(256, 256, 1.0), 9).unwrap();
        let dims: Vec<_> = pyr.iter().map(|m| (m.width(), m.height())).collect();
        let expected: Vec<_> = (0..9).map(|k| (256 >> k, 256 >> k)).collect();
        assert_eq!(dims, expected);
        assert_eq!(dims[8], (1, 1));
    }

    #[test]
    fn too_small_or_too_few_levels() {
        assert!(matches!(
            gaussian_pyramid(&Map::filled(64, 64, 1.0), 8),
            Err(SaliencyError::TooSmall { .. })
        ));
        assert!(gaussian_pyramid(&Map::filled(64, 64, 1.0), 7).is_ok());
        assert!(matches!(
            gaussian_pyramid(&Map::filled(64, 64, 1.0), 1),
            Err(SaliencyError::InvalidLevels(_))
        ));
    }

    #[test]
    fn impulse_energy_is_preserved_per_level() {
        for (cx, cy) in [(32, 32), (33, 31)] {
            let m = Map::from_fn(64, 64, |x, y| if (x, y) == (cx, cy) { 1.0 } else { 0.0 });
            let pyr = gaussian_pyramid(&m, 3).unwrap();
            for k in 1..3 {
                let ratio = 4.0 * pyr[k].sum() / pyr[k - 1].sum();
                assert!((ratio - 1.0).abs() < 0.01, "level {k}: {ratio}");
            }
        }
    }

    #[test]
    fn center_surround_rejects_bad_levels() {
        let pyr = gaussian_pyramid(&Map::filled(64, 64, 1.0), 4).unwrap();
        assert!(center_surround(&pyr, 2, 2).is_err());
        assert!(center_surround(&pyr, 1, 4).is_err());
        let cs = center_surround(&pyr, 0, 3).unwrap();
        assert!(cs.max() < 1e-15);
    }

    fn square_image(intensity: f64) -> Map {
        Map::from_fn(128, 128, |x, y| {
            if (48..80).contains(&x) && (48..80).contains(&y) {
                intensity
            } else {
                0.0
            }
        })
    }

    #[test]
    fn square_response_is_local() {
        let pyr = gaussian_pyramid(&square_image(1.0), 6).unwrap();
        let cs = center_surround(&pyr, 2, 5).unwrap();
        // level 2 is 32x32; the square covers cells 12..20
        let (ax, ay) = cs.argmax();
        assert!((10..22).contains(&ax) && (10..22).contains(&ay), "{ax},{ay}");
        assert!(cs.max() > 0.1);
        // far corners only see the faint tail of the coarse surround
        assert!(cs.get(0, 0) < 0.1 * cs.max(), "{}", cs.get(0, 0));
        assert!(cs.get(31, 31) < 0.1 * cs.max());
    }

    #[test]
    fn response_is_linear_in_contrast() {
        let p1 = gaussian_pyramid(&square_image(0.4), 6).unwrap();
        let p2 = gaussian_pyramid(&square_image(0.8), 6).unwrap();
        let a = center_surround(&p1, 2, 5).unwrap();
        let b = center_surround(&p2, 2, 5).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}
