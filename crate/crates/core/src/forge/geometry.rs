use std::fmt;
use std::str::FromStr;

use image::imageops::{self, FilterType};
use rand::Rng;

use super::{ForgeError, Result};
use crate::saliency::RgbImage;

/// Fraction of the target area the pasted distractor occupies.
pub const AREA_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Top,
    Bottom,
    Left,
    Right,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Top, Side::Bottom, Side::Left, Side::Right];

    pub fn name(self) -> &'static str {
        match self {
            Side::Top => "top",
            Side::Bottom => "bottom",
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Side::ALL
            .into_iter()
            .find(|side| side.name() == s)
            .ok_or_else(|| format!("unknown side {s:?}"))
    }
}

/// Where a distractor sits on its target: flush with `side`, shifted by
/// `offset` pixels along that side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Placement {
    pub side: Side,
    pub offset: u32,
    pub dist_w: u32,
    pub dist_h: u32,
}

impl Placement {
    /// Top-left corner of the pasted rectangle.
    pub fn origin(&self, target_w: u32, target_h: u32) -> (u32, u32) {
        match self.side {
            Side::Top => (self.offset, 0),
            Side::Bottom => (self.offset, target_h - self.dist_h),
            Side::Left => (0, self.offset),
            Side::Right => (target_w - self.dist_w, self.offset),
        }
    }

    pub fn validate(&self, target_w: u32, target_h: u32) -> Result<()> {
        if self.dist_w == 0 || self.dist_h == 0 || self.dist_w > target_w || self.dist_h > target_h {
            return Err(ForgeError::CannotFit {
                target: (target_w, target_h),
                distractor: (self.dist_w, self.dist_h),
            });
        }
        let room = match self.side {
            Side::Top | Side::Bottom => target_w - self.dist_w,
            Side::Left | Side::Right => target_h - self.dist_h,
        };
        if self.offset > room {
            return Err(ForgeError::CannotFit {
                target: (target_w, target_h),
                distractor: (self.dist_w, self.dist_h),
            });
        }
        Ok(())
    }

    pub fn contains(&self, target_w: u32, target_h: u32, x: u32, y: u32) -> bool {
        let (x0, y0) = self.origin(target_w, target_h);
        x >= x0 && x < x0 + self.dist_w && y >= y0 && y < y0 + self.dist_h
    }
}

fn round_half_up(v: f64) -> u32 {
    (v + 0.5).floor() as u32
}

/// Distractor size covering 10% of the target area at the source's aspect
/// ratio. Width is derived from the area, height from the aspect.
pub fn resize_for_overlay(target_w: u32, target_h: u32, src_w: u32, src_h: u32) -> Result<(u32, u32)> {
    if target_w == 0 || target_h == 0 || src_w == 0 || src_h == 0 {
        return Err(ForgeError::DegenerateDims);
    }
    let area = AREA_FRACTION * target_w as f64 * target_h as f64;
    let aspect = src_w as f64 / src_h as f64;
    let w = round_half_up((area * aspect).sqrt());
    let h = round_half_up(w as f64 / aspect);
    if w == 0 || h == 0 {
        return Err(ForgeError::DegenerateDims);
    }
    Ok((w, h))
}

/// Uniform side, then uniform offset over every flush position on it.
pub fn sample_placement<R: Rng + ?Sized>(
    rng: &mut R,
    target: (u32, u32),
    dist: (u32, u32),
) -> Result<Placement> {
    let (tw, th) = target;
    let (dw, dh) = dist;
    if dw == 0 || dh == 0 || dw > tw || dh > th {
        return Err(ForgeError::CannotFit {
            target,
            distractor: dist,
        });
    }
    let side = Side::ALL[rng.random_range(0..4)];
    let room = match side {
        Side::Top | Side::Bottom => tw - dw,
        Side::Left | Side::Right => th - dh,
    };
    let offset = rng.random_range(0..=room);
    Ok(Placement {
        side,
        offset,
        dist_w: dw,
        dist_h: dh,
    })
}

/// Opaque paste of the resized distractor into a copy of the target.
pub fn compose(target: &RgbImage, distractor: &RgbImage, p: &Placement) -> Result<RgbImage> {
    let (tw, th) = target.dimensions();
    p.validate(tw, th)?;
    let resized = if distractor.dimensions() == (p.dist_w, p.dist_h) {
        distractor.clone()
    } else {
        imageops::resize(distractor, p.dist_w, p.dist_h, FilterType::Triangle)
    };
    let mut out = target.clone();
    let (x0, y0) = p.origin(tw, th);
    imageops::replace(&mut out, &resized, x0 as i64, y0 as i64);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn overlay_size_examples() {
        let (w, h) = resize_for_overlay(640, 480, 200, 100).unwrap();
        assert_eq!((w, h), (248, 124));
        assert_eq!(w * h, 30752);
        assert_eq!(resize_for_overlay(500, 500, 37, 37).unwrap(), (158, 158));
        // source size never matters, only its aspect
        assert_eq!(
            resize_for_overlay(500, 500, 4000, 4000).unwrap(),
            resize_for_overlay(500, 500, 10, 10).unwrap()
        );
        assert!(matches!(
            resize_for_overlay(0, 10, 1, 1),
            Err(ForgeError::DegenerateDims)
        ));
    }

    #[test]
    fn top_offsets_cover_valid_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen_max = 0;
        let mut seen_min = u32::MAX;
        for _ in 0..4000 {
            let p = sample_placement(&mut rng, (640, 480), (248, 124)).unwrap();
            p.validate(640, 480).unwrap();
            if p.side == Side::Top {
                assert_eq!(p.origin(640, 480).1, 0);
                seen_max = seen_max.max(p.offset);
                seen_min = seen_min.min(p.offset);
            }
        }
        assert!(seen_max <= 392 && seen_max > 380);
        assert!(seen_min < 10);
    }

    #[test]
    fn full_size_distractor_has_single_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = sample_placement(&mut rng, (100, 80), (100, 80)).unwrap();
            assert_eq!(p.offset, 0);
            assert_eq!(p.origin(100, 80), (0, 0));
        }
        assert!(sample_placement(&mut rng, (100, 80), (101, 10)).is_err());
    }

    #[test]
    fn same_seed_same_sequence() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| sample_placement(&mut rng, (300, 200), (90, 60)).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn self_paste_is_identity() {
        let img = RgbImage::from_fn(70, 90, |x, y| image::Rgb([x as u8, y as u8, (x ^ y) as u8]));
        let p = Placement {
            side: Side::Left,
            offset: 0,
            dist_w: 70,
            dist_h: 90,
        };
        assert_eq!(compose(&img, &img, &p).unwrap(), img);
    }

    #[test]
    fn paste_only_touches_rectangle() {
        let target = RgbImage::from_pixel(120, 100, image::Rgb([10, 20, 30]));
        let dist = RgbImage::from_pixel(50, 25, image::Rgb([250, 0, 0]));
        let p = Placement {
            side: Side::Bottom,
            offset: 17,
            dist_w: 40,
            dist_h: 20,
        };
        let out = compose(&target, &dist, &p).unwrap();
        for (x, y, px) in out.enumerate_pixels() {
            if p.contains(120, 100, x, y) {
                assert_eq!(px.0, [250, 0, 0]);
            } else {
                assert_eq!(px, target.get_pixel(x, y));
            }
        }
    }
}
