use std::f64::consts::PI;

use super::Map;

/// Quadrature Gabor pair with zero DC response.
#[derive(Debug, Clone)]
pub struct GaborPair {
    radius: usize,
    even: Vec<f64>,
    odd: Vec<f64>,
}

/// Envelope width for a one-octave half-amplitude bandwidth.
pub fn sigma_for_octaves(wavelength: f64, octaves: f64) -> f64 {
    let b = 2f64.powf(octaves);
    wavelength / PI * (2f64.ln() / 2.0).sqrt() * (b + 1.0) / (b - 1.0)
}

impl GaborPair {
    pub fn new(theta_deg: f64, wavelength: f64, octaves: f64) -> Self {
        let sigma = sigma_for_octaves(wavelength, octaves);
        let radius = (2.5 * sigma).ceil() as usize;
        let size = 2 * radius + 1;
        let (st, ct) = theta_deg.to_radians().sin_cos();
        let mut env = Vec::with_capacity(size * size);
        let mut even = Vec::with_capacity(size * size);
        let mut odd = Vec::with_capacity(size * size);
        for ky in 0..size {
            for kx in 0..size {
                let (x, y) = (kx as f64 - radius as f64, ky as f64 - radius as f64);
                // carrier runs across the preferred edge orientation
                let u = -x * st + y * ct;
                let g = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
                let phase = 2.0 * PI * u / wavelength;
                env.push(g);
                even.push(g * phase.cos());
                odd.push(g * phase.sin());
            }
        }
        let env_sum: f64 = env.iter().sum();
        let dc = even.iter().sum::<f64>() / env_sum;
        for (e, g) in even.iter_mut().zip(&env) {
            *e -= dc * g;
        }
        let odd_dc = odd.iter().sum::<f64>() / env_sum;
        for (o, g) in odd.iter_mut().zip(&env) {
            *o -= odd_dc * g;
        }
        let norm: f64 = even.iter().map(|v| v.abs()).sum::<f64>() / 2.0;
        even.iter_mut().for_each(|v| *v /= norm);
        odd.iter_mut().for_each(|v| *v /= norm);
        Self { radius, even, odd }
    }

    /// Local energy `sqrt(even^2 + odd^2)` with replicated borders.
    pub fn energy(&self, map: &Map) -> Map {
        let r = self.radius as isize;
        let size = 2 * self.radius + 1;
        Map::from_fn(map.width(), map.height(), |x, y| {
            let (mut e, mut o) = (0.0, 0.0);
            for ky in 0..size {
                for kx in 0..size {
                    let v = map.get_clamped(x as isize + kx as isize - r, y as isize + ky as isize - r);
                    e += self.even[ky * size + kx] * v;
                    o += self.odd[ky * size + kx] * v;
                }
            }
            (e * e + o * o).sqrt()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_octave_sigma() {
        // 0.5622 * wavelength for a one-octave band
        assert!((sigma_for_octaves(4.0, 1.0) - 2.2487).abs() < 1e-3);
    }

    #[test]
    fn flat_input_gives_no_energy() {
        let g = GaborPair::new(45.0, 4.0, 1.0);
        let e = g.energy(&Map::filled(20, 20, 0.7));
        assert!(e.max() < 1e-12);
    }

    #[test]
    fn prefers_matching_orientation() {
        // vertical bar: strongest for the 90 degree filter (edge runs along y)
        let bar = Map::from_fn(32, 32, |x, _| if (15..17).contains(&x) { 1.0 } else { 0.0 });
        let resp: Vec<f64> = [0.0, 45.0, 90.0, 135.0]
            .iter()
            .map(|&t| GaborPair::new(t, 4.0, 1.0).energy(&bar).get(16, 16))
            .collect();
        let best = resp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(best, 2, "{resp:?}");
    }
}
