use rayon::prelude::*;

const LANES: usize = 8;
/// Rows per tile side.
const TILE: usize = 32;
/// Columns streamed per pass over a tile; must be a multiple of `LANES`.
const CHUNK: usize = 1024;

#[inline(always)]
fn accumulate(acc: &mut [f64; LANES], a: &[f64], b: &[f64]) {
    for (ca, cb) in a.chunks_exact(LANES).zip(b.chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] += ca[l] * cb[l];
        }
    }
}

#[inline(always)]
fn finish(acc: &[f64; LANES], a_tail: &[f64], b_tail: &[f64]) -> f64 {
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in a_tail.iter().zip(b_tail) {
        s += x * y;
    }
    s
}

/// Inner product with a fixed accumulation order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let main = a.len() - a.len() % LANES;
    let mut acc = [0.0; LANES];
    accumulate(&mut acc, &a[..main], &b[..main]);
    finish(&acc, &a[main..], &b[main..])
}

/// Strictly-upper Gram entries of the `n x d` row-major matrix: element
/// `[i][k]` is `dot(row_i, row_{i+1+k})`, bitwise equal to [`dot`].
pub(crate) fn gram_upper(data: &[f64], n: usize, d: usize) -> Vec<Vec<f64>> {
    let blocks = n.div_ceil(TILE);
    let pairs: Vec<(usize, usize)> = (0..blocks)
        .flat_map(|bi| (bi..blocks).map(move |bj| (bi, bj)))
        .collect();
    let main = d - d % LANES;
    let row = |i: usize| &data[i * d..(i + 1) * d];

    let tiles: Vec<(usize, usize, Vec<f64>)> = pairs
        .par_iter()
        .map(|&(bi, bj)| {
            let (i0, i1) = (bi * TILE, ((bi + 1) * TILE).min(n));
            let (j0, j1) = (bj * TILE, ((bj + 1) * TILE).min(n));
            let mut acc = vec![[0.0; LANES]; TILE * TILE];
            let mut k0 = 0;
            while k0 < main {
                let k1 = (k0 + CHUNK).min(main);
                for i in i0..i1 {
                    let ai = &row(i)[k0..k1];
                    for j in j0.max(i + 1)..j1 {
                        accumulate(&mut acc[(i - i0) * TILE + (j - j0)], ai, &row(j)[k0..k1]);
                    }
                }
                k0 = k1;
            }
            let mut out = vec![0.0; TILE * TILE];
            for i in i0..i1 {
                let at = &row(i)[main..];
                for j in j0.max(i + 1)..j1 {
                    let bt = &row(j)[main..];
                    let slot = (i - i0) * TILE + (j - j0);
                    out[slot] = finish(&acc[slot], at, bt);
                }
            }
            (bi, bj, out)
        })
        .collect();

    let mut rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; n - 1 - i]).collect();
    for (bi, bj, out) in tiles {
        let (i0, i1) = (bi * TILE, ((bi + 1) * TILE).min(n));
        let (j0, j1) = (bj * TILE, ((bj + 1) * TILE).min(n));
        for i in i0..i1 {
            for j in j0.max(i + 1)..j1 {
                rows[i][j - i - 1] = out[(i - i0) * TILE + (j - j0)];
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn tiled_gram_is_bitwise_equal_to_dot() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        // spans several tiles, several chunks and a ragged tail
        let (n, d) = (70, 2 * CHUNK + 13);
        let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = gram_upper(&data, n, d);
        for i in 0..n {
            for j in i + 1..n {
                let want = dot(&data[i * d..(i + 1) * d], &data[j * d..(j + 1) * d]);
                assert_eq!(g[i][j - i - 1].to_bits(), want.to_bits(), "({i},{j})");
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (n, d) = (45, 300);
        let data: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| gram_upper(&data, n, d));
        let b = four.install(|| gram_upper(&data, n, d));
        assert_eq!(a, b);
    }

    #[test]
    fn dot_handles_short_vectors() {
        assert_eq!(dot(&[], &[]), 0.0);
        assert_eq!(dot(&[2.0, 3.0], &[4.0, 5.0]), 23.0);
    }
}
