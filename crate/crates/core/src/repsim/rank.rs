use super::{RepSimError, Result};

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Sample Pearson correlation (two-pass, mean-centred).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(RepSimError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(RepSimError::TooShort {
            min: 3,
            found: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(RepSimError::Degenerate);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(RepSimError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(RepSimError::TooShort {
            min: 3,
            found: x.len(),
        });
    }
    let (rx, ry) = rayon::join(|| average_ranks(x), || average_ranks(y));
    pearson(&rx, &ry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[1., 2., 2., 4.]), vec![1., 2.5, 2.5, 4.]);
        assert_eq!(average_ranks(&[3., 3., 3.]), vec![2., 2., 2.]);
        assert_eq!(average_ranks(&[0.5, -1., 7.]), vec![2., 1., 3.]);
    }

    #[test]
    fn spearman_examples() {
        assert_abs_diff_eq!(spearman_rho(&[1., 2., 3.], &[10., 20., 30.]).unwrap(), 1.0);
        assert_abs_diff_eq!(spearman_rho(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0);
        // ranks x = [1, 2.5, 2.5, 4], y = [2, 1, 3, 4]; Pearson of those by hand:
        // dx = [-1.5, 0, 0, 1.5], dy = [-0.5, -1.5, 0.5, 1.5]
        // sxy = 0.75 + 2.25 = 3, sxx = 4.5, syy = 5 -> 3 / sqrt(22.5)
        let rho = spearman_rho(&[1., 2., 2., 4.], &[2., 1., 3., 4.]).unwrap();
        assert_abs_diff_eq!(rho, 3.0 / 22.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman_rho(&[1., 2., 3.], &[1., 2.]),
            Err(RepSimError::LengthMismatch(3, 2))
        ));
        assert!(matches!(
            spearman_rho(&[1., 2.], &[1., 2.]),
            Err(RepSimError::TooShort { .. })
        ));
        assert!(matches!(
            spearman_rho(&[1., 1., 1.], &[1., 2., 3.]),
            Err(RepSimError::Degenerate)
        ));
    }

    #[test]
    fn pearson_affine() {
        let x = [0.3, 1.7, -2.0, 4.4, 0.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_abs_diff_eq!(pearson(&x, &y).unwrap(), 1.0, epsilon = 1e-15);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(pearson(&x, &z).unwrap(), -1.0, epsilon = 1e-15);
    }
}
