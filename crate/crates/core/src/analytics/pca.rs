use super::{AnalyticsError, Matrix};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (unsorted) and eigenvectors as columns of the
/// second result, `vectors[row][col]`.
pub fn symmetric_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let total: f64 = a.iter().flatten().map(|x| x * x).sum();
    for _ in 0..100 {
        let off: f64 = (0..d).flat_map(|p| ((p + 1)..d).map(move |q| (p, q))).map(|(p, q)| a[p][q] * a[p][q]).sum();
        if off == 0.0 || off <= 1e-30 * total {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
                for k in 0..d {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
                for row in v.iter_mut() {
                    let (kp, kq) = (row[p], row[q]);
                    row[p] = c * kp - s * kq;
                    row[q] = s * kp + c * kq;
                }
            }
        }
    }
    ((0..d).map(|i| a[i][i]).collect(), v)
}

/// Principal axes of the sample covariance (divisor n − 1), sorted by
/// decreasing eigenvalue. Each component's largest-magnitude entry is
/// positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub means: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

pub fn pca_fit(x: &Matrix) -> Result<PcaModel, AnalyticsError> {
    x.require_rows(2)?;
    let (n, d) = (x.nrows(), x.ncols());
    let means: Vec<f64> = (0..d).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..n {
        let r = x.row(i);
        for a in 0..d {
            for b in a..d {
                cov[a][b] += (r[a] - means[a]) * (r[b] - means[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[a][b] /= (n - 1) as f64;
            cov[b][a] = cov[a][b];
        }
    }
    let (values, vectors) = symmetric_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(AnalyticsError::ZeroVariance);
    }
    let components = order
        .iter()
        .map(|&c| {
            let mut comp: Vec<f64> = (0..d).map(|r| vectors[r][c]).collect();
            let lead = comp
                .iter()
                .enumerate()
                .fold(0, |best, (i, v)| if v.abs() > comp[best].abs() { i } else { best });
            if comp[lead] < 0.0 {
                comp.iter_mut().for_each(|v| *v = -*v);
            }
            comp
        })
        .collect();
    Ok(PcaModel {
        means,
        components,
        explained_variance_ratio: eigenvalues.iter().map(|v| v / total).collect(),
        eigenvalues,
    })
}

/// Scores on the first `k` components, columns `PC1..PCk`.
pub fn pca_transform(m: &PcaModel, x: &Matrix, k: usize) -> Result<Matrix, AnalyticsError> {
    let d = m.means.len();
    if k > d || k == 0 {
        return Err(AnalyticsError::TooManyComponents { k, d });
    }
    if x.ncols() != d {
        return Err(AnalyticsError::Ragged {
            row: 0,
            expected: d,
            found: x.ncols(),
        });
    }
    let mut data = Vec::with_capacity(x.nrows() * k);
    for i in 0..x.nrows() {
        let r = x.row(i);
        for comp in &m.components[..k] {
            data.push((0..d).map(|j| (r[j] - m.means[j]) * comp[j]).sum());
        }
    }
    Ok(x.with_data(k, data, (1..=k).map(|i| format!("PC{i}")).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaSelect {
    /// Smallest k whose cumulative ratio reaches the threshold.
    Threshold(f64),
    /// Knee of the cumulative explained-variance curve: the k farthest from
    /// the chord joining its first and last points.
    Elbow,
}

/// Cumulative sums are compared with a 1e-12 allowance so that ratios such
/// as 0.7 + 0.2 reach a 0.9 threshold.
pub fn pca_select(ratios: &[f64], mode: PcaSelect) -> Result<usize, AnalyticsError> {
    if ratios.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let cum: Vec<f64> = ratios
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r;
            Some(*acc)
        })
        .collect();
    match mode {
        PcaSelect::Threshold(t) => {
            if !(t > 0.0 && t <= 1.0) {
                return Err(AnalyticsError::Threshold(t));
            }
            Ok(cum.iter().position(|c| *c >= t - 1e-12).map_or(ratios.len(), |i| i + 1))
        }
        PcaSelect::Elbow => {
            let d = cum.len();
            let (x0, y0) = (1.0, cum[0]);
            let (x1, y1) = (d as f64, cum[d - 1]);
            let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
            if len == 0.0 {
                return Ok(1);
            }
            let mut best = (0, f64::NEG_INFINITY);
            for (i, &y) in cum.iter().enumerate() {
                let x = (i + 1) as f64;
                let dist = ((x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)).abs() / len;
                if dist > best.1 {
                    best = (i + 1, dist);
                }
            }
            Ok(best.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rank_one_data() {
        let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, -1.0], vec![2.0, 2.0], vec![-2.0, -2.0]]).unwrap();
        let m = pca_fit(&x).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.components[0][0] - h).abs() < 1e-12 && (m.components[0][1] - h).abs() < 1e-12);
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random_matrix(&mut rng, 5, 5);
            let m = pca_fit(&x).unwrap();
            // oracle: covariance built directly, decomposed by nalgebra
            let data = DMatrix::from_fn(5, 5, |i, j| x.get(i, j));
            let mean = data.row_mean();
            let centered = DMatrix::from_fn(5, 5, |i, j| data[(i, j)] - mean[j]);
            let cov = centered.transpose() * &centered / 4.0;
            let eig = SymmetricEigen::new(cov.clone());
            let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in m.eigenvalues.iter().zip(&ev) {
                assert!((a - b.max(0.0)).abs() < 1e-8, "{a} vs {b}");
            }
            for (c, lambda) in m.components.iter().zip(&m.eigenvalues) {
                let v = nalgebra::DVector::from_column_slice(c);
                let resid = &cov * &v - v.clone() * *lambda;
                assert!(resid.norm() < 1e-8);
            }
            let sum: f64 = m.explained_variance_ratio.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn components_are_orthonormal_and_scores_have_eigen_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 60, 4);
        let m = pca_fit(&x).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..4).map(|j| m.components[a][j] * m.components[b][j]).sum();
                assert!((dot - f64::from(u8::from(a == b))).abs() < 1e-9);
            }
        }
        assert!(m.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
        let s = pca_transform(&m, &x, 4).unwrap();
        for k in 0..4 {
            let col = s.column(k);
            let mean = col.iter().sum::<f64>() / 60.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 59.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - m.eigenvalues[k]).abs() <= 1e-6 * m.eigenvalues[k]);
        }
        assert!(pca_transform(&m, &x, 5).is_err());
    }

    #[test]
    fn selection() {
        let r = [0.7, 0.2, 0.05, 0.05];
        assert_eq!(pca_select(&r, PcaSelect::Threshold(0.9)).unwrap(), 2);
        assert_eq!(pca_select(&r, PcaSelect::Threshold(1.0)).unwrap(), 4);
        assert!(pca_select(&r, PcaSelect::Threshold(0.0)).is_err());
        assert!(pca_select(&[], PcaSelect::Elbow).is_err());
    }

    #[test]
    fn elbow_matches_hand_enumeration() {
        let r = [0.6, 0.25, 0.05, 0.04, 0.03, 0.03];
        // cumulative 0.6, 0.85, 0.9, 0.94, 0.97, 1.0; chord rises 0.08 per
        // step, so vertical gaps are 0, 0.17, 0.14, 0.10, 0.05, 0
        assert_eq!(pca_select(&r, PcaSelect::Elbow).unwrap(), 2);
    }

    #[test]
    fn zero_variance_is_an_error() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(pca_fit(&x), Err(AnalyticsError::ZeroVariance)));
    }
}
