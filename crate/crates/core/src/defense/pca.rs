use std::collections::HashSet;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{DefenseError, FeatureMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `n_components` rows of length d, orthonormal, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
}

fn distinct_rows(x: &FeatureMatrix) -> usize {
    x.iter_rows()
        .map(|r| r.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

/// Top eigenvectors of the sample covariance (divisor n - 1). Each
/// component's largest-magnitude entry is made positive so results do not
/// depend on the eigensolver's sign choice.
pub fn fit_pca(x: &FeatureMatrix, n_components: usize) -> Result<PcaModel, DefenseError> {
    let (n, d) = (x.rows(), x.cols());
    if n_components == 0 || n_components > d {
        return Err(DefenseError::InvalidParameter(format!(
            "{n_components} components for dimension {d}"
        )));
    }
    let distinct = distinct_rows(x);
    if n < n_components || distinct < n_components {
        return Err(DefenseError::RankDeficient {
            distinct_rows: distinct,
            components: n_components,
        });
    }
    let mut mean = vec![0.0; d];
    for r in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| x.row(i)[j] - mean[j]);
    let cov = centered.tr_mul(&centered) / (n.max(2) - 1) as f64;
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(n_components);
    let mut explained_variance = Vec::with_capacity(n_components);
    for &k in order.iter().take(n_components) {
        let mut c: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = c
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if c[pivot] < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(c);
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// The same model keeping only the leading `k` components.
    pub fn truncated(&self, k: usize) -> PcaModel {
        let k = k.min(self.n_components());
        PcaModel {
            mean: self.mean.clone(),
            components: self.components[..k].to_vec(),
            explained_variance: self.explained_variance[..k].to_vec(),
            total_variance: self.total_variance,
        }
    }

    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix, DefenseError> {
        if x.cols() != self.mean.len() {
            return Err(DefenseError::DimensionMismatch {
                id: "<pca input>".into(),
                expected: self.mean.len(),
                found: x.cols(),
            });
        }
        let k = self.n_components();
        let mut out = Vec::with_capacity(x.rows() * k);
        let mut centered = vec![0.0; x.cols()];
        for r in x.iter_rows() {
            for ((c, v), m) in centered.iter_mut().zip(r).zip(&self.mean) {
                *c = v - m;
            }
            for comp in &self.components {
                out.push(comp.iter().zip(&centered).map(|(a, b)| a * b).sum());
            }
        }
        FeatureMatrix::new(x.rows(), k, out)
    }

    pub fn inverse_transform(&self, z: &FeatureMatrix) -> Result<FeatureMatrix, DefenseError> {
        if z.cols() != self.n_components() {
            return Err(DefenseError::DimensionMismatch {
                id: "<pca scores>".into(),
                expected: self.n_components(),
                found: z.cols(),
            });
        }
        let d = self.mean.len();
        let mut out = Vec::with_capacity(z.rows() * d);
        for r in z.iter_rows() {
            let mut v = self.mean.clone();
            for (s, comp) in r.iter().zip(&self.components) {
                for (o, c) in v.iter_mut().zip(comp) {
                    *o += s * c;
                }
            }
            out.extend(v);
        }
        FeatureMatrix::new(z.rows(), d, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &FeatureMatrix, b: &FeatureMatrix) -> f64 {
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn line_is_recovered_exactly() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64 + 1.0]).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let m = fit_pca(&x, 1).unwrap();
        let back = m.inverse_transform(&m.transform(&x).unwrap()).unwrap();
        assert!(max_abs_diff(&x, &back) <= 1e-8);
    }

    #[test]
    fn full_rank_round_trip_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..12).map(|_| (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let m = fit_pca(&x, 5).unwrap();
        let back = m.inverse_transform(&m.transform(&x).unwrap()).unwrap();
        assert!(max_abs_diff(&x, &back) <= 1e-6);
        for (i, a) in m.components.iter().enumerate() {
            for (j, b) in m.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-8);
            }
        }
        assert!(m.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        assert!(m.explained_variance.iter().sum::<f64>() <= m.total_variance + 1e-9);
        let mean = FeatureMatrix::from_rows(std::slice::from_ref(&m.mean)).unwrap();
        assert!(m.transform(&mean).unwrap().as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn truncation_matches_direct_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..6).map(|j| rng.gen_range(-1.0..1.0) * (j + 1) as f64).collect()).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let a = fit_pca(&x, 5).unwrap().truncated(2);
        let b = fit_pca(&x, 2).unwrap();
        for (p, q) in a.components.iter().flatten().zip(b.components.iter().flatten()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        let x = FeatureMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(fit_pca(&x, 3), Err(DefenseError::RankDeficient { distinct_rows: 2, .. })));
        assert!(fit_pca(&x, 4).is_err());
    }
}
