use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SymMatrix};

/// Centering followed by projection onto the top principal directions.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    /// Row-major `d × r`; columns are orthonormal principal directions.
    pub projection: Vec<f64>,
    /// Covariance eigenvalues of the retained directions, descending.
    pub variances: Vec<f64>,
    dim: usize,
    rank: usize,
}

impl PcaTransform {
    /// Fits on `data` keeping `r` components, `1 ≤ r ≤ min(N, d)`.
    pub fn fit(data: &Dataset, r: usize) -> Result<Self> {
        let (n, d) = (data.len(), data.dim());
        if r == 0 || r > n.min(d) {
            return Err(Error::arg(format!(
                "PCA rank must lie in 1..={}, got {r}",
                n.min(d)
            )));
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, x) in mean.iter_mut().zip(data.sample(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = SymMatrix::zeros(d);
        let mut centered = vec![0.0; d];
        for i in 0..n {
            for ((c, x), m) in centered.iter_mut().zip(data.sample(i)).zip(&mean) {
                *c = x - m;
            }
            cov.add_outer(1.0 / n as f64, &centered);
        }
        let eig = sym_eig(&cov)?;
        let mut projection = vec![0.0; d * r];
        for k in 0..r {
            for (row, v) in eig.vector(k).into_iter().enumerate() {
                projection[row * r + k] = v;
            }
        }
        Ok(PcaTransform {
            mean,
            projection,
            variances: eig.values[..r].to_vec(),
            dim: d,
            rank: r,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn transform_sample(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::arg(format!(
                "PCA expects dimension {}, got {}",
                self.dim,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.rank];
        for (row, (xv, m)) in x.iter().zip(&self.mean).enumerate() {
            let c = xv - m;
            for (o, p) in out.iter_mut().zip(&self.projection[row * self.rank..(row + 1) * self.rank]) {
                *o += c * p;
            }
        }
        Ok(out)
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        let mut features = Vec::with_capacity(data.len() * self.rank);
        for i in 0..data.len() {
            features.extend(self.transform_sample(data.sample(i))?);
        }
        Dataset::new(features, data.labels().to_vec(), self.rank)
    }

    /// `P M Pᵀ`: a metric on the reduced space expressed on the input space.
    pub fn lift_metric(&self, m: &SymMatrix) -> Result<SymMatrix> {
        if m.dim() != self.rank {
            return Err(Error::arg("metric dimension does not match the PCA rank"));
        }
        let (d, r) = (self.dim, self.rank);
        let p = |i: usize, k: usize| self.projection[i * r + k];
        // T = P M, then T Pᵀ
        let mut t = vec![0.0; d * r];
        for i in 0..d {
            for k in 0..r {
                t[i * r + k] = (0..r).map(|l| p(i, l) * m.get(l, k)).sum();
            }
        }
        Ok(SymMatrix::from_fn(d, |i, j| (0..r).map(|k| t[i * r + k] * p(j, k)).sum()))
    }
}

pub fn pca_fit_transform(data: &Dataset, r: usize) -> Result<(PcaTransform, Dataset)> {
    let pca = PcaTransform::fit(data, r)?;
    let reduced = pca.transform(data)?;
    Ok((pca, reduced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats: Vec<f64> = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
        Dataset::new(feats, (0..n as i64).map(|i| i % 2).collect(), d).unwrap()
    }

    #[test]
    fn orthonormal_columns() {
        let data = random_data(30, 6, 1);
        let pca = PcaTransform::fit(&data, 4).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..6).map(|i| pca.projection[i * 4 + a] * pca.projection[i * 4 + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn full_rank_is_an_isometry() {
        let data = random_data(12, 4, 2);
        let (_, reduced) = pca_fit_transform(&data, 4).unwrap();
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        for i in 0..12 {
            for j in 0..12 {
                let before = sq(data.sample(i), data.sample(j));
                let after = sq(reduced.sample(i), reduced.sample(j));
                assert!((before - after).abs() < 1e-8 * before.max(1.0));
            }
        }
    }

    #[test]
    fn projected_variance_matches_top_eigenvalues() {
        let data = random_data(40, 5, 3);
        let (pca, reduced) = pca_fit_transform(&data, 2).unwrap();
        let n = reduced.len() as f64;
        let var: f64 = (0..reduced.len())
            .map(|i| reduced.sample(i).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / n;
        assert!((var - pca.variances.iter().sum::<f64>()).abs() < 1e-8);
    }

    #[test]
    fn data_in_a_subspace_is_reconstructed_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = [[1.0, 2.0, 0.0, -1.0], [0.0, 1.0, 1.0, 1.0]];
        let mut feats = Vec::new();
        for _ in 0..10 {
            let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            feats.extend((0..4).map(|c| 0.5 + a * basis[0][c] + b * basis[1][c]));
        }
        let data = Dataset::new(feats, vec![0; 10], 4).unwrap();
        let pca = PcaTransform::fit(&data, 2).unwrap();
        for i in 0..10 {
            let z = pca.transform_sample(data.sample(i)).unwrap();
            for c in 0..4 {
                let back = pca.mean[c] + (0..2).map(|k| pca.projection[c * 2 + k] * z[k]).sum::<f64>();
                assert!((back - data.sample(i)[c]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rank_out_of_range() {
        let data = random_data(3, 5, 4);
        assert!(PcaTransform::fit(&data, 0).is_err());
        assert!(PcaTransform::fit(&data, 4).is_err());
    }

    #[test]
    fn lifted_metric_gives_the_same_distances() {
        let data = random_data(20, 5, 6);
        let pca = PcaTransform::fit(&data, 3).unwrap();
        let m = SymMatrix::from_rows(&[
            vec![2.0, 0.5, 0.0],
            vec![0.5, 1.0, 0.1],
            vec![0.0, 0.1, 0.3],
        ])
        .unwrap();
        let lifted = pca.lift_metric(&m).unwrap();
        let (x, y) = (data.sample(0), data.sample(1));
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let zx = pca.transform_sample(x).unwrap();
        let zy = pca.transform_sample(y).unwrap();
        let zdiff: Vec<f64> = zx.iter().zip(&zy).map(|(a, b)| a - b).collect();
        let direct = m.quad_form(&zdiff);
        assert!((lifted.quad_form(&diff) - direct).abs() < 1e-9 * direct.max(1.0));
    }
}
