//! Seeded synthetic datasets for tests, benchmarks and demos.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Two isotropic unit-variance Gaussians in `dim` dimensions whose means are
/// `separation` apart along the all-ones direction. Labels alternate
/// `0, 1, 0, ...`.
pub fn two_gaussians(n: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || dim == 0 {
        return Err(Error::arg("two_gaussians needs n >= 2 and dim >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let offset = 0.5 * separation / (dim as f64).sqrt();
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as i64;
        let shift = if label == 0 { -offset } else { offset };
        features.extend((0..dim).map(|_| shift + normal.sample(&mut rng)));
        labels.push(label);
    }
    Dataset::new(features, labels, dim)
}

/// Parameters of [`anisotropic`].
#[derive(Clone, Debug, PartialEq)]
pub struct Anisotropic {
    pub n: usize,
    pub informative: usize,
    pub noise: usize,
    /// Standard deviation of the noise coordinates.
    pub noise_scale: f64,
    /// Distance between the class means in the informative subspace.
    pub separation: f64,
}

impl Default for Anisotropic {
    fn default() -> Self {
        Anisotropic {
            n: 300,
            informative: 2,
            noise: 8,
            noise_scale: 5.0,
            separation: 4.0,
        }
    }
}

/// Two classes that differ only in the first `informative` coordinates
/// (unit variance, means `separation` apart) followed by `noise` pure-noise
/// coordinates with standard deviation `noise_scale`.
pub fn anisotropic(params: &Anisotropic, seed: u64) -> Result<Dataset> {
    if params.n < 2 || params.informative == 0 {
        return Err(Error::arg("anisotropic needs n >= 2 and at least one informative dimension"));
    }
    if params.noise_scale.is_nan() || params.noise_scale < 0.0 {
        return Err(Error::arg("noise_scale must be nonnegative"));
    }
    let dim = params.informative + params.noise;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let offset = 0.5 * params.separation / (params.informative as f64).sqrt();
    let mut features = Vec::with_capacity(params.n * dim);
    let mut labels = Vec::with_capacity(params.n);
    for i in 0..params.n {
        let label = (i % 2) as i64;
        let shift = if label == 0 { -offset } else { offset };
        features.extend((0..params.informative).map(|_| shift + normal.sample(&mut rng)));
        features.extend((0..params.noise).map(|_| params.noise_scale * normal.sample(&mut rng)));
        labels.push(label);
    }
    Dataset::new(features, labels, dim)
}
