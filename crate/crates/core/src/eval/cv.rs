use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::pca::PcaTransform;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{Algorithm, MetricModel};
use crate::ncml::{train_ncml, NcmlConfig};
use crate::pairs::build_constraints;
use crate::pcml::{train_pcml, PcmlConfig};

/// Metric used inside each fold.
#[derive(Clone, Debug, PartialEq)]
pub enum Learner {
    Pcml(PcmlConfig),
    Ncml(NcmlConfig),
    /// Identity metric, the Euclidean baseline.
    Euclidean,
}

impl Learner {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Learner::Pcml(_) => Algorithm::Pcml,
            Learner::Ncml(_) => Algorithm::Ncml,
            Learner::Euclidean => Algorithm::Identity,
        }
    }

    /// Builds `k`-neighbor constraints on `train` and fits a metric.
    pub fn fit(&self, train: &Dataset, k: usize) -> Result<MetricModel> {
        match self {
            Learner::Euclidean => Ok(MetricModel::identity(train.dim())),
            Learner::Pcml(config) => {
                let pairs = build_constraints(train, k)?;
                Ok(train_pcml(&pairs, config)?.0)
            }
            Learner::Ncml(config) => {
                let pairs = build_constraints(train, k)?;
                Ok(train_ncml(&pairs, config)?.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    /// Neighbors per sample for constraint construction.
    pub k: usize,
    /// Optional PCA rank, fit on each training split.
    pub pca_dim: Option<usize>,
    pub seed: u64,
    /// Folds trained concurrently; `1` runs them in order on this thread.
    pub jobs: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            k: 2,
            pca_dim: None,
            seed: 0,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub errors: usize,
    pub error_rate: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Constraint construction plus training, in seconds.
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub fold_errors: Vec<f64>,
    pub mean_error: f64,
    /// Sample standard deviation of the fold errors.
    pub std_error: f64,
    pub train_seconds: Vec<f64>,
}

impl CvReport {
    fn from_folds(folds: Vec<FoldResult>) -> Self {
        let fold_errors: Vec<f64> = folds.iter().map(|f| f.error_rate).collect();
        let (mean_error, std_error) = mean_std(&fold_errors);
        CvReport {
            train_seconds: folds.iter().map(|f| f.train_seconds).collect(),
            fold_errors,
            mean_error,
            std_error,
            folds,
        }
    }

    pub fn total_train_seconds(&self) -> f64 {
        self.train_seconds.iter().sum()
    }

    /// One row per fold.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("fold,train_size,test_size,errors,error_rate,iterations,converged,train_seconds\n");
        for f in &self.folds {
            out.push_str(&format!(
                "{},{},{},{},{:?},{},{},{:?}\n",
                f.fold, f.train_size, f.test_size, f.errors, f.error_rate, f.iterations, f.converged, f.train_seconds
            ));
        }
        out
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fold index of every sample. Each class is shuffled with `seed` and dealt
/// round-robin, continuing from where the previous class stopped, so fold
/// sizes differ by at most one.
pub fn stratified_folds(labels: &[i64], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::arg(format!("folds must be at least 2, got {folds}")));
    }
    if labels.len() < folds {
        return Err(Error::arg(format!(
            "{} samples cannot fill {folds} folds",
            labels.len()
        )));
    }
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    let mut next = 0usize;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok(assignment)
}

fn run_fold(
    data: &Dataset,
    learner: &Learner,
    config: &CvConfig,
    assignment: &[usize],
    fold: usize,
) -> Result<FoldResult> {
    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| assignment[i] == fold);
    let mut train = data.subset(&train_idx);
    let mut test = data.subset(&test_idx);
    if let Some(r) = config.pca_dim {
        let pca = PcaTransform::fit(&train, r)?;
        train = pca.transform(&train)?;
        test = pca.transform(&test)?;
    }
    let started = Instant::now();
    let model = learner.fit(&train, config.k)?;
    let train_seconds = started.elapsed().as_secs_f64();
    if !model.meta().converged {
        log::warn!("fold {fold}: training stopped at the iteration cap");
    }
    let mut errors = 0;
    for i in 0..test.len() {
        if model.predict_1nn(&train, test.sample(i))? != test.label(i) {
            errors += 1;
        }
    }
    Ok(FoldResult {
        fold,
        train_size: train.len(),
        test_size: test.len(),
        errors,
        error_rate: errors as f64 / test.len() as f64,
        iterations: model.meta().iterations,
        converged: model.meta().converged,
        train_seconds,
    })
}

/// Stratified `k`-fold cross-validation of 1-NN under the learned metric.
/// Constraints, PCA and the metric are fit on each training split only.
pub fn kfold_cv(data: &Dataset, learner: &Learner, config: &CvConfig) -> Result<CvReport> {
    let assignment = stratified_folds(data.labels(), config.folds, config.seed)?;
    let classes = data.classes();
    for fold in 0..config.folds {
        for &c in &classes {
            let in_train = (0..data.len()).any(|i| assignment[i] != fold && data.label(i) == c);
            if !in_train {
                return Err(Error::arg(format!(
                    "stratification: the training split of fold {fold} has no sample of class {c}"
                )));
            }
        }
    }
    let results: Vec<Result<FoldResult>> = if config.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::arg(format!("cannot start {} worker threads: {e}", config.jobs)))?;
        pool.install(|| {
            (0..config.folds)
                .into_par_iter()
                .map(|f| run_fold(data, learner, config, &assignment, f))
                .collect()
        })
    } else {
        (0..config.folds)
            .map(|f| run_fold(data, learner, config, &assignment, f))
            .collect()
    };
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CvReport::from_folds(folds))
}

/// `repeats` independent runs of [`kfold_cv`] with seeds `seed, seed + 1, ...`.
pub fn repeated_cv(data: &Dataset, learner: &Learner, config: &CvConfig, repeats: usize) -> Result<Vec<CvReport>> {
    if repeats == 0 {
        return Err(Error::arg("repeats must be at least 1"));
    }
    (0..repeats as u64)
        .map(|r| {
            let cfg = CvConfig {
                seed: config.seed.wrapping_add(r),
                ..config.clone()
            };
            kfold_cv(data, learner, &cfg)
        })
        .collect()
}
