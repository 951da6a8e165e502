//! Evaluation protocol: stratified k-fold 1-NN cross-validation, pairwise
//! verification with a threshold sweep, and PCA preprocessing.

mod cv;
mod pca;
mod roc;

pub use cv::{kfold_cv, mean_std, repeated_cv, stratified_folds, CvConfig, CvReport, FoldResult, Learner};
pub use pca::{pca_fit_transform, PcaTransform};
pub use roc::{
    parse_pair_csv, read_pair_file, roc_from_distances, verify_pairs, RocPoint, RocReport, VerificationPair,
    DEFAULT_THRESHOLDS,
};
