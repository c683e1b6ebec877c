//! Run-level detectors: the one-class voting ensemble and supervised kernel
//! SVMs, plus hold-one-family-out evaluation.

mod ensemble;
mod harness;
mod metrics;
mod svm;

pub use ensemble::{
    classify, classify_task, evaluate_ensemble, fit_ensemble, vote, Classification, EnsembleEvaluation,
    EnsembleModel, EnsembleOptions, FeatureKey, FeatureStat, FeatureSubset, FeatureVote, LabeledVector,
    PeReference, RunResult, StatSource, Verdict, VoteRecord, VoteStats,
};
pub use harness::{
    cross_validate, design_matrix, holdout_evaluate, holdout_folds, kernel_metrics, CrossValidation, Fold,
    KernelEvaluation,
};
pub use metrics::{BlindBaseline, Metrics};
pub use svm::{
    kkt_violation, smo_train, solve_dual, standard_kernels, svm_predict, DualSolution, Kernel, Scaler, SvmModel,
    DEFAULT_C, DEFAULT_TOL,
};
