//! Fairness-regularized linear and logistic regression.
//!
//! Models are trained on `loss + lambda * f + gamma * |w|^2` where `f` is one
//! of three convex cross-group penalties (individual, group, hybrid). The
//! crate covers data preparation ([`dataset`]), the penalties
//! ([`fairness`]), predictors and losses ([`model`]), minimizers
//! ([`solver`]) and the experiment drivers for efficient frontiers,
//! Price-of-Fairness curves and cross-validated ridge selection
//! ([`experiment`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod model;
pub mod solver;
pub mod synthetic;

pub use dataset::{
    apply_normalization, fit_normalization, load_csv, make_folds, make_stratified_folds, sample_cross_pairs,
    CrossPairSet, Dataset, FoldPlan, Group, NormalizationStats, Schema, Task,
};
pub use error::{FairError, Result};
pub use experiment::{
    compute_pof, evaluate_on_fold, regularization_path, select_gamma_cv, sweep_lambda_frontier, CVReport, CvPlan,
    ExperimentConfig, FrontierPoint, GammaGrid, PairPolicy, PathPoint, PoFPoint,
};
pub use fairness::{
    build_penalty_form, eval_penalty, eval_penalty_bruteforce, penalty_gradient, unified_diff_vector,
    DistanceWeightKind, HybridWeights, ModelMode, PenaltyForm, PenaltyKind,
};
pub use model::{
    accuracy_loss, accuracy_loss_gradient, best_constant_predictor, predict, predict_probability, LossKind, ModelFile,
    ModelParams, ParamLayout,
};
pub use solver::{
    finite_difference_check, objective_value, solve, solve_linear_closed_form, solve_smooth, Objective, SolveResult,
    SolverConfig,
};
