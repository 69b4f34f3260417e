//! Gradient-boosted trees, baseline classifiers, metrics, and cross-validation.

mod baselines;
mod boost;
mod cv;
mod loss;
mod matrix;
mod metrics;
mod tree;

pub use baselines::{
    train_learner, ForestConfig, ForestModel, Learner, LearnerConfig, LogisticConfig,
    LogisticModel, Model, NaiveBayesModel,
};
pub use boost::{train_gbm, train_gbm_traced, GbmConfig, GbmModel, MODEL_FORMAT_VERSION};
pub use cv::{fold_assignments, kfold_cv, CvConfig, CvResult, FoldOutcome, MeanMetrics};
pub use loss::{gradient_hessian, logistic_loss, mean_loss, sigmoid};
pub use matrix::Matrix;
pub use metrics::{evaluate, majority_share, positive_share, Confusion, EvalMetrics};
pub use tree::{best_split, build_tree, Node, SortedColumns, SplitCandidate, Tree, TreeParams};
