use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{train_learner, Learner, LearnerConfig};
use super::matrix::Matrix;
use super::metrics::{evaluate, majority_share, EvalMetrics};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    /// Deal each class across folds separately.
    pub stratify: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { k: 5, seed: 0, stratify: false }
    }
}

/// Fold of every row: a seeded shuffle cut into `k` contiguous near-equal
/// chunks (the first `n % k` folds get one extra row). With `stratify`,
/// each class is shuffled on its own and dealt round-robin.
pub fn fold_assignments(y: &[u8], cv: &CvConfig) -> Result<Vec<usize>> {
    let n = y.len();
    if cv.k < 2 {
        return Err(Error::Argument(format!("k = {} folds, need at least 2", cv.k)));
    }
    if n < cv.k {
        return Err(Error::Argument(format!("{n} rows cannot fill {} folds", cv.k)));
    }
    let mut rng = stream(cv.seed, "fold-shuffle");
    let mut fold = vec![0; n];
    if cv.stratify {
        let mut dealt = 0;
        for class in [0u8, 1] {
            let mut rows: Vec<usize> = (0..n).filter(|&r| y[r] == class).collect();
            rows.shuffle(&mut rng);
            for r in rows {
                fold[r] = dealt % cv.k;
                dealt += 1;
            }
        }
    } else {
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        let (base, extra) = (n / cv.k, n % cv.k);
        let mut pos = 0;
        for f in 0..cv.k {
            let size = base + usize::from(f < extra);
            for &r in &rows[pos..pos + size] {
                fold[r] = f;
            }
            pos += size;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Majority share of the held-out fold.
    pub majority_share: f64,
    /// None for a degenerate fold (single-class training part).
    pub metrics: Option<EvalMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanMetrics {
    pub folds_used: usize,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_measure: Option<f64>,
    pub majority_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub learner: Learner,
    pub folds: Vec<FoldOutcome>,
    pub mean: MeanMetrics,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// k-fold cross-validation of one learner. Folds whose training part holds
/// a single class are excluded from the means with a warning.
pub fn kfold_cv(
    x: &Matrix,
    y: &[u8],
    learner: Learner,
    config: &LearnerConfig,
    cv: &CvConfig,
) -> Result<CvResult> {
    if x.n_rows() != y.len() {
        return Err(Error::Argument(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    let fold = fold_assignments(y, cv)?;
    let folds: Vec<FoldOutcome> = (0..cv.k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..y.len()).filter(|&r| fold[r] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&r| fold[r] == f).collect();
            let ty: Vec<u8> = train.iter().map(|&r| y[r]).collect();
            let vy: Vec<u8> = test.iter().map(|&r| y[r]).collect();
            let single_class = ty.iter().all(|&v| v == ty[0]);
            let metrics = if single_class {
                log::warn!("{learner}: fold {f} has a single-class training part, excluded");
                None
            } else {
                let model = train_learner(learner, &x.select_rows(&train), &ty, config)?;
                Some(evaluate(&model.predict(&x.select_rows(&test))?, &vy)?)
            };
            Ok(FoldOutcome {
                fold: f,
                n_train: train.len(),
                n_test: test.len(),
                majority_share: majority_share(&vy),
                metrics,
            })
        })
        .collect::<Result<_>>()?;
    let used = || folds.iter().filter_map(|f| f.metrics.map(|m| (f, m)));
    let mean = MeanMetrics {
        folds_used: used().count(),
        accuracy: mean_of(used().map(|(_, m)| Some(m.accuracy))),
        precision: mean_of(used().map(|(_, m)| m.precision)),
        recall: mean_of(used().map(|(_, m)| m.recall)),
        f_measure: mean_of(used().map(|(_, m)| m.f_measure)),
        majority_share: mean_of(used().map(|(f, _)| Some(f.majority_share))),
    };
    Ok(CvResult { learner, folds, mean })
}
