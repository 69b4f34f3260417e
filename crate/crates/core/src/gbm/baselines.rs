//! Comparison learners and a uniform interface over all of them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::boost::{check_training_set, require_both_classes, train_gbm, GbmConfig, GbmModel};
use super::loss::sigmoid;
use super::matrix::Matrix;
use super::metrics::positive_share;
use super::tree::{build_tree, SortedColumns, Tree, TreeParams};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    Gbm,
    Logistic,
    GaussianNb,
    RandomForest,
    Majority,
}

impl Learner {
    pub const ALL: [Learner; 5] = [
        Learner::Gbm,
        Learner::Logistic,
        Learner::GaussianNb,
        Learner::RandomForest,
        Learner::Majority,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Learner::Gbm => "gbm",
            Learner::Logistic => "logistic",
            Learner::GaussianNb => "gaussian_nb",
            Learner::RandomForest => "random_forest",
            Learner::Majority => "majority",
        }
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Learner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Learner::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown learner '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub iterations: u32,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig { iterations: 300, learning_rate: 0.5, l2: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: u32,
    pub max_depth: u32,
    pub min_leaf: f64,
    /// Fraction of columns each tree sees; None means sqrt(p) columns.
    pub colsample: Option<f64>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: 8, min_leaf: 1.0, colsample: None, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub gbm: GbmConfig,
    pub logistic: LogisticConfig,
    pub forest: ForestConfig,
}

impl LearnerConfig {
    /// Copy with every learner seed replaced.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.gbm.seed = seed;
        self.forest.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "snake_case")]
pub enum Model {
    Gbm(GbmModel),
    Logistic(LogisticModel),
    GaussianNb(NaiveBayesModel),
    RandomForest(ForestModel),
    Majority { positive_share: f64 },
}

fn check_width(expected: usize, x: &Matrix) -> Result<()> {
    if x.n_cols() != expected {
        return Err(Error::Schema(format!(
            "model expects {expected} feature columns, got {}",
            x.n_cols()
        )));
    }
    Ok(())
}

impl Model {
    /// Probability of class 1 for every row.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        let rows = 0..x.n_rows();
        match self {
            Model::Gbm(m) => m.predict_proba(x),
            Model::Logistic(m) => {
                check_width(m.weights.len(), x)?;
                Ok(rows
                    .map(|r| {
                        let z: f64 = x
                            .row(r)
                            .iter()
                            .enumerate()
                            .map(|(j, v)| m.weights[j] * (v - m.mean[j]) / m.scale[j])
                            .sum();
                        sigmoid(z + m.bias)
                    })
                    .collect())
            }
            Model::GaussianNb(m) => {
                check_width(m.mean[0].len(), x)?;
                Ok(rows
                    .map(|r| {
                        let row = x.row(r);
                        let ll = |c: usize| {
                            m.log_prior[c]
                                + row
                                    .iter()
                                    .enumerate()
                                    .map(|(j, v)| {
                                        let var = m.var[c][j];
                                        let d = v - m.mean[c][j];
                                        -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
                                    })
                                    .sum::<f64>()
                        };
                        sigmoid(ll(1) - ll(0))
                    })
                    .collect())
            }
            Model::RandomForest(m) => {
                check_width(m.n_features, x)?;
                let n = m.trees.len() as f64;
                Ok(rows
                    .map(|r| m.trees.iter().map(|t| t.predict_row(x.row(r))).sum::<f64>() / n)
                    .collect())
            }
            Model::Majority { positive_share } => Ok(vec![*positive_share; x.n_rows()]),
        }
    }

    /// Labels at the 0.5 probability threshold.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| u8::from(p >= 0.5)).collect())
    }

    /// Per-column gain importance for tree learners.
    pub fn importance(&self) -> Option<Vec<f64>> {
        match self {
            Model::Gbm(m) => Some(m.importance()),
            Model::RandomForest(m) => {
                let mut totals = vec![0.0; m.n_features];
                for t in &m.trees {
                    t.accumulate_gain(&mut totals);
                }
                Some(totals)
            }
            _ => None,
        }
    }
}

fn train_logistic(x: &Matrix, y: &[u8], cfg: &LogisticConfig) -> Result<LogisticModel> {
    let (n, p) = (x.n_rows(), x.n_cols());
    let nf = n as f64;
    let mut mean = vec![0.0; p];
    let mut scale = vec![0.0; p];
    for j in 0..p {
        let col = x.column(j);
        let m = col.iter().sum::<f64>() / nf;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf;
        mean[j] = m;
        scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let z: Vec<f64> = (0..n)
        .flat_map(|r| (0..p).map(move |j| (r, j)))
        .map(|(r, j)| (x.get(r, j) - mean[j]) / scale[j])
        .collect();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut grad = vec![0.0; p];
    for _ in 0..cfg.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for r in 0..n {
            let row = &z[r * p..(r + 1) * p];
            let s: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            let err = sigmoid(s + b) - f64::from(y[r]);
            for (g, v) in grad.iter_mut().zip(row) {
                *g += err * v;
            }
            gb += err;
        }
        for (wj, gj) in w.iter_mut().zip(&grad) {
            *wj -= cfg.learning_rate * (gj / nf + cfg.l2 * *wj);
        }
        b -= cfg.learning_rate * gb / nf;
    }
    Ok(LogisticModel { mean, scale, weights: w, bias: b })
}

fn train_naive_bayes(x: &Matrix, y: &[u8]) -> NaiveBayesModel {
    let p = x.n_cols();
    let mut count = [0.0f64; 2];
    let mut mean = [vec![0.0; p], vec![0.0; p]];
    let mut var = [vec![0.0; p], vec![0.0; p]];
    for r in 0..x.n_rows() {
        let c = usize::from(y[r]);
        count[c] += 1.0;
        for (m, v) in mean[c].iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for c in 0..2 {
        mean[c].iter_mut().for_each(|m| *m /= count[c]);
    }
    for r in 0..x.n_rows() {
        let c = usize::from(y[r]);
        for j in 0..p {
            let d = x.get(r, j) - mean[c][j];
            var[c][j] += d * d;
        }
    }
    // variance floor relative to the widest feature, as is customary
    let mut widest: f64 = 0.0;
    for j in 0..p {
        let col = x.column(j);
        let m = col.iter().sum::<f64>() / col.len() as f64;
        widest = widest.max(col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / col.len() as f64);
    }
    let floor = (1e-9 * widest).max(1e-12);
    for c in 0..2 {
        var[c].iter_mut().for_each(|v| *v = *v / count[c] + floor);
    }
    let total = count[0] + count[1];
    NaiveBayesModel {
        log_prior: [(count[0] / total).ln(), (count[1] / total).ln()],
        mean,
        var,
    }
}

fn train_forest(x: &Matrix, y: &[u8], cfg: &ForestConfig) -> Result<ForestModel> {
    if cfg.n_trees == 0 || cfg.max_depth == 0 {
        return Err(Error::Config("forest needs at least one tree of depth 1".into()));
    }
    let (n, p) = (x.n_rows(), x.n_cols());
    let k = match cfg.colsample {
        Some(f) if f > 0.0 && f <= 1.0 => ((f * p as f64).round() as usize).clamp(1, p),
        Some(f) => return Err(Error::Config(format!("forest colsample {f} outside (0, 1]"))),
        None => ((p as f64).sqrt().ceil() as usize).clamp(1, p),
    };
    // squared loss around zero: g = -y, h = 1, so leaves hold class-1 shares
    let params = TreeParams {
        max_depth: cfg.max_depth,
        min_child_weight: cfg.min_leaf,
        lambda: 0.0,
        gamma: 0.0,
    };
    let sorted = SortedColumns::new(x);
    let mut rng = stream(cfg.seed, "forest");
    let mut trees = Vec::with_capacity(cfg.n_trees as usize);
    for _ in 0..cfg.n_trees {
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
        let mut features = sample(&mut rng, p, k).into_vec();
        features.sort_unstable();
        let included: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
        let h: Vec<f64> = counts.iter().map(|&c| f64::from(c)).collect();
        let g: Vec<f64> = counts.iter().zip(y).map(|(&c, &y)| -f64::from(c) * f64::from(y)).collect();
        trees.push(build_tree(x, &sorted, &features, &included, &g, &h, &params));
    }
    Ok(ForestModel { n_features: p, trees })
}

/// Fits `learner` on the rows of `x`. Every learner except the majority
/// rule needs both classes present.
pub fn train_learner(learner: Learner, x: &Matrix, y: &[u8], config: &LearnerConfig) -> Result<Model> {
    check_training_set(x, y)?;
    if learner == Learner::Majority {
        return Ok(Model::Majority { positive_share: positive_share(y) });
    }
    require_both_classes(y)?;
    Ok(match learner {
        Learner::Gbm => Model::Gbm(train_gbm(x, y, &config.gbm)?),
        Learner::Logistic => Model::Logistic(train_logistic(x, y, &config.logistic)?),
        Learner::GaussianNb => Model::GaussianNb(train_naive_bayes(x, y)),
        Learner::RandomForest => Model::RandomForest(train_forest(x, y, &config.forest)?),
        Learner::Majority => unreachable!(),
    })
}
