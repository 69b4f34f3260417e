use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::loss::{gradient_hessian, mean_loss, sigmoid};
use super::matrix::Matrix;
use super::tree::{build_tree, SortedColumns, Tree, TreeParams};
use crate::error::{Error, Result};
use crate::rng::stream;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmConfig {
    pub n_rounds: u32,
    pub max_depth: u32,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            n_rounds: 200,
            max_depth: 4,
            learning_rate: 0.1,
            min_child_weight: 1.0,
            lambda: 1.0,
            gamma: 0.0,
            subsample: 0.8,
            colsample: 0.8,
            seed: 0,
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_rounds == 0 {
            return bad("n_rounds must be at least 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return bad("colsample must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0) || !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return bad("learning_rate must be positive, lambda and gamma non-negative");
        }
        if !(self.min_child_weight >= 0.0) {
            return bad("min_child_weight must be non-negative");
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_child_weight: self.min_child_weight,
            lambda: self.lambda,
            gamma: self.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub format_version: u32,
    pub n_features: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub config: GbmConfig,
    pub trees: Vec<Tree>,
}

/// Checks labels and shape shared by every learner.
pub(crate) fn check_training_set(x: &Matrix, y: &[u8]) -> Result<()> {
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(Error::Argument("empty training matrix".into()));
    }
    if x.n_rows() != y.len() {
        return Err(Error::Argument(format!(
            "{} rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|&&v| v > 1) {
        return Err(Error::Validation(format!("label {bad} is not 0 or 1")));
    }
    x.ensure_finite()
}

pub(crate) fn require_both_classes(y: &[u8]) -> Result<usize> {
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Degenerate("training labels hold a single class".into()));
    }
    Ok(positives)
}

fn sample_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n)
}

/// Trains a boosted ensemble; see [`train_gbm_traced`].
pub fn train_gbm(x: &Matrix, y: &[u8], config: &GbmConfig) -> Result<GbmModel> {
    train_gbm_traced(x, y, config).map(|(m, _)| m)
}

/// Trains a boosted ensemble and returns the mean training loss before the
/// first round and after every round.
pub fn train_gbm_traced(x: &Matrix, y: &[u8], config: &GbmConfig) -> Result<(GbmModel, Vec<f64>)> {
    config.validate()?;
    check_training_set(x, y)?;
    let positives = require_both_classes(y)?;
    let n = x.n_rows();
    let p = x.n_cols();
    let prevalence = positives as f64 / n as f64;
    let base_score = (prevalence / (1.0 - prevalence)).ln();
    let params = config.tree_params();
    let sorted = SortedColumns::new(x);
    let mut rng = stream(config.seed, "gbm-subsample");
    let mut margins = vec![base_score; n];
    let mut trace = vec![mean_loss(y, &margins)];
    let mut trees = Vec::with_capacity(config.n_rounds as usize);
    let (mut g, mut h) = (vec![0.0; n], vec![0.0; n]);

    for _ in 0..config.n_rounds {
        let included = if config.subsample < 1.0 {
            let mut inc = vec![false; n];
            for r in sample(&mut rng, n, sample_count(config.subsample, n)) {
                inc[r] = true;
            }
            inc
        } else {
            vec![true; n]
        };
        let features: Vec<usize> = if config.colsample < 1.0 {
            let mut f = sample(&mut rng, p, sample_count(config.colsample, p)).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..p).collect()
        };
        for r in 0..n {
            (g[r], h[r]) = gradient_hessian(y[r], margins[r]);
        }
        let tree = build_tree(x, &sorted, &features, &included, &g, &h, &params);
        for (r, m) in margins.iter_mut().enumerate() {
            *m += config.learning_rate * tree.predict_row(x.row(r));
        }
        trace.push(mean_loss(y, &margins));
        trees.push(tree);
    }
    let model = GbmModel {
        format_version: MODEL_FORMAT_VERSION,
        n_features: p,
        base_score,
        learning_rate: config.learning_rate,
        config: *config,
        trees,
    };
    Ok((model, trace))
}

impl GbmModel {
    fn check_columns(&self, x: &Matrix) -> Result<()> {
        if x.n_cols() != self.n_features {
            return Err(Error::Schema(format!(
                "model expects {} feature columns, got {}",
                self.n_features,
                x.n_cols()
            )));
        }
        Ok(())
    }

    pub fn margin_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_columns(x)?;
        Ok((0..x.n_rows()).map(|r| sigmoid(self.margin_row(x.row(r)))).collect())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| u8::from(p >= 0.5)).collect())
    }

    /// Total split gain per feature column.
    pub fn importance(&self) -> Vec<f64> {
        let mut totals = vec![0.0; self.n_features];
        for t in &self.trees {
            t.accumulate_gain(&mut totals);
        }
        totals
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: GbmModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn separable(n: usize) -> (Matrix, Vec<u8>) {
        let mut rng = stream(5, "separable");
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let y = rows.iter().map(|r| u8::from(r[1] > 0.2)).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    fn accuracy(pred: &[u8], y: &[u8]) -> f64 {
        pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn learns_threshold_quickly() {
        let (x, y) = separable(300);
        let cfg = GbmConfig { n_rounds: 10, max_depth: 2, ..Default::default() };
        let m = train_gbm(&x, &y, &cfg).unwrap();
        assert!(accuracy(&m.predict(&x).unwrap(), &y) >= 0.99);
        let imp = m.importance();
        assert!(imp[1] > imp[0]);
    }

    #[test]
    fn loss_never_increases_with_full_sampling() {
        let mut rng = stream(9, "noisy");
        let rows: Vec<Vec<f64>> = (0..250)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(r[0] + 0.5 * r[2] + rng.random_range(-1.0..1.0) > 0.0))
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let cfg = GbmConfig { n_rounds: 60, subsample: 1.0, colsample: 1.0, ..Default::default() };
        let (_, trace) = train_gbm_traced(&x, &y, &cfg).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn deterministic_dump_round_trips() {
        let (x, y) = separable(200);
        let cfg = GbmConfig { n_rounds: 15, seed: 3, ..Default::default() };
        let a = train_gbm(&x, &y, &cfg).unwrap();
        let b = train_gbm(&x, &y, &cfg).unwrap();
        let dump = a.to_json().unwrap();
        assert_eq!(dump, b.to_json().unwrap());
        let back = GbmModel::from_json(&dump).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.predict_proba(&x).unwrap(), a.predict_proba(&x).unwrap());
    }

    #[test]
    fn stump_and_empty_ensemble() {
        let (x, y) = separable(100);
        let stump = train_gbm(&x, &y, &GbmConfig { n_rounds: 1, max_depth: 1, ..Default::default() })
            .unwrap();
        assert_eq!(stump.trees.len(), 1);
        assert!(stump.trees[0].depth() <= 1);
        let mut empty = stump.clone();
        empty.trees.clear();
        let p = empty.predict_proba(&x).unwrap();
        let prevalence = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
        assert!(p.iter().all(|&v| (v - prevalence).abs() < 1e-12));
    }

    #[test]
    fn monotone_fixture_gives_monotone_probabilities() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<u8> = (0..200).map(|i| u8::from(i >= 120)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let cfg = GbmConfig { n_rounds: 30, subsample: 1.0, colsample: 1.0, ..Default::default() };
        let m = train_gbm(&x, &y, &cfg).unwrap();
        let grid = Matrix::from_rows(&(0..400).map(|i| vec![i as f64 / 20.0]).collect::<Vec<_>>()).unwrap();
        let p = m.predict_proba(&grid).unwrap();
        assert!(p.windows(2).all(|w| w[1] >= w[0]));
        assert!(p[399] > p[0]);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn rejects_bad_input() {
        let (x, y) = separable(50);
        assert!(matches!(
            train_gbm(&x, &vec![1; 50], &GbmConfig::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(train_gbm(&x, &y, &GbmConfig { n_rounds: 0, ..Default::default() }).is_err());
        let m = train_gbm(&x, &y, &GbmConfig { n_rounds: 2, ..Default::default() }).unwrap();
        let narrow = x.select_cols(&[0]);
        assert!(matches!(m.predict(&narrow), Err(Error::Schema(_))));
    }
}
