//! The modelling experiments run on assembled datasets. Every sweep point
//! is an independent job; results come back in grid order.

use rayon::prelude::*;
use serde::Serialize;

use super::config::Period;
use super::dataset::{trainable, Dataset};
use crate::calendar::WeekIndex;
use crate::error::{Error, Result};
use crate::gbm::{
    evaluate, kfold_cv, majority_share, positive_share, train_learner, CvConfig, EvalMetrics,
    Learner, LearnerConfig, MeanMetrics,
};
use crate::stats::{passing_rate_filter, SignificanceTable};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BorderlinePoint {
    pub borderline: f64,
    pub n_features: usize,
    /// None when the borderline keeps no feature or no fold was usable.
    pub cv: Option<MeanMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BorderlineSweep {
    pub target: u8,
    pub points: Vec<BorderlinePoint>,
    /// Borderline with the highest mean CV accuracy; the lowest wins ties.
    pub best: Option<f64>,
}

impl BorderlineSweep {
    pub fn best_point(&self) -> Option<&BorderlinePoint> {
        let best = self.best?;
        self.points.iter().find(|p| p.borderline == best)
    }
}

/// Cross-validates `learner` on the features each borderline keeps.
pub fn feature_selection_sweep(
    train: &Dataset,
    table: &SignificanceTable,
    target: u8,
    borderlines: &[f64],
    learner: Learner,
    config: &LearnerConfig,
    cv: &CvConfig,
) -> Result<BorderlineSweep> {
    let points = borderlines
        .par_iter()
        .map(|&b| {
            let keys = passing_rate_filter(table, target, b)?;
            if keys.is_empty() {
                return Ok(BorderlinePoint { borderline: b, n_features: 0, cv: None });
            }
            let names: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
            let data = train.select_features(&names)?;
            let result = kfold_cv(&data.design(), &data.y, learner, config, cv)?;
            let cv = result.mean.accuracy.is_some().then_some(result.mean);
            Ok(BorderlinePoint { borderline: b, n_features: keys.len(), cv })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = points
        .iter()
        .filter_map(|p| Some((p.borderline, p.cv?.accuracy?)))
        .fold(None, |acc: Option<(f64, f64)>, (b, a)| match acc {
            Some((_, best)) if best >= a => acc,
            _ => Some((b, a)),
        })
        .map(|(b, _)| b);
    Ok(BorderlineSweep { target, points, best })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TournamentRow {
    pub rank: usize,
    /// Learner name; the majority baseline is listed as "Random".
    pub name: String,
    pub learner: Learner,
    pub mean: Option<MeanMetrics>,
    /// Why the learner produced no result.
    pub failure: Option<String>,
}

fn display_name(learner: Learner) -> String {
    match learner {
        Learner::Majority => "Random".to_string(),
        other => other.name().to_string(),
    }
}

/// Cross-validates every roster learner on identical folds and ranks them
/// by mean accuracy. The majority baseline is always added. A learner that
/// errors gets a failed row instead of aborting the tournament.
pub fn classifier_tournament(
    train: &Dataset,
    roster: &[Learner],
    config: &LearnerConfig,
    cv: &CvConfig,
) -> Result<Vec<TournamentRow>> {
    if roster.is_empty() {
        return Err(Error::Config("tournament roster is empty".into()));
    }
    let mut entrants = roster.to_vec();
    if !entrants.contains(&Learner::Majority) {
        entrants.push(Learner::Majority);
    }
    let x = train.design();
    let mut rows: Vec<TournamentRow> = entrants
        .par_iter()
        .map(|&learner| {
            let (mean, failure) = match kfold_cv(&x, &train.y, learner, config, cv) {
                Ok(r) if r.mean.accuracy.is_some() => (Some(r.mean), None),
                Ok(_) => (None, Some("no usable fold".to_string())),
                Err(e) => {
                    log::warn!("{learner} failed in the tournament: {e}");
                    (None, Some(e.to_string()))
                }
            };
            TournamentRow { rank: 0, name: display_name(learner), learner, mean, failure }
        })
        .collect();
    let acc = |r: &TournamentRow| r.mean.and_then(|m| m.accuracy);
    // stable: equal accuracies keep roster order, failures go last
    rows.sort_by(|a, b| match (acc(a), acc(b)) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldoutResult {
    pub learner: Learner,
    pub feature_set: String,
    pub n_features: usize,
    pub n_train: usize,
    pub metrics: EvalMetrics,
    /// Test-set majority share, the accuracy of always guessing the
    /// commoner direction.
    pub majority_share: f64,
    pub positive_share: f64,
    #[serde(skip)]
    pub predictions: Vec<u8>,
}

/// Fits on the whole training set and scores the test set once.
pub fn holdout(
    train: &Dataset,
    test: &Dataset,
    learner: Learner,
    feature_set: &str,
    config: &LearnerConfig,
) -> Result<HoldoutResult> {
    if train.names != test.names {
        return Err(Error::Schema("train and test carry different feature columns".into()));
    }
    let model = train_learner(learner, &train.design(), &train.y, config)?;
    let predictions = model.predict(&test.design())?;
    Ok(HoldoutResult {
        learner,
        feature_set: feature_set.to_string(),
        n_features: train.names.len(),
        n_train: train.len(),
        metrics: evaluate(&predictions, &test.y)?,
        majority_share: majority_share(&test.y),
        positive_share: positive_share(&test.y),
        predictions,
    })
}

pub const WEEKS_PER_YEAR: f64 = 52.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowPoint {
    pub period: String,
    pub years: f64,
    pub weeks: u32,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: Option<f64>,
    pub majority_share: Option<f64>,
    /// Accuracy minus the test majority share.
    pub relative_accuracy: Option<f64>,
    /// Why the point is undefined.
    pub note: Option<String>,
}

/// One named test period of the window sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTest {
    pub label: String,
    pub period: Period,
}

/// Trains on a trailing window of each length ending `gap` weeks before
/// the test period and reports accuracy relative to the test majority
/// share. Windows reaching before the data, or without both classes, give
/// undefined points.
#[allow(clippy::too_many_arguments)]
pub fn window_sweep(
    full: &Dataset,
    tests: &[WindowTest],
    years: &[f64],
    gap_weeks: u32,
    guard: bool,
    learner: Learner,
    config: &LearnerConfig,
) -> Result<Vec<WindowPoint>> {
    let first_available = full.rows.iter().map(|m| m.week).min();
    let jobs: Vec<(&WindowTest, f64)> =
        tests.iter().flat_map(|t| years.iter().map(move |&y| (t, y))).collect();
    jobs.par_iter()
        .map(|&(t, y)| {
            let weeks = (y * WEEKS_PER_YEAR).round() as u32;
            let end = t.period.first_week() - WeekIndex::from(gap_weeks);
            let start = end - WeekIndex::from(weeks) + 1;
            let window = Period {
                start: crate::calendar::week_start(start),
                end: crate::calendar::week_start(end),
            };
            let train = full.filter_rows(|m| trainable(m, &window, &t.period, guard));
            let test = full.filter_rows(|m| t.period.contains(m.week));
            let mut point = WindowPoint {
                period: t.label.clone(),
                years: y,
                weeks,
                n_train: train.len(),
                n_test: test.len(),
                accuracy: None,
                majority_share: None,
                relative_accuracy: None,
                note: None,
            };
            if first_available.is_none_or(|f| start < f) {
                point.note = Some("window reaches before the available history".into());
            } else if test.is_empty() {
                point.note = Some("no test rows".into());
            } else if !train.has_both_classes() {
                point.note = Some("training window holds fewer than two classes".into());
            } else {
                let r = holdout(&train, &test, learner, "reviews", config)?;
                point.accuracy = Some(r.metrics.accuracy);
                point.majority_share = Some(r.majority_share);
                point.relative_accuracy = Some(r.metrics.accuracy - r.majority_share);
            }
            Ok(point)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauPoint {
    pub tau: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Option<EvalMetrics>,
    pub majority_share: Option<f64>,
}

/// Drops near-zero returns below each threshold from both sets, relabels
/// by sign, and refits. A threshold that empties a class in either set
/// gives an undefined point.
pub fn tau_sweep(
    train: &Dataset,
    test: &Dataset,
    taus: &[f64],
    learner: Learner,
    config: &LearnerConfig,
) -> Result<Vec<TauPoint>> {
    taus.par_iter()
        .map(|&tau| {
            let tr = train.tau_filter(tau)?;
            let te = test.tau_filter(tau)?;
            let mut point =
                TauPoint { tau, n_train: tr.len(), n_test: te.len(), metrics: None, majority_share: None };
            if tr.has_both_classes() && te.has_both_classes() {
                let r = holdout(&tr, &te, learner, "reviews", config)?;
                point.metrics = Some(r.metrics);
                point.majority_share = Some(r.majority_share);
            }
            Ok(point)
        })
        .collect()
}
