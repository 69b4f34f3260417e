//! End-to-end experiment protocol: features and labels are built once, then
//! the screening, selection, tournament, hold-out, and robustness sweeps
//! run on the same split.

mod config;
mod dataset;
mod experiments;
mod firm_report;
mod report;

use std::collections::BTreeMap;

pub use config::{
    CvSettings, ExperimentConfig, FeatureConfig, Grid, HoldoutConfig, Period, ScreeningConfig,
    SelectionConfig, SplitConfig, TargetConfig, TauSweepConfig, TournamentConfig, UniverseConfig,
    WindowSweepConfig,
};
pub use dataset::{
    assemble_dataset, audit_leakage, join_rows, lookback, trainable, Dataset, FeatureTable,
    LeakageAudit, RowMeta, Split, VALIDITY_COLUMN,
};
pub use experiments::{
    classifier_tournament, feature_selection_sweep, holdout, tau_sweep, window_sweep,
    BorderlinePoint, BorderlineSweep, HoldoutResult, TauPoint, TournamentRow, WindowPoint,
    WindowTest, WEEKS_PER_YEAR,
};
pub use firm_report::{firm_sector_report, FirmAccuracy, FirmSectorReport, SectorRanks, SectorUserLevels};
pub use report::{
    file_digest, sha256_hex, write_borderline_csv, write_firm_csv, write_holdout_csv,
    write_sector_ranks_csv, write_targets_summary, write_tau_csv, write_tournament_csv,
    write_user_levels_csv, write_window_csv, DatasetSummary, ExperimentReport, FileDigest,
    HoldoutComparison, ReferenceValue, ReportHeader, RunManifest, MANIFEST_FILE,
    REFERENCE_VALUES, TOOL_VERSION,
};

use crate::calendar::WeekIndex;
use crate::error::{Error, Result};
use crate::features::compute_features;
use crate::gbm::{positive_share, CvConfig, LearnerConfig};
use crate::ingest::{filter_firms, DailyBar, ReviewRecord};
use crate::market::{bars_by_firm, labeled_samples, weekly_bars, weekly_returns, LabeledSample, WeeklyBar, MAX_HORIZON};
use crate::numeric::UNDEFINED;
use crate::panel::build_weekly_aggregates;
use crate::stats::{
    passing_rate_filter, select_target, significance_counts, ReturnSeries, SignificanceTable,
    TargetSelection,
};

/// Raw inputs of an experiment.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub reviews: Vec<ReviewRecord>,
    pub prices: Vec<DailyBar>,
    pub sectors: BTreeMap<String, String>,
}

/// Forward returns of each firm limited to the training period: a return
/// is kept only for weeks inside it and, under the guard, only when its
/// window settles before the test period.
pub fn training_returns(bars: &BTreeMap<String, Vec<WeeklyBar>>, split: &SplitConfig) -> Result<BTreeMap<String, ReturnSeries>> {
    let mut out = BTreeMap::new();
    for (firm, series) in bars {
        let by_h = (1..=MAX_HORIZON).map(|h| weekly_returns(series, h)).collect::<Result<Vec<_>>>()?;
        let mut returns = ReturnSeries::new();
        for (i, bar) in series.iter().enumerate() {
            let w = bar.week_index;
            if !split.train.contains(w) {
                continue;
            }
            let mut rw = [UNDEFINED; MAX_HORIZON as usize];
            for (h, r) in by_h.iter().enumerate() {
                let end = w + h as WeekIndex + 1;
                if !split.snooping_guard || end < split.test.first_week() {
                    rw[h] = r[i];
                }
            }
            returns.insert(w, rw);
        }
        out.insert(firm.clone(), returns);
    }
    Ok(out)
}

/// Features, labels, screening table, and the base split, computed once
/// and shared by every step.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub reviews: Vec<ReviewRecord>,
    pub sectors: BTreeMap<String, String>,
    pub bars: BTreeMap<String, Vec<WeeklyBar>>,
    pub labels: Vec<LabeledSample>,
    pub features: FeatureTable,
    pub significance: SignificanceTable,
    pub target: TargetSelection,
    pub split: Split,
    pub n_firms: usize,
}

impl Prepared {
    pub fn new(inputs: Inputs, config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let u = config.universe;
        let kept = filter_firms(&inputs.reviews, u.min_reviews, u.min_span_months);
        if kept.eligible.is_empty() {
            return Err(Error::InsufficientData("no firm passes the universe filter".into()));
        }
        log::info!("{} firms, {} reviews after the universe filter", kept.eligible.len(), kept.reviews.len());
        let panel = build_weekly_aggregates(&kept.reviews);
        let catalog = config.features.catalog()?;
        let matrix = compute_features(&panel, &catalog)?;
        log::info!("computed {} features over {} firm-weeks", matrix.keys().len(), matrix.n_rows());

        let bars = bars_by_firm(&weekly_bars(&inputs.prices));
        let returns = training_returns(&bars, &config.split)?;
        let significance = significance_counts(&matrix, &returns, &config.significance())?;
        let target = select_target(&significance, config.target.horizon)?;
        log::info!("significance screening done; modelled target RW_{}", target.selected);

        let mut labels = Vec::new();
        for series in bars.values() {
            labels.extend(labeled_samples(series, config.target.horizon, config.target.cutoff)?);
        }
        let features = FeatureTable::from_matrix(matrix);
        let split = assemble_dataset(
            &features,
            &labels,
            &config.split,
            config.target.horizon,
            config.features.validity_flag,
        )?;
        Ok(Prepared {
            n_firms: kept.eligible.len(),
            config,
            reviews: kept.reviews,
            sectors: inputs.sectors,
            bars,
            labels,
            features,
            significance,
            target,
            split,
        })
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig { k: self.config.cv.k, seed: self.config.seed, stratify: self.config.cv.stratify }
    }

    pub fn learners(&self) -> LearnerConfig {
        self.config.learner_config()
    }

    pub fn audit(&self) -> LeakageAudit {
        let s = &self.config.split;
        audit_leakage(&self.split.train, &self.split.test, &s.test, s.snooping_guard)
    }

    pub fn borderline_sweep(&self) -> Result<BorderlineSweep> {
        let c = &self.config;
        feature_selection_sweep(
            &self.split.train,
            &self.significance,
            c.target.horizon,
            &c.selection.borderlines.values()?,
            c.selection.learner,
            &self.learners(),
            &self.cv(),
        )
    }

    /// Names of the features whose passing rate reaches `borderline`.
    pub fn selected_features(&self, borderline: f64) -> Result<Vec<String>> {
        let keys = passing_rate_filter(&self.significance, self.config.target.horizon, borderline)?;
        if keys.is_empty() {
            return Err(Error::InsufficientData(format!("borderline {borderline} keeps no feature")));
        }
        Ok(keys.iter().map(|k| k.to_string()).collect())
    }

    pub fn tournament(&self, features: &[String]) -> Result<Vec<TournamentRow>> {
        let train = self.split.train.select_features(features)?;
        classifier_tournament(&train, &self.config.tournament.roster, &self.learners(), &self.cv())
    }

    /// Review features against the technical indicators, both fitted and
    /// scored on the rows the two feature sets share.
    pub fn holdout(&self, features: &[String]) -> Result<HoldoutComparison> {
        let c = &self.config;
        let indicators = FeatureTable::from_indicators(&self.bars, c.holdout.indicator_period)?;
        let ind = assemble_dataset(&indicators, &self.labels, &c.split, c.target.horizon, false)?;
        let rev_train = self.split.train.select_features(features)?;
        let rev_test = self.split.test.select_features(features)?;
        let (rev_train, ind_train) = (rev_train.common_with(&ind.train), ind.train.common_with(&rev_train));
        let (rev_test, ind_test) = (rev_test.common_with(&ind.test), ind.test.common_with(&rev_test));
        if rev_train.is_empty() || rev_test.is_empty() {
            return Err(Error::InsufficientData(
                "review and indicator rows share no training or test week".into(),
            ));
        }
        let learner = c.holdout.learner;
        Ok(HoldoutComparison {
            reviews: holdout(&rev_train, &rev_test, learner, "reviews", &self.learners())?,
            indicators: holdout(&ind_train, &ind_test, learner, "indicators", &self.learners())?,
        })
    }

    /// Test rows behind the review side of [`Prepared::holdout`], in the
    /// order of its predictions.
    pub fn holdout_test_rows(&self) -> Result<Dataset> {
        let c = &self.config;
        let indicators = FeatureTable::from_indicators(&self.bars, c.holdout.indicator_period)?;
        let ind = assemble_dataset(&indicators, &self.labels, &c.split, c.target.horizon, false)?;
        Ok(self.split.test.common_with(&ind.test))
    }

    pub fn window_sweep(&self, features: &[String]) -> Result<Vec<WindowPoint>> {
        let c = &self.config;
        let full = join_rows(&self.features, &self.labels, c.target.horizon, c.features.validity_flag, |_| true)
            .select_features(features)?;
        let mut tests = vec![WindowTest { label: "test".into(), period: c.split.test }];
        tests.extend(c.window_sweep.extra_test_periods.iter().enumerate().map(|(i, p)| WindowTest {
            label: format!("test_{}", i + 2),
            period: *p,
        }));
        window_sweep(
            &full,
            &tests,
            &c.window_sweep.years.values()?,
            c.split.gap_weeks,
            c.split.snooping_guard,
            c.holdout.learner,
            &self.learners(),
        )
    }

    pub fn tau_sweep(&self, features: &[String]) -> Result<Vec<TauPoint>> {
        let c = &self.config;
        tau_sweep(
            &self.split.train.select_features(features)?,
            &self.split.test.select_features(features)?,
            &c.tau_sweep.taus.values()?,
            c.holdout.learner,
            &self.learners(),
        )
    }

    pub fn firm_report(&self, holdout: &HoldoutComparison) -> Result<FirmSectorReport> {
        let test = self.holdout_test_rows()?;
        firm_sector_report(&test.rows, &holdout.reviews.predictions, &test.y, &self.sectors, &self.reviews)
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            n_firms: self.n_firms,
            n_features: self.features.names().len(),
            n_train: self.split.train.len(),
            n_test: self.split.test.len(),
            train_positive_share: positive_share(&self.split.train.y),
            test_positive_share: positive_share(&self.split.test.y),
        }
    }

    /// Every step in order, with features chosen by the borderline sweep.
    pub fn run(&self) -> Result<ExperimentReport> {
        let audit = self.audit();
        if !audit.passed() {
            return Err(Error::Validation(format!(
                "leakage audit found {} violations, first: {}",
                audit.violations.len(),
                audit.violations[0]
            )));
        }
        let sweep = self.borderline_sweep()?;
        let best = sweep.best.ok_or_else(|| {
            Error::InsufficientData("no borderline produced a cross-validated accuracy".into())
        })?;
        log::info!("selected borderline {best}");
        let selected = self.selected_features(best)?;
        let tournament = self.tournament(&selected)?;
        let holdout = self.holdout(&selected)?;
        let window = self.window_sweep(&selected)?;
        let tau = self.tau_sweep(&selected)?;
        let firms = self.firm_report(&holdout)?;
        Ok(ExperimentReport {
            header: ReportHeader::new(self.config.hash(), self.config.seed),
            dataset: self.summary(),
            audit,
            target: self.target.clone(),
            significance: self.significance.clone(),
            borderline_sweep: sweep,
            selected_borderline: best,
            selected_features: selected,
            tournament,
            holdout,
            window_sweep: window,
            tau_sweep: tau,
            firms,
        })
    }
}

/// Prepares and runs the full protocol.
pub fn run_experiment(inputs: Inputs, config: ExperimentConfig) -> Result<ExperimentReport> {
    Prepared::new(inputs, config)?.run()
}
