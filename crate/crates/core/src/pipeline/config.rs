use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calendar::{week_index, WeekIndex};
use crate::error::{Error, Result};
use crate::features::{enumerate_catalog, BaseFeature, FeatureKey, Variant, WindowGrid};
use crate::gbm::{Learner, LearnerConfig};
use crate::market::MAX_HORIZON;
use crate::panel::HISTORY_WINDOWS;
use crate::stats::{SignificanceConfig, SignificanceRule};

/// An inclusive date range, read as the ISO weeks it touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Period {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Period {
    pub fn first_week(&self) -> WeekIndex {
        week_index(self.start)
    }

    pub fn last_week(&self) -> WeekIndex {
        week_index(self.end)
    }

    pub fn contains(&self, week: WeekIndex) -> bool {
        (self.first_week()..=self.last_week()).contains(&week)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.start > self.end {
            return Err(Error::Config(format!(
                "{what} period starts {} after it ends {}",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train: Period,
    pub test: Period,
    /// Weeks between the end of training and the start of testing.
    #[serde(default = "default_gap")]
    pub gap_weeks: u32,
    /// Drop training rows whose label window reaches into the test period.
    #[serde(default = "default_true")]
    pub snooping_guard: bool,
}

fn default_gap() -> u32 {
    8
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub horizon: u8,
    pub cutoff: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig { horizon: 8, cutoff: 0.0 }
    }
}

/// Firms kept for modelling; zero thresholds keep everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniverseConfig {
    pub min_reviews: usize,
    pub min_span_months: u32,
}

/// Which catalog columns to build. `bases` and `variants` narrow the full
/// catalog when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub lengths: Vec<u8>,
    pub history: Vec<u8>,
    pub bases: Option<Vec<String>>,
    pub variants: Option<Vec<Variant>>,
    /// Append a column flagging rows that had any undefined cell.
    pub validity_flag: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            lengths: (1..=12).collect(),
            history: HISTORY_WINDOWS.to_vec(),
            bases: None,
            variants: None,
            validity_flag: false,
        }
    }
}

impl FeatureConfig {
    pub fn grid(&self) -> WindowGrid {
        WindowGrid { lengths: self.lengths.clone(), history: self.history.clone() }
    }

    /// Catalog keys after the base and variant filters.
    pub fn catalog(&self) -> Result<Vec<FeatureKey>> {
        let grid = self.grid();
        grid.validate()?;
        let bases: Option<Vec<BaseFeature>> = match &self.bases {
            None => None,
            Some(names) => Some(
                names
                    .iter()
                    .map(|n| {
                        BaseFeature::all()
                            .into_iter()
                            .find(|b| b.name() == *n)
                            .ok_or_else(|| Error::Config(format!("unknown feature base {n}")))
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        let keys: Vec<FeatureKey> = enumerate_catalog(&grid)
            .into_iter()
            .filter(|k| bases.as_ref().is_none_or(|b| b.contains(&k.base)))
            .filter(|k| self.variants.as_ref().is_none_or(|v| v.contains(&k.variant)))
            .collect();
        if keys.is_empty() {
            return Err(Error::Config("feature filters leave an empty catalog".into()));
        }
        Ok(keys)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreeningConfig {
    pub alpha: f64,
    pub max_shift: u8,
    pub rule: SignificanceRule,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig { alpha: 0.05, max_shift: 12, rule: SignificanceRule::PValue }
    }
}

/// A grid of reals, either listed or as `{ start, stop, step }` with both
/// ends included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        match *self {
            Grid::List(ref v) => Ok(v.clone()),
            Grid::Range { start, stop, step } => {
                if !(step > 0.0) || !(stop >= start) {
                    return Err(Error::Config(format!(
                        "grid {start}..{stop} step {step} is empty or unbounded"
                    )));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                // rounding keeps 0.15 printed as 0.15 rather than 0.15000000000000002
                Ok((0..=n).map(|i| round12(start + i as f64 * step)).collect())
            }
        }
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

fn check_grid(name: &str, values: &[f64], lo: f64, hi: f64) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(lo..=hi).contains(*v)) {
        return Err(Error::Config(format!("{name} {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub k: usize,
    pub stratify: bool,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings { k: 5, stratify: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub borderlines: Grid,
    pub learner: Learner,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            borderlines: Grid::Range { start: 0.0, stop: 0.95, step: 0.05 },
            learner: Learner::Gbm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TournamentConfig {
    pub roster: Vec<Learner>,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        TournamentConfig {
            roster: vec![
                Learner::Gbm,
                Learner::RandomForest,
                Learner::Logistic,
                Learner::GaussianNb,
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldoutConfig {
    pub learner: Learner,
    /// Look-back of the technical indicators, in weeks.
    pub indicator_period: usize,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        HoldoutConfig { learner: Learner::Gbm, indicator_period: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSweepConfig {
    /// Training window lengths in years (52 weeks each).
    pub years: Grid,
    /// Further test periods, each producing its own curve.
    pub extra_test_periods: Vec<Period>,
}

impl Default for WindowSweepConfig {
    fn default() -> Self {
        WindowSweepConfig {
            years: Grid::Range { start: 0.5, stop: 5.0, step: 0.5 },
            extra_test_periods: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauSweepConfig {
    pub taus: Grid,
}

impl Default for TauSweepConfig {
    fn default() -> Self {
        TauSweepConfig { taus: Grid::Range { start: 0.0, stop: 0.1, step: 0.001 } }
    }
}

/// The whole experiment, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub split: SplitConfig,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub universe: UniverseConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub screening: ScreeningConfig,
    #[serde(default)]
    pub cv: CvSettings,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub tournament: TournamentConfig,
    #[serde(default)]
    pub holdout: HoldoutConfig,
    #[serde(default)]
    pub window_sweep: WindowSweepConfig,
    #[serde(default)]
    pub tau_sweep: TauSweepConfig,
    #[serde(default)]
    pub learners: LearnerConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.split;
        s.train.validate("training")?;
        s.test.validate("test")?;
        for p in &self.window_sweep.extra_test_periods {
            p.validate("window-sweep test")?;
        }
        if s.train.last_week() + i64::from(s.gap_weeks) > s.test.first_week() {
            return Err(Error::Config(format!(
                "training end {} plus a {}-week gap passes test start {}",
                s.train.end, s.gap_weeks, s.test.start
            )));
        }
        let h = self.target.horizon;
        if !(1..=MAX_HORIZON).contains(&h) {
            return Err(Error::Config(format!("target horizon {h} outside 1..=12")));
        }
        if s.snooping_guard && s.gap_weeks < u32::from(h) {
            return Err(Error::Config(format!(
                "gap of {} weeks is shorter than the {h}-week horizon",
                s.gap_weeks
            )));
        }
        if !self.target.cutoff.is_finite() {
            return Err(Error::Config("cutoff must be finite".into()));
        }
        self.features.catalog()?;
        self.significance().validate()?;
        if self.cv.k < 2 {
            return Err(Error::Config(format!("cv.k = {} folds, need at least 2", self.cv.k)));
        }
        check_grid("borderline", &self.selection.borderlines.values()?, 0.0, 0.95)?;
        check_grid("tau", &self.tau_sweep.taus.values()?, 0.0, 0.1)?;
        check_grid("window length", &self.window_sweep.years.values()?, 0.02, 100.0)?;
        if self.tournament.roster.is_empty() {
            return Err(Error::Config("tournament roster is empty".into()));
        }
        if self.holdout.indicator_period < 2 {
            return Err(Error::Config("indicator period must be at least 2".into()));
        }
        self.learners.gbm.validate()
    }

    pub fn significance(&self) -> SignificanceConfig {
        SignificanceConfig {
            alpha: self.screening.alpha,
            max_shift: self.screening.max_shift,
            targets: (1..=MAX_HORIZON).collect(),
            rule: self.screening.rule,
        }
    }

    /// Learner settings with every seed taken from the experiment seed.
    pub fn learner_config(&self) -> LearnerConfig {
        self.learners.with_seed(self.seed)
    }

    /// SHA-256 of the canonical JSON form of the parsed configuration, so
    /// formatting and comments in the file do not change it.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [split]
        train = { start = "2014-01-06", end = "2016-06-30" }
        test = { start = "2016-09-01", end = "2017-06-30" }
    "#;

    #[test]
    fn defaults_fill_everything_but_the_split() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.target.horizon, 8);
        assert_eq!(c.split.gap_weeks, 8);
        assert!(c.split.snooping_guard);
        let b = c.selection.borderlines.values().unwrap();
        assert_eq!(b.len(), 20);
        assert_eq!(b[3], 0.15);
        assert_eq!(*b.last().unwrap(), 0.95);
        assert_eq!(c.tau_sweep.taus.values().unwrap().len(), 101);
        assert_eq!(c.window_sweep.years.values().unwrap(), vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]);
        assert_eq!(c.features.catalog().unwrap().len(), 7676);
        assert!(ExperimentConfig::from_toml("seed = 1").is_err());
    }

    #[test]
    fn rejects_overlapping_split_and_short_gap() {
        let overlap = MINIMAL.replace("2016-09-01", "2016-07-04");
        assert!(matches!(ExperimentConfig::from_toml(&overlap), Err(Error::Config(_))));
        let short_gap = MINIMAL.replace("[split]", "[split]\ngap_weeks = 4");
        assert!(ExperimentConfig::from_toml(&short_gap).is_err());
        let bad_tau = format!("{MINIMAL}\n[tau_sweep]\ntaus = [0.0, 0.2]\n");
        assert!(ExperimentConfig::from_toml(&bad_tau).is_err());
        let typo = format!("{MINIMAL}\n[target]\nhorizn = 8\n");
        assert!(ExperimentConfig::from_toml(&typo).is_err());
    }

    #[test]
    fn base_filter_narrows_catalog() {
        let text = format!("{MINIMAL}\n[features]\nbases = [\"Score\"]\nvariants = [\"Base\"]\nlengths = [1, 4]\n");
        let c = ExperimentConfig::from_toml(&text).unwrap();
        let names: Vec<String> = c.features.catalog().unwrap().iter().map(|k| k.to_string()).collect();
        assert_eq!(names, ["W1Score", "W4Score"]);
        let unknown = format!("{MINIMAL}\n[features]\nbases = [\"Nope\"]\n");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let b = ExperimentConfig::from_toml(&format!("# comment\n{MINIMAL}\n\n")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_toml(&format!("seed = 3\n{MINIMAL}")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
