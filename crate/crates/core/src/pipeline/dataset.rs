//! Joining feature rows with labels, splitting by date, and the audit that
//! proves no training row looks into the test period.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use super::config::{Period, SplitConfig};
use crate::calendar::WeekIndex;
use crate::error::{Error, Result};
use crate::features::{FeatureKey, FeatureMatrix, Variant};
use crate::gbm::{majority_share, Matrix};
use crate::market::{indicator_series, IndicatorVector, LabeledSample, WeeklyBar};
use crate::numeric::is_defined;

/// Name of the optional column flagging rows that had an undefined cell.
pub const VALIDITY_COLUMN: &str = "row_has_undefined";

/// Weeks of review history a key reads, counting its own week.
pub fn lookback(key: &FeatureKey) -> u32 {
    let n = u32::from(key.n);
    match key.variant {
        Variant::Base | Variant::Ratio | Variant::Average | Variant::RatioE => n,
        Variant::Diff
        | Variant::DiffRatio
        | Variant::RatioDiff
        | Variant::AverageDiff
        | Variant::RatioEDiff => n + 1,
        Variant::DiffH
        | Variant::RatioDiffH
        | Variant::AverageDiffH
        | Variant::RatioEDiffH
        | Variant::DaysH => n + u32::from(key.m.unwrap_or(0)),
    }
}

/// Named feature columns over (firm, week) rows. `history[r]` is how many
/// weeks of source data the row's firm has up to and including the row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    names: Vec<String>,
    lookback: Vec<u32>,
    firms: Vec<String>,
    weeks: Vec<WeekIndex>,
    history: Vec<u32>,
    columns: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn from_matrix(matrix: FeatureMatrix) -> Self {
        let names = matrix.keys().iter().map(|k| k.to_string()).collect();
        let lookback = matrix.keys().iter().map(lookback).collect();
        let mut firms = Vec::new();
        let mut weeks = Vec::new();
        let mut history = Vec::new();
        for b in matrix.blocks() {
            for (i, w) in b.weeks().enumerate() {
                firms.push(b.firm_id.clone());
                weeks.push(w);
                history.push(i as u32 + 1);
            }
        }
        FeatureTable { names, lookback, firms, weeks, history, columns: matrix.into_columns() }
    }

    /// The ten technical indicators for every week where all of them are
    /// defined.
    pub fn from_indicators(bars: &BTreeMap<String, Vec<WeeklyBar>>, period: usize) -> Result<Self> {
        let mut firms = Vec::new();
        let mut weeks = Vec::new();
        let mut columns = vec![Vec::new(); IndicatorVector::NAMES.len()];
        for (firm, series) in bars {
            for (bar, v) in series.iter().zip(indicator_series(series, period)?) {
                if !v.is_defined() {
                    continue;
                }
                firms.push(firm.clone());
                weeks.push(bar.week_index);
                for (col, x) in columns.iter_mut().zip(v.to_array()) {
                    col.push(x);
                }
            }
        }
        let n = firms.len();
        Ok(FeatureTable {
            names: IndicatorVector::NAMES.iter().map(|s| s.to_string()).collect(),
            lookback: vec![1; IndicatorVector::NAMES.len()],
            firms,
            weeks,
            history: vec![u32::MAX; n],
            columns,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.weeks.len()
    }

    /// Keeps the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureTable> {
        let index: HashMap<&str, usize> =
            self.names.iter().enumerate().map(|(j, n)| (n.as_str(), j)).collect();
        let cols = names
            .iter()
            .map(|n| {
                index
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| Error::Config(format!("feature {n} is not in the table")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureTable {
            names: names.to_vec(),
            lookback: cols.iter().map(|&j| self.lookback[j]).collect(),
            firms: self.firms.clone(),
            weeks: self.weeks.clone(),
            history: self.history.clone(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
        })
    }
}

/// Provenance of one modelling row, kept for the leakage audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowMeta {
    pub firm_id: String,
    pub week: WeekIndex,
    /// Earliest week any feature of the row reads.
    pub feature_start_week: WeekIndex,
    /// Latest week any feature of the row reads.
    pub feature_end_week: WeekIndex,
    /// Week whose close settles the label.
    pub label_end_week: WeekIndex,
}

/// Model-ready rows. `x` keeps undefined cells; [`Dataset::design`] imputes
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub x: Matrix,
    pub y: Vec<u8>,
    pub rw: Vec<f64>,
    pub rows: Vec<RowMeta>,
    pub validity_flag: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Design matrix: undefined cells become 0, and with the validity flag
    /// on, a last column marks rows that had any.
    pub fn design(&self) -> Matrix {
        let p = self.x.n_cols();
        let width = p + usize::from(self.validity_flag);
        let mut data = Vec::with_capacity(self.len() * width);
        for r in 0..self.len() {
            let row = self.x.row(r);
            data.extend(row.iter().map(|&v| if is_defined(v) { v } else { 0.0 }));
            if self.validity_flag {
                data.push(if row.iter().all(|v| is_defined(*v)) { 0.0 } else { 1.0 });
            }
        }
        Matrix::new(self.len(), width, data).expect("shape is consistent")
    }

    pub fn design_names(&self) -> Vec<String> {
        let mut names = self.names.clone();
        if self.validity_flag {
            names.push(VALIDITY_COLUMN.to_string());
        }
        names
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            rw: rows.iter().map(|&r| self.rw[r]).collect(),
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            validity_flag: self.validity_flag,
        }
    }

    pub fn filter_rows(&self, keep: impl Fn(&RowMeta) -> bool) -> Dataset {
        let rows: Vec<usize> = (0..self.len()).filter(|&r| keep(&self.rows[r])).collect();
        self.subset(&rows)
    }

    /// Keeps the named feature columns, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<Dataset> {
        let index: HashMap<&str, usize> =
            self.names.iter().enumerate().map(|(j, n)| (n.as_str(), j)).collect();
        let cols = names
            .iter()
            .map(|n| {
                index
                    .get(n.as_str())
                    .copied()
                    .ok_or_else(|| Error::Config(format!("feature {n} is not in the dataset")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            names: names.to_vec(),
            x: self.x.select_cols(&cols),
            y: self.y.clone(),
            rw: self.rw.clone(),
            rows: self.rows.clone(),
            validity_flag: self.validity_flag,
        })
    }

    /// Rows whose (firm, week) is also in `other`, in this dataset's order.
    pub fn common_with(&self, other: &Dataset) -> Dataset {
        let keys: HashSet<(&str, WeekIndex)> =
            other.rows.iter().map(|m| (m.firm_id.as_str(), m.week)).collect();
        self.filter_rows(|m| keys.contains(&(m.firm_id.as_str(), m.week)))
    }

    /// Drops rows with |rw| <= tau and relabels the rest by the sign of
    /// the raw return.
    pub fn tau_filter(&self, tau: f64) -> Result<Dataset> {
        if !(0.0..=0.1).contains(&tau) {
            return Err(Error::Argument(format!("tau {tau} outside [0, 0.1]")));
        }
        let rows: Vec<usize> =
            (0..self.len()).filter(|&r| self.rw[r] > tau || self.rw[r] < -tau).collect();
        let mut out = self.subset(&rows);
        out.y = out.rw.iter().map(|&r| u8::from(r > tau)).collect();
        Ok(out)
    }

    pub fn majority_share(&self) -> f64 {
        majority_share(&self.y)
    }

    pub fn has_both_classes(&self) -> bool {
        self.y.contains(&0) && self.y.contains(&1)
    }
}

/// Inner join of feature rows and labels. Rows without enough history for
/// the widest window are left out rather than imputed; `keep` picks rows
/// by their provenance.
pub fn join_rows(
    table: &FeatureTable,
    labels: &[LabeledSample],
    horizon: u8,
    validity_flag: bool,
    keep: impl Fn(&RowMeta) -> bool,
) -> Dataset {
    let by_key: HashMap<(&str, WeekIndex), &LabeledSample> =
        labels.iter().map(|s| ((s.firm_id.as_str(), s.week_index), s)).collect();
    let need = table.lookback.iter().copied().max().unwrap_or(1);
    let p = table.names.len();
    let mut data = Vec::new();
    let (mut y, mut rw, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..table.n_rows() {
        if table.history[r] < need {
            continue;
        }
        let (firm, week) = (&table.firms[r], table.weeks[r]);
        let Some(sample) = by_key.get(&(firm.as_str(), week)) else {
            continue;
        };
        let meta = RowMeta {
            firm_id: firm.clone(),
            week,
            feature_start_week: week - WeekIndex::from(need) + 1,
            feature_end_week: week,
            label_end_week: week + WeekIndex::from(horizon),
        };
        if !keep(&meta) {
            continue;
        }
        data.extend(table.columns.iter().map(|c| c[r]));
        y.push(sample.label);
        rw.push(sample.rw);
        rows.push(meta);
    }
    Dataset {
        names: table.names.clone(),
        x: Matrix::new(rows.len(), p, data).expect("shape is consistent"),
        y,
        rw,
        rows,
        validity_flag,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

/// Whether a row may train a model evaluated on `test`: inside the
/// training period and, under the guard, with its label settled before the
/// test period opens.
pub fn trainable(meta: &RowMeta, train: &Period, test: &Period, guard: bool) -> bool {
    train.contains(meta.week) && (!guard || meta.label_end_week < test.first_week())
}

/// Joins features with labels and splits by date.
pub fn assemble_dataset(
    table: &FeatureTable,
    labels: &[LabeledSample],
    split: &SplitConfig,
    horizon: u8,
    validity_flag: bool,
) -> Result<Split> {
    let train = join_rows(table, labels, horizon, validity_flag, |m| {
        trainable(m, &split.train, &split.test, split.snooping_guard)
    });
    let test = join_rows(table, labels, horizon, validity_flag, |m| split.test.contains(m.week));
    if train.is_empty() {
        return Err(Error::Config("no training rows remain after the split".into()));
    }
    if test.is_empty() {
        return Err(Error::Config("no test rows remain after the split".into()));
    }
    Ok(Split { train, test })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeakageAudit {
    pub train_rows: usize,
    pub test_rows: usize,
    pub violations: Vec<String>,
}

impl LeakageAudit {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every training row against the test period: features may not
/// read past the row's own week, rows may not sit in the test period, and
/// under the guard the label must settle before the test period starts.
pub fn audit_leakage(train: &Dataset, test: &Dataset, test_period: &Period, guard: bool) -> LeakageAudit {
    let mut violations = Vec::new();
    let test_keys: HashSet<(&str, WeekIndex)> =
        test.rows.iter().map(|m| (m.firm_id.as_str(), m.week)).collect();
    for m in &train.rows {
        let id = format!("{}@{}", m.firm_id, m.week);
        if m.feature_end_week > m.week || m.feature_start_week > m.feature_end_week {
            violations.push(format!("{id}: features read weeks {}..={}", m.feature_start_week, m.feature_end_week));
        }
        if test_period.contains(m.week) || test_keys.contains(&(m.firm_id.as_str(), m.week)) {
            violations.push(format!("{id}: training row inside the test period"));
        }
        if guard && m.label_end_week >= test_period.first_week() {
            violations.push(format!("{id}: label settles in week {}, test starts {}", m.label_end_week, test_period.first_week()));
        }
    }
    LeakageAudit { train_rows: train.len(), test_rows: test.len(), violations }
}
