//! Dense firm-week feature matrix computed from the weekly panel.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use super::catalog::{BaseFeature, FeatureKey, Variant};
use crate::calendar::{week_start, WeekIndex};
use crate::error::{Error, Result};
use crate::numeric::{from_option, UNDEFINED};
use crate::panel::{Counter, FirmPanel, Panel};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RowKey {
    pub firm_id: String,
    pub week: WeekIndex,
}

/// Contiguous rows of one firm, consecutive weeks starting at `first_week`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmBlock {
    pub firm_id: String,
    pub first_week: WeekIndex,
    pub offset: usize,
    pub len: usize,
}

impl FirmBlock {
    pub fn rows(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }

    pub fn weeks(&self) -> Range<WeekIndex> {
        self.first_week..self.first_week + self.len as WeekIndex
    }

    pub fn row_of(&self, week: WeekIndex) -> Option<usize> {
        let pos = usize::try_from(week - self.first_week).ok()?;
        (pos < self.len).then_some(self.offset + pos)
    }
}

/// Column-major matrix: `columns[j][r]` is feature `keys[j]` at row `r`.
/// Undefined cells hold [`UNDEFINED`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    blocks: Vec<FirmBlock>,
    keys: Vec<FeatureKey>,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }

    pub fn keys(&self) -> &[FeatureKey] {
        &self.keys
    }

    pub fn blocks(&self) -> &[FirmBlock] {
        &self.blocks
    }

    pub fn block(&self, firm_id: &str) -> Option<&FirmBlock> {
        self.blocks.iter().find(|b| b.firm_id == firm_id)
    }

    /// Gives up the column storage, in key order.
    pub fn into_columns(self) -> Vec<Vec<f64>> {
        self.columns
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn column_index(&self, key: &FeatureKey) -> Option<usize> {
        self.keys.binary_search(key).ok()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    /// Value at (firm, week), undefined when the row does not exist.
    pub fn get(&self, firm_id: &str, week: WeekIndex, col: usize) -> f64 {
        self.block(firm_id)
            .and_then(|b| b.row_of(week))
            .map_or(UNDEFINED, |r| self.columns[col][r])
    }

    pub fn row_keys(&self) -> Vec<RowKey> {
        self.blocks
            .iter()
            .flat_map(|b| {
                b.weeks().map(move |week| RowKey {
                    firm_id: b.firm_id.clone(),
                    week,
                })
            })
            .collect()
    }

    /// Keeps only the listed columns, in catalog order.
    pub fn select(&self, keys: &[FeatureKey]) -> Result<FeatureMatrix> {
        let mut wanted = keys.to_vec();
        wanted.sort();
        wanted.dedup();
        let mut columns = Vec::with_capacity(wanted.len());
        for k in &wanted {
            let j = self
                .column_index(k)
                .ok_or_else(|| Error::Config(format!("feature {k} is not in the matrix")))?;
            columns.push(self.columns[j].clone());
        }
        Ok(FeatureMatrix {
            blocks: self.blocks.clone(),
            keys: wanted,
            columns,
        })
    }

    /// CSV with `firm_id,week_start` followed by one column per feature name;
    /// undefined cells are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["firm_id".to_string(), "week_start".to_string()];
        header.extend(self.keys.iter().map(|k| k.to_string()));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for b in &self.blocks {
            for (r, week) in b.rows().zip(b.weeks()) {
                record.clear();
                record.push(b.firm_id.clone());
                record.push(week_start(week).to_string());
                for col in &self.columns {
                    let v = col[r];
                    record.push(if v.is_nan() { String::new() } else { v.to_string() });
                }
                w.write_record(&record)?;
            }
        }
        w.flush().map_err(|e| Error::io("<feature csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct CatalogEntry {
    name: String,
    category: String,
    base: String,
    variant: String,
    n: u8,
    m: Option<u8>,
    formula: &'static str,
}

/// JSON sidecar describing each column: name, parts and formula identifier.
pub fn write_catalog_json<W: Write>(keys: &[FeatureKey], out: W) -> Result<()> {
    let entries: Vec<CatalogEntry> = keys
        .iter()
        .map(|k| CatalogEntry {
            name: k.to_string(),
            category: format!("{:?}", k.category),
            base: k.base.name(),
            variant: format!("{:?}", k.variant),
            n: k.n,
            m: k.m,
            formula: k.variant.formula(),
        })
        .collect();
    serde_json::to_writer_pretty(out, &serde_json::json!({
        "feature_count": keys.len(),
        "features": entries,
    }))?;
    Ok(())
}

/// Window sums of one firm, with the feature-level building blocks.
struct Windows<'a> {
    firm: &'a FirmPanel,
}

fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    let den = den?;
    let num = num?;
    (den != 0.0).then(|| num / den)
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

impl Windows<'_> {
    fn sum(&self, c: Counter, n: u8, end: WeekIndex) -> Option<f64> {
        self.firm.window_sum(c, u32::from(n), end)
    }

    /// Level of a basic feature over the `n` weeks ending at `end`.
    fn basic(&self, base: BaseFeature, n: u8, end: WeekIndex) -> Option<f64> {
        use BaseFeature as B;
        let s = |c| self.sum(c, n, end);
        match base {
            B::Star15 => diff(s(Counter::Star5), s(Counter::Star1)),
            B::Score => {
                let mut weighted = 0.0;
                for star in 1..=5u8 {
                    weighted += f64::from(star) * s(Counter::star(star))?;
                }
                ratio(Some(weighted), s(Counter::Review))
            }
            B::TendencyWord => {
                let pos = s(Counter::PosWords)?;
                let neg = s(Counter::NegWords)?;
                ratio(Some(pos - neg), Some(pos + neg))
            }
            B::Tendency => Some(s(Counter::PosTendency)? + s(Counter::NegTendency)?),
            B::Days => ratio(s(Counter::Days), s(Counter::Review)),
            other => s(counter_of(other)),
        }
    }

    /// Share of reviews (`Ratio` variant).
    fn ratio(&self, base: BaseFeature, n: u8, end: WeekIndex) -> Option<f64> {
        let review = self.sum(Counter::Review, n, end);
        if base == BaseFeature::Star15 {
            let five = ratio(self.sum(Counter::Star5, n, end), review);
            let one = ratio(self.sum(Counter::Star1, n, end), review);
            return diff(five, one);
        }
        ratio(self.basic(base, n, end), review)
    }

    /// Per-review mean (`Average` variant); the tendency sums average over
    /// the reviews that carry them.
    fn average(&self, base: BaseFeature, n: u8, end: WeekIndex) -> Option<f64> {
        let den = match base {
            BaseFeature::TendencyPos => Counter::PosReviews,
            BaseFeature::TendencyNeg => Counter::NegReviews,
            _ => Counter::Review,
        };
        ratio(self.basic(base, n, end), self.sum(den, n, end))
    }

    /// Share of emotional reviews (`RatioE` variant).
    fn ratio_e(&self, base: BaseFeature, n: u8, end: WeekIndex) -> Option<f64> {
        ratio(self.basic(base, n, end), self.sum(Counter::Emotional, n, end))
    }

    fn total_days(&self, n: u8, end: WeekIndex) -> Option<f64> {
        Some(self.basic(BaseFeature::Days, n, end)? * self.sum(Counter::Review, n, end)?)
    }

    fn cell(&self, key: &FeatureKey, i: WeekIndex) -> Option<f64> {
        let (b, n) = (key.base, key.n);
        let prior = i - WeekIndex::from(n);
        let m = || key.m.expect("history variant without m");
        match key.variant {
            Variant::Base => self.basic(b, n, i),
            Variant::Diff => diff(self.basic(b, n, i), self.basic(b, n, i - 1)),
            Variant::DiffRatio => {
                let prev = self.basic(b, n, i - 1);
                ratio(diff(self.basic(b, n, i), prev), prev)
            }
            Variant::Ratio => self.ratio(b, n, i),
            Variant::RatioDiff => diff(self.ratio(b, n, i), self.ratio(b, n, i - 1)),
            Variant::DiffH => diff(self.basic(b, n, i), self.basic(b, m(), prior)),
            Variant::RatioDiffH => diff(self.ratio(b, n, i), self.ratio(b, m(), prior)),
            Variant::Average => self.average(b, n, i),
            Variant::AverageDiff => diff(self.average(b, n, i), self.average(b, n, i - 1)),
            Variant::AverageDiffH => diff(self.average(b, n, i), self.average(b, m(), prior)),
            Variant::RatioE => self.ratio_e(b, n, i),
            Variant::RatioEDiff => diff(self.ratio_e(b, n, i), self.ratio_e(b, n, i - 1)),
            Variant::RatioEDiffH => diff(self.ratio_e(b, n, i), self.ratio_e(b, m(), prior)),
            Variant::DaysH => diff(self.total_days(n, i), self.total_days(m(), prior)),
        }
    }
}

/// Panel counter backing a plain-count basic feature.
pub(crate) fn counter_of(base: BaseFeature) -> Counter {
    use BaseFeature as B;
    match base {
        B::Review => Counter::Review,
        B::Star(s) => Counter::star(s),
        B::Default => Counter::Default,
        B::Emotion(e) => Counter::emotion(e),
        B::EmotionAll => Counter::Emotional,
        B::EmotionNegative => Counter::NegativeEmotion,
        B::TendencyPosWords => Counter::PosWords,
        B::TendencyNegWords => Counter::NegWords,
        B::TendencyPosReviews => Counter::PosReviews,
        B::TendencyNegReviews => Counter::NegReviews,
        B::TendencyPos => Counter::PosTendency,
        B::TendencyNeg => Counter::NegTendency,
        B::Useful => Counter::Useful,
        B::UsefulReviews => Counter::UsefulReviews,
        B::Useless => Counter::Useless,
        B::UselessReviews => Counter::UselessReviews,
        B::Image => Counter::Image,
        B::ImageReviews => Counter::ImageReviews,
        B::Reply => Counter::Reply,
        B::ReplyReviews => Counter::ReplyReviews,
        B::Client(c) => Counter::client(c),
        B::Mobile => Counter::Mobile,
        B::Star15 | B::Score | B::TendencyWord | B::Tendency | B::Days => {
            unreachable!("{base:?} is derived from several counters")
        }
    }
}

/// Computes every key for every firm-week of the panel. Rows are grouped by
/// firm (in panel order) and cover each firm's full week span; columns are
/// the keys in catalog order.
pub fn compute_features(panel: &Panel, catalog: &[FeatureKey]) -> Result<FeatureMatrix> {
    for k in catalog {
        k.validate()?;
    }
    let mut keys = catalog.to_vec();
    keys.sort();
    keys.dedup();
    let mut blocks = Vec::with_capacity(panel.firms().len());
    let mut offset = 0;
    for f in panel.firms() {
        blocks.push(FirmBlock {
            firm_id: f.firm_id.clone(),
            first_week: f.first_week,
            offset,
            len: f.len(),
        });
        offset += f.len();
    }
    let columns = keys
        .par_iter()
        .map(|key| {
            let mut col = Vec::with_capacity(offset);
            for firm in panel.firms() {
                let w = Windows { firm };
                col.extend(firm.week_range().map(|i| from_option(w.cell(key, i))));
            }
            col
        })
        .collect();
    Ok(FeatureMatrix {
        blocks,
        keys,
        columns,
    })
}

/// Lags every feature by `s` weeks: the row of (firm, i) carries the values
/// originally at (firm, i − s). The first `s` rows of each firm have no
/// source and are dropped.
pub fn shift_features(matrix: &FeatureMatrix, s: u8) -> Result<FeatureMatrix> {
    if !(1..=12).contains(&s) {
        return Err(Error::Argument(format!("shift {s} outside 1..=12")));
    }
    let s = usize::from(s);
    let mut blocks = Vec::with_capacity(matrix.blocks.len());
    let mut offset = 0;
    for b in &matrix.blocks {
        let len = b.len.saturating_sub(s);
        blocks.push(FirmBlock {
            firm_id: b.firm_id.clone(),
            first_week: b.first_week + s as WeekIndex,
            offset,
            len,
        });
        offset += len;
    }
    let columns = matrix
        .columns
        .iter()
        .map(|col| {
            let mut out = Vec::with_capacity(offset);
            for b in &matrix.blocks {
                let keep = b.len.saturating_sub(s);
                out.extend_from_slice(&col[b.offset..b.offset + keep]);
            }
            out
        })
        .collect();
    Ok(FeatureMatrix {
        blocks,
        keys: matrix.keys.clone(),
        columns,
    })
}
