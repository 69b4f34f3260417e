//! Per-firm significance screening of features against forward returns.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pearson::{minmax_normalize, pearson, SignificanceRule};
use crate::calendar::WeekIndex;
use crate::error::{Error, Result};
use crate::features::{FeatureKey, FeatureMatrix};
use crate::market::MAX_HORIZON;
use crate::numeric::{five_number, FiveNumber, UNDEFINED};

/// Forward returns of one firm: `rw[h - 1]` is RW_h at each week. Weeks
/// whose label window must stay out of the analysis hold undefined values.
pub type ReturnSeries = BTreeMap<WeekIndex, [f64; MAX_HORIZON as usize]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub alpha: f64,
    /// Largest feature lag tried (lags 1..=max_shift).
    pub max_shift: u8,
    /// Return horizons analysed.
    pub targets: Vec<u8>,
    pub rule: SignificanceRule,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            alpha: 0.05,
            max_shift: 12,
            targets: (1..=MAX_HORIZON).collect(),
            rule: SignificanceRule::PValue,
        }
    }
}

impl SignificanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(1..=12).contains(&self.max_shift) {
            return Err(Error::Config(format!("max shift {} outside 1..=12", self.max_shift)));
        }
        if self.targets.is_empty() {
            return Err(Error::Config("no return horizons to analyse".into()));
        }
        if let Some(h) = self.targets.iter().find(|h| !(1..=MAX_HORIZON).contains(h)) {
            return Err(Error::Config(format!("return horizon {h} outside 1..=12")));
        }
        Ok(())
    }
}

/// The strongest shift for one (feature, target, firm): the smallest
/// criterion over all lags, with its correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestShift {
    pub shift: u8,
    pub criterion: f64,
    pub rho: f64,
    pub p: f64,
    pub n_obs: u32,
}

/// Significance results indexed by (feature, target, firm). Only the best
/// shift per cell is retained; since significance is existential over
/// shifts, that is enough to recover every count.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceTable {
    features: Vec<FeatureKey>,
    targets: Vec<u8>,
    firms: Vec<String>,
    alpha: f64,
    entries: Vec<Option<BestShift>>,
}

impl SignificanceTable {
    /// Builds a table from explicit cells, `cells[f][t][i]`.
    pub fn from_cells(
        features: Vec<FeatureKey>,
        targets: Vec<u8>,
        firms: Vec<String>,
        alpha: f64,
        cells: Vec<Vec<Vec<Option<BestShift>>>>,
    ) -> Result<Self> {
        if cells.len() != features.len()
            || cells.iter().any(|t| {
                t.len() != targets.len() || t.iter().any(|i| i.len() != firms.len())
            })
        {
            return Err(Error::Argument("cell grid does not match table dimensions".into()));
        }
        Ok(SignificanceTable {
            features,
            targets,
            firms,
            alpha,
            entries: cells.into_iter().flatten().flatten().collect(),
        })
    }

    pub fn features(&self) -> &[FeatureKey] {
        &self.features
    }

    pub fn targets(&self) -> &[u8] {
        &self.targets
    }

    pub fn firms(&self) -> &[String] {
        &self.firms
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }

    fn target_pos(&self, target: u8) -> Result<usize> {
        self.targets
            .iter()
            .position(|&t| t == target)
            .ok_or_else(|| Error::Argument(format!("target RW_{target} was not analysed")))
    }

    fn at(&self, f: usize, t: usize, i: usize) -> Option<&BestShift> {
        let idx = (f * self.targets.len() + t) * self.firms.len() + i;
        self.entries[idx].as_ref()
    }

    pub fn best(&self, f: usize, target: u8, firm: usize) -> Result<Option<BestShift>> {
        Ok(self.at(f, self.target_pos(target)?, firm).copied())
    }

    fn significant_at(&self, f: usize, t: usize, i: usize) -> bool {
        self.at(f, t, i).is_some_and(|b| b.criterion <= self.alpha)
    }

    pub fn significant(&self, f: usize, target: u8, firm: usize) -> Result<bool> {
        Ok(self.significant_at(f, self.target_pos(target)?, firm))
    }

    /// Number of firms for which feature `f` is significant with `target`.
    pub fn count(&self, f: usize, target: u8) -> Result<usize> {
        let t = self.target_pos(target)?;
        Ok((0..self.firms.len()).filter(|&i| self.significant_at(f, t, i)).count())
    }

    pub fn counts(&self, target: u8) -> Result<Vec<usize>> {
        (0..self.features.len()).map(|f| self.count(f, target)).collect()
    }

    pub fn passing_rate(&self, f: usize, target: u8) -> Result<f64> {
        if self.firms.is_empty() {
            return Ok(0.0);
        }
        Ok(self.count(f, target)? as f64 / self.firms.len() as f64)
    }

    pub fn passing_rates(&self, target: u8) -> Result<Vec<f64>> {
        (0..self.features.len()).map(|f| self.passing_rate(f, target)).collect()
    }

    /// `feature,target,count,passing_rate` rows, features in catalog order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "target", "count", "passing_rate"])?;
        for &target in &self.targets {
            for (f, key) in self.features.iter().enumerate() {
                let count = self.count(f, target)?;
                w.write_record([
                    key.to_string(),
                    format!("RW_{target}"),
                    count.to_string(),
                    self.passing_rate(f, target)?.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<significance csv>", e))?;
        Ok(())
    }
}

/// Normalized return series of one firm aligned to feature weeks
/// `first_week ..` extended by the largest shift.
fn aligned_targets(
    returns: Option<&ReturnSeries>,
    first_week: WeekIndex,
    len: usize,
    h: u8,
) -> Option<Vec<f64>> {
    let returns = returns?;
    let full: Vec<f64> = returns.values().map(|rw| rw[usize::from(h) - 1]).collect();
    let normalized = minmax_normalize(&full).ok()?;
    let by_week: BTreeMap<WeekIndex, f64> = returns.keys().copied().zip(normalized).collect();
    Some(
        (0..len as WeekIndex)
            .map(|k| by_week.get(&(first_week + k)).copied().unwrap_or(UNDEFINED))
            .collect(),
    )
}

/// Correlates every feature, lagged by 1..=max_shift weeks, against each
/// target return for each firm. Both series are min-max normalized per firm
/// first. Cells that are degenerate or too short for every shift stay empty
/// and count as not significant.
pub fn significance_counts(
    matrix: &FeatureMatrix,
    returns: &BTreeMap<String, ReturnSeries>,
    config: &SignificanceConfig,
) -> Result<SignificanceTable> {
    config.validate()?;
    let max_shift = usize::from(config.max_shift);
    let blocks = matrix.blocks();
    // targets[i][t]: normalized RW aligned to block i, extended by max_shift
    let targets: Vec<Vec<Option<Vec<f64>>>> = blocks
        .iter()
        .map(|b| {
            config
                .targets
                .iter()
                .map(|&h| aligned_targets(returns.get(&b.firm_id), b.first_week, b.len + max_shift, h))
                .collect()
        })
        .collect();

    let n_t = config.targets.len();
    let n_i = blocks.len();
    let per_feature: Vec<Vec<Option<BestShift>>> = (0..matrix.keys().len())
        .into_par_iter()
        .map(|j| {
            let col = matrix.column(j);
            let mut cells = vec![None; n_t * n_i];
            for (i, b) in blocks.iter().enumerate() {
                let Ok(x) = minmax_normalize(&col[b.rows()]) else {
                    continue;
                };
                for t in 0..n_t {
                    let Some(y) = &targets[i][t] else { continue };
                    let mut best: Option<BestShift> = None;
                    for s in 1..=max_shift {
                        let Ok(c) = pearson(&x, &y[s..s + b.len]) else {
                            continue;
                        };
                        let criterion = c.criterion(config.rule);
                        if best.is_none_or(|b| criterion < b.criterion) {
                            best = Some(BestShift {
                                shift: s as u8,
                                criterion,
                                rho: c.rho,
                                p: c.p,
                                n_obs: c.n_obs as u32,
                            });
                        }
                    }
                    cells[t * n_i + i] = best;
                }
            }
            cells
        })
        .collect();

    Ok(SignificanceTable {
        features: matrix.keys().to_vec(),
        targets: config.targets.clone(),
        firms: blocks.iter().map(|b| b.firm_id.clone()).collect(),
        alpha: config.alpha,
        entries: per_feature.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetDistribution {
    pub target: u8,
    /// Five-number summary of the per-feature counts.
    pub counts: Option<FiveNumber>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exemplar {
    pub feature: String,
    pub count: usize,
    pub n_firms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSelection {
    pub selected: u8,
    pub distributions: Vec<TargetDistribution>,
    /// Targets ordered by median count, then mean count, best first.
    pub ranking: Vec<u8>,
    /// Feature with the largest count for the selected target.
    pub exemplar: Option<Exemplar>,
}

/// Summarizes count distributions per target and reports the configured
/// target (the one later models use) with an audit ranking.
pub fn select_target(table: &SignificanceTable, configured: u8) -> Result<TargetSelection> {
    table.target_pos(configured)?;
    let mut distributions = Vec::new();
    for &target in table.targets() {
        let counts: Vec<f64> = table.counts(target)?.into_iter().map(|c| c as f64).collect();
        let mean = if counts.is_empty() {
            0.0
        } else {
            counts.iter().sum::<f64>() / counts.len() as f64
        };
        distributions.push(TargetDistribution {
            target,
            counts: five_number(&counts),
            mean,
        });
    }
    let mut ranking: Vec<&TargetDistribution> = distributions.iter().collect();
    ranking.sort_by(|a, b| {
        let med = |d: &TargetDistribution| d.counts.map_or(0.0, |c| c.median);
        med(b)
            .total_cmp(&med(a))
            .then(b.mean.total_cmp(&a.mean))
            .then(a.target.cmp(&b.target))
    });
    let ranking = ranking.into_iter().map(|d| d.target).collect();
    let counts = table.counts(configured)?;
    let exemplar = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(f, &count)| Exemplar {
            feature: table.features()[f].to_string(),
            count,
            n_firms: table.n_firms(),
        });
    Ok(TargetSelection {
        selected: configured,
        distributions,
        ranking,
        exemplar,
    })
}

/// Slack for comparing passing rates against grid borderlines such as 0.15,
/// which are not exact in binary.
const RATE_EPSILON: f64 = 1e-12;

/// Features whose passing rate for `target` reaches `borderline`.
pub fn passing_rate_filter(
    table: &SignificanceTable,
    target: u8,
    borderline: f64,
) -> Result<Vec<FeatureKey>> {
    if !(0.0..=0.95 + RATE_EPSILON).contains(&borderline) {
        return Err(Error::Argument(format!("borderline {borderline} outside [0, 0.95]")));
    }
    let rates = table.passing_rates(target)?;
    Ok(table
        .features()
        .iter()
        .zip(rates)
        .filter(|(_, r)| *r >= borderline - RATE_EPSILON)
        .map(|(k, _)| *k)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(n: usize) -> Vec<FeatureKey> {
        crate::features::enumerate_catalog(&Default::default())
            .into_iter()
            .take(n)
            .collect()
    }

    fn cell(p: f64) -> Option<BestShift> {
        Some(BestShift { shift: 7, criterion: p, rho: 0.3, p, n_obs: 40 })
    }

    fn table(cells: Vec<Vec<Vec<Option<BestShift>>>>, n_firms: usize) -> SignificanceTable {
        let f = cells.len();
        let targets: Vec<u8> = (1..=cells[0].len() as u8).collect();
        let firms = (0..n_firms).map(|i| format!("F{i}")).collect();
        SignificanceTable::from_cells(keys(f), targets, firms, 0.05, cells).unwrap()
    }

    #[test]
    fn single_shift_below_alpha_is_enough() {
        let t = table(vec![vec![vec![cell(0.04)]]], 1);
        assert!(t.significant(0, 1, 0).unwrap());
        assert_eq!(t.count(0, 1).unwrap(), 1);
        let none = table(vec![vec![vec![cell(0.2)]]], 1);
        assert!(!none.significant(0, 1, 0).unwrap());
        let alpha_exact = table(vec![vec![vec![cell(0.05)]]], 1);
        assert!(alpha_exact.significant(0, 1, 0).unwrap());
    }

    #[test]
    fn boundary_rate_is_kept() {
        let mut firms = vec![cell(0.01); 51];
        firms.extend(vec![cell(0.5); 51]);
        let t = table(vec![vec![firms]], 102);
        assert_eq!(t.passing_rate(0, 1).unwrap(), 0.5);
        assert_eq!(passing_rate_filter(&t, 1, 0.5).unwrap().len(), 1);
        assert_eq!(passing_rate_filter(&t, 1, 0.55).unwrap().len(), 0);
        assert!(passing_rate_filter(&t, 1, 0.96).is_err());
    }

    #[test]
    fn zero_borderline_keeps_everything_and_filtering_is_monotone() {
        let cells: Vec<Vec<Vec<Option<BestShift>>>> = (0..20)
            .map(|f| vec![(0..10).map(|i| if i < f / 2 { cell(0.01) } else { None }).collect()])
            .collect();
        let t = table(cells, 10);
        assert_eq!(passing_rate_filter(&t, 1, 0.0).unwrap().len(), 20);
        let mut last = usize::MAX;
        for k in 0..=19 {
            let kept = passing_rate_filter(&t, 1, k as f64 * 0.05).unwrap().len();
            assert!(kept <= last);
            last = kept;
        }
        for f in 0..20 {
            assert!(t.count(f, 1).unwrap() <= 10);
        }
    }

    #[test]
    fn point_mass_distribution() {
        let t = table(vec![vec![vec![cell(0.01), cell(0.3)]]], 2);
        let sel = select_target(&t, 1).unwrap();
        let d = sel.distributions[0].counts.unwrap();
        assert_eq!((d.min, d.median, d.max), (1.0, 1.0, 1.0));
        assert_eq!(sel.exemplar.unwrap().count, 1);
        assert!(select_target(&t, 8).is_err());
    }

    #[test]
    fn ranking_prefers_higher_median() {
        // target 1: counts {0, 0}; target 2: counts {2, 1}
        let cells = vec![
            vec![vec![None, None], vec![cell(0.01), cell(0.02)]],
            vec![vec![cell(0.5), None], vec![cell(0.01), None]],
        ];
        let t = table(cells, 2);
        let sel = select_target(&t, 1).unwrap();
        assert_eq!(sel.ranking, vec![2, 1]);
        assert_eq!(sel.selected, 1);
    }

    #[test]
    fn counts_from_feature_matrix() {
        use crate::features::{compute_features, BaseFeature, Variant};
        use crate::ingest::{ReviewRecord, UserClient};
        use crate::panel::build_weekly_aggregates;
        use chrono::{Duration, NaiveDate};

        // weekly review counts drive the 3-week-ahead return exactly
        let start = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let counts: Vec<usize> = (0..60).map(|w| 1 + (w * 7 + w * w) % 5).collect();
        let mut reviews = Vec::new();
        for (w, &c) in counts.iter().enumerate() {
            for k in 0..c {
                reviews.push(ReviewRecord {
                    firm_id: "A".into(),
                    product_id: "p".into(),
                    review_id: format!("{w}-{k}"),
                    posted_at: start + Duration::weeks(w as i64),
                    star: 5,
                    is_default: false,
                    days: 1,
                    useful_votes: 0,
                    useless_votes: 0,
                    reply_count: 0,
                    image_count: 0,
                    user_client: UserClient::Web,
                    is_mobile: false,
                    emotion: None,
                    pos_words: 0,
                    neg_words: 0,
                    user_level: None,
                });
            }
        }
        let panel = build_weekly_aggregates(&reviews);
        let key = FeatureKey::new(BaseFeature::Review, Variant::Base, 1, None).unwrap();
        let m = compute_features(&panel, &[key]).unwrap();
        let first = m.blocks()[0].first_week;
        let mut series = ReturnSeries::new();
        for w in 0..72i64 {
            let mut rw = [UNDEFINED; 12];
            // RW_2 at week w equals the review count of week w - 3
            if w >= 3 && ((w - 3) as usize) < counts.len() {
                rw[1] = counts[(w - 3) as usize] as f64 / 100.0;
            }
            rw[0] = ((w * 13) % 7) as f64;
            series.insert(first + w, rw);
        }
        let returns = BTreeMap::from([("A".to_string(), series)]);
        let config = SignificanceConfig { targets: vec![1, 2], ..Default::default() };
        let t = significance_counts(&m, &returns, &config).unwrap();
        let best = t.best(0, 2, 0).unwrap().unwrap();
        assert_eq!(best.shift, 3);
        assert!(best.rho > 1.0 - 1e-12);
        assert_eq!(t.count(0, 2).unwrap(), 1);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("W1Review,RW_2,1,1"));
    }
}
