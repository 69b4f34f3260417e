//! Per-firm hold-out accuracy, firm ranks, and how ranks and reviewer
//! levels spread across sectors.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::dataset::RowMeta;
use crate::error::{Error, Result};
use crate::ingest::{ReviewRecord, UserLevel};
use crate::numeric::{five_number, FiveNumber};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirmAccuracy {
    pub firm_id: String,
    pub sector: String,
    pub n: usize,
    pub accuracy: f64,
    /// 1 is the most accurate firm; equal accuracies rank by firm id.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorRanks {
    pub sector: String,
    pub n_firms: usize,
    pub ranks: FiveNumber,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorUserLevels {
    pub sector: String,
    /// Reviews with a known user level.
    pub n_leveled: usize,
    /// (level, count, share of leveled reviews), in level order.
    pub levels: Vec<(UserLevel, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirmSectorReport {
    pub firms: Vec<FirmAccuracy>,
    pub sectors: Vec<SectorRanks>,
    pub user_levels: Vec<SectorUserLevels>,
}

/// Builds the report from per-row predictions. User-level shares count the
/// reviews of the reported firms.
pub fn firm_sector_report(
    rows: &[RowMeta],
    predictions: &[u8],
    truth: &[u8],
    sectors: &BTreeMap<String, String>,
    reviews: &[ReviewRecord],
) -> Result<FirmSectorReport> {
    if rows.len() != predictions.len() || rows.len() != truth.len() {
        return Err(Error::Argument(format!(
            "{} rows, {} predictions, {} labels",
            rows.len(),
            predictions.len(),
            truth.len()
        )));
    }
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for ((m, &p), &t) in rows.iter().zip(predictions).zip(truth) {
        let e = tally.entry(&m.firm_id).or_default();
        e.0 += 1;
        e.1 += usize::from(p == t);
    }
    let mut firms = Vec::with_capacity(tally.len());
    for (firm, (n, hits)) in tally {
        let sector = sectors
            .get(firm)
            .ok_or_else(|| Error::Validation(format!("firm {firm} is missing from the sector map")))?;
        firms.push(FirmAccuracy {
            firm_id: firm.to_string(),
            sector: sector.clone(),
            n,
            accuracy: hits as f64 / n as f64,
            rank: 0,
        });
    }
    firms.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then_with(|| a.firm_id.cmp(&b.firm_id)));
    for (i, f) in firms.iter_mut().enumerate() {
        f.rank = i + 1;
    }

    let mut by_sector: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for f in &firms {
        by_sector.entry(&f.sector).or_default().push(f.rank as f64);
    }
    let sector_ranks = by_sector
        .into_iter()
        .map(|(sector, ranks)| SectorRanks {
            sector: sector.to_string(),
            n_firms: ranks.len(),
            ranks: five_number(&ranks).expect("sector has a firm"),
        })
        .collect();

    let reported: BTreeSet<&str> = firms.iter().map(|f| f.firm_id.as_str()).collect();
    let mut counts: BTreeMap<&str, BTreeMap<UserLevel, usize>> = BTreeMap::new();
    for f in &firms {
        counts.entry(&f.sector).or_default();
    }
    for r in reviews.iter().filter(|r| reported.contains(r.firm_id.as_str())) {
        if let Some(level) = r.user_level {
            *counts.entry(&sectors[&r.firm_id]).or_default().entry(level).or_default() += 1;
        }
    }
    let user_levels = counts
        .into_iter()
        .map(|(sector, c)| {
            let n: usize = c.values().sum();
            SectorUserLevels {
                sector: sector.to_string(),
                n_leveled: n,
                levels: UserLevel::ALL
                    .iter()
                    .map(|&l| {
                        let k = c.get(&l).copied().unwrap_or(0);
                        (l, k, if n == 0 { 0.0 } else { k as f64 / n as f64 })
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(FirmSectorReport { firms, sectors: sector_ranks, user_levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(firm: &str) -> RowMeta {
        RowMeta {
            firm_id: firm.into(),
            week: 0,
            feature_start_week: 0,
            feature_end_week: 0,
            label_end_week: 8,
        }
    }

    fn sectors() -> BTreeMap<String, String> {
        [("A", "X"), ("B", "Y"), ("C", "X"), ("D", "Y")]
            .iter()
            .map(|(f, s)| (f.to_string(), s.to_string()))
            .collect()
    }

    #[test]
    fn equal_accuracy_ranks_by_firm_id() {
        let rows: Vec<RowMeta> = ["D", "B", "C", "A"].iter().map(|f| meta(f)).collect();
        let r = firm_sector_report(&rows, &[1, 1, 1, 1], &[1, 1, 1, 1], &sectors(), &[]).unwrap();
        let order: Vec<&str> = r.firms.iter().map(|f| f.firm_id.as_str()).collect();
        assert_eq!(order, ["A", "B", "C", "D"]);
        // X holds ranks 1 and 3, Y ranks 2 and 4
        assert_eq!((r.sectors[0].ranks.min, r.sectors[0].ranks.max), (1.0, 3.0));
        assert_eq!((r.sectors[1].ranks.min, r.sectors[1].ranks.max), (2.0, 4.0));
    }

    #[test]
    fn accurate_sector_has_best_median_rank() {
        let rows: Vec<RowMeta> = ["A", "A", "B", "B", "C", "C", "D", "D"].iter().map(|f| meta(f)).collect();
        let pred = [1, 1, 0, 1, 1, 1, 0, 0];
        let truth = [1, 1, 1, 1, 1, 1, 1, 1];
        let r = firm_sector_report(&rows, &pred, &truth, &sectors(), &[]).unwrap();
        let median = |s: &str| r.sectors.iter().find(|x| x.sector == s).unwrap().ranks.median;
        assert!(median("X") < median("Y"));
    }

    #[test]
    fn missing_sector_is_an_error() {
        let rows = vec![meta("Z")];
        assert!(matches!(
            firm_sector_report(&rows, &[1], &[1], &sectors(), &[]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn level_shares_sum_to_one() {
        let corpus = crate::synth::generate(&crate::synth::SynthSpec {
            n_firms: 4,
            n_sectors: 2,
            weeks: 20,
            ..Default::default()
        })
        .unwrap();
        let rows: Vec<RowMeta> = corpus.sectors.keys().map(|f| meta(f)).collect();
        let ones = vec![1; rows.len()];
        let r = firm_sector_report(&rows, &ones, &ones, &corpus.sectors, &corpus.reviews).unwrap();
        for s in &r.user_levels {
            assert!(s.n_leveled > 0);
            let total: f64 = s.levels.iter().map(|l| l.2).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
