use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::calendar::{week_index, week_start, WeekIndex};
use crate::error::{Error, Result};
use crate::ingest::DailyBar;
use crate::numeric::{is_defined, UNDEFINED};

/// Weekly OHLC: open of the first trading day, close of the last, extremal
/// high and low over the week.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeeklyBar {
    pub firm_id: String,
    pub week_index: WeekIndex,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

/// One bar per (firm, ISO week) with at least one trading day, sorted by
/// firm then week.
pub fn weekly_bars(daily: &[DailyBar]) -> Vec<WeeklyBar> {
    let mut sorted: Vec<&DailyBar> = daily.iter().collect();
    sorted.sort_by(|a, b| (&a.firm_id, a.trade_date).cmp(&(&b.firm_id, b.trade_date)));
    let mut out: Vec<WeeklyBar> = Vec::new();
    for d in sorted {
        let week = week_index(d.trade_date);
        match out.last_mut() {
            Some(bar) if bar.firm_id == d.firm_id && bar.week_index == week => {
                bar.high = bar.high.max(d.high);
                bar.low = bar.low.min(d.low);
                bar.close = d.close;
            }
            _ => out.push(WeeklyBar {
                firm_id: d.firm_id.clone(),
                week_index: week,
                open: d.open,
                high: d.high,
                low: d.low,
                close: d.close,
            }),
        }
    }
    out
}

/// Splits firm-sorted bars into per-firm series.
pub fn bars_by_firm(bars: &[WeeklyBar]) -> BTreeMap<String, Vec<WeeklyBar>> {
    let mut map: BTreeMap<String, Vec<WeeklyBar>> = BTreeMap::new();
    for b in bars {
        map.entry(b.firm_id.clone()).or_default().push(b.clone());
    }
    for series in map.values_mut() {
        series.sort_by_key(|b| b.week_index);
    }
    map
}

pub const MAX_HORIZON: u8 = 12;

fn check_horizon(horizon: u8) -> Result<()> {
    if (1..=MAX_HORIZON).contains(&horizon) {
        Ok(())
    } else {
        Err(Error::Argument(format!("return horizon {horizon} outside 1..=12")))
    }
}

/// Forward return over `horizon` calendar weeks for each bar of one firm's
/// series: (close[w + h] - close[w]) / close[w]. Undefined when week w + h has
/// no bar (the end of the series, or a week without trading).
pub fn weekly_returns(bars: &[WeeklyBar], horizon: u8) -> Result<Vec<f64>> {
    check_horizon(horizon)?;
    let by_week: BTreeMap<WeekIndex, f64> = bars.iter().map(|b| (b.week_index, b.close)).collect();
    Ok(bars
        .iter()
        .map(|b| {
            by_week
                .get(&(b.week_index + WeekIndex::from(horizon)))
                .map_or(UNDEFINED, |&later| (later - b.close) / b.close)
        })
        .collect())
}

/// 1 when the return reaches the cut-off, else 0.
pub fn label(rw: f64, cutoff: f64) -> u8 {
    u8::from(rw >= cutoff)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledSample {
    pub firm_id: String,
    pub week_index: WeekIndex,
    pub rw: f64,
    pub label: u8,
}

/// Labeled samples of one firm's series; weeks with an undefined return are
/// omitted.
pub fn labeled_samples(bars: &[WeeklyBar], horizon: u8, cutoff: f64) -> Result<Vec<LabeledSample>> {
    let rw = weekly_returns(bars, horizon)?;
    Ok(bars
        .iter()
        .zip(rw)
        .filter(|(_, r)| is_defined(*r))
        .map(|(b, r)| LabeledSample {
            firm_id: b.firm_id.clone(),
            week_index: b.week_index,
            rw: r,
            label: label(r, cutoff),
        })
        .collect())
}

/// Drops samples with |rw| <= tau and relabels the rest by sign.
pub fn tau_filter(samples: &[LabeledSample], tau: f64) -> Result<Vec<LabeledSample>> {
    if !(0.0..=0.1).contains(&tau) {
        return Err(Error::Argument(format!("tau {tau} outside [0, 0.1]")));
    }
    Ok(samples
        .iter()
        .filter(|s| s.rw > tau || s.rw < -tau)
        .map(|s| LabeledSample {
            label: u8::from(s.rw > tau),
            ..s.clone()
        })
        .collect())
}

/// Target export: `firm_id,week_start,rw_1..rw_12,label` where the label
/// belongs to `horizon`. Undefined returns are empty cells; rows whose label
/// return is undefined carry an empty label.
pub fn write_targets_csv<W: Write>(
    series: &BTreeMap<String, Vec<WeeklyBar>>,
    horizon: u8,
    cutoff: f64,
    out: W,
) -> Result<()> {
    check_horizon(horizon)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["firm_id".to_string(), "week_start".to_string()];
    header.extend((1..=MAX_HORIZON).map(|h| format!("rw_{h}")));
    header.push("label".into());
    w.write_record(&header)?;
    for (firm, bars) in series {
        let returns: Vec<Vec<f64>> = (1..=MAX_HORIZON)
            .map(|h| weekly_returns(bars, h))
            .collect::<Result<_>>()?;
        for (i, b) in bars.iter().enumerate() {
            let mut rec = vec![firm.clone(), week_start(b.week_index).to_string()];
            rec.extend(returns.iter().map(|r| {
                if is_defined(r[i]) {
                    r[i].to_string()
                } else {
                    String::new()
                }
            }));
            let rw = returns[usize::from(horizon) - 1][i];
            rec.push(if is_defined(rw) { label(rw, cutoff).to_string() } else { String::new() });
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<targets csv>", e))?;
    Ok(())
}
