//! The ten weekly technical indicators of the price-only baseline model.

use std::io::Write;

use serde::Serialize;

use super::bars::WeeklyBar;
use crate::calendar::week_start;
use crate::error::{Error, Result};
use crate::numeric::UNDEFINED;

/// Window length used by every indicator except MACD.
pub const DEFAULT_PERIOD: usize = 10;
/// Smoothing period of the MACD signal recursion.
pub const MACD_PERIOD: usize = 9;
const EMA_FAST: usize = 12;
const EMA_SLOW: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndicatorVector {
    pub sma10: f64,
    pub wma10: f64,
    pub momentum: f64,
    pub stoch_k: f64,
    pub stoch_d: f64,
    pub rsi: f64,
    pub macd: f64,
    pub williams_r: f64,
    pub ad_osc: f64,
    pub cci: f64,
}

impl IndicatorVector {
    pub const NAMES: [&'static str; 10] = [
        "sma10",
        "wma10",
        "momentum",
        "stoch_k",
        "stoch_d",
        "rsi",
        "macd",
        "williams_r",
        "ad_osc",
        "cci",
    ];

    pub fn undefined() -> Self {
        Self::from_array([UNDEFINED; 10])
    }

    pub fn to_array(&self) -> [f64; 10] {
        [
            self.sma10,
            self.wma10,
            self.momentum,
            self.stoch_k,
            self.stoch_d,
            self.rsi,
            self.macd,
            self.williams_r,
            self.ad_osc,
            self.cci,
        ]
    }

    pub fn from_array(v: [f64; 10]) -> Self {
        IndicatorVector {
            sma10: v[0],
            wma10: v[1],
            momentum: v[2],
            stoch_k: v[3],
            stoch_d: v[4],
            rsi: v[5],
            macd: v[6],
            williams_r: v[7],
            ad_osc: v[8],
            cci: v[9],
        }
    }

    pub fn is_defined(&self) -> bool {
        self.to_array().iter().all(|v| !v.is_nan())
    }
}

/// Bars of history required before position `t` for a defined vector.
pub fn warm_up(n: usize) -> usize {
    EMA_SLOW + n
}

fn ema_series(closes: &[f64], k: usize) -> Vec<f64> {
    let alpha = 2.0 / (k as f64 + 1.0);
    let mut out = Vec::with_capacity(closes.len());
    let mut ema = closes.first().copied().unwrap_or(UNDEFINED);
    for &c in closes {
        ema += alpha * (c - ema);
        out.push(ema);
    }
    out
}

fn stochastic_k(bars: &[WeeklyBar], t: usize, n: usize) -> f64 {
    let window = &bars[t + 1 - n..=t];
    let ll = window.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
    let hh = window.iter().map(|b| b.high).fold(f64::NEG_INFINITY, f64::max);
    if hh == ll {
        50.0
    } else {
        (bars[t].close - ll) / (hh - ll) * 100.0
    }
}

/// Indicator vectors for every position of one firm's weekly series
/// (positional, oldest first). Positions with fewer than `26 + n` earlier
/// bars are undefined.
///
/// EMAs start from the first close; the MACD recursion starts at 0 on the
/// first bar, where the EMA difference is first defined.
pub fn indicator_series(bars: &[WeeklyBar], n: usize) -> Result<Vec<IndicatorVector>> {
    if n < 2 {
        return Err(Error::Argument(format!("indicator period {n} must be at least 2")));
    }
    let closes: Vec<f64> = bars.iter().map(|b| b.close).collect();
    let fast = ema_series(&closes, EMA_FAST);
    let slow = ema_series(&closes, EMA_SLOW);
    let alpha = 2.0 / (MACD_PERIOD as f64 + 1.0);
    let mut macd = Vec::with_capacity(bars.len());
    let mut prev = 0.0;
    for (i, (f, s)) in fast.iter().zip(&slow).enumerate() {
        if i > 0 {
            prev += alpha * ((f - s) - prev);
        }
        macd.push(prev);
    }
    let typical: Vec<f64> = bars.iter().map(|b| (b.high + b.low + b.close) / 3.0).collect();
    let weight_total = (n * (n + 1) / 2) as f64;
    let nf = n as f64;

    let mut out = Vec::with_capacity(bars.len());
    for t in 0..bars.len() {
        if t < warm_up(n) {
            out.push(IndicatorVector::undefined());
            continue;
        }
        let window = &closes[t + 1 - n..=t];
        let sma = window.iter().sum::<f64>() / nf;
        let wma = window
            .iter()
            .enumerate()
            .map(|(k, c)| (k + 1) as f64 * c)
            .sum::<f64>()
            / weight_total;
        let momentum = closes[t] - closes[t + 1 - n];
        let k = stochastic_k(bars, t, n);
        let d = (0..n).map(|i| stochastic_k(bars, t - i, n)).sum::<f64>() / nf;

        let (mut up, mut dw) = (0.0, 0.0);
        for i in 0..n {
            let change = closes[t - i] - closes[t - i - 1];
            if change > 0.0 {
                up += change;
            } else {
                dw -= change;
            }
        }
        let rsi = if dw == 0.0 {
            100.0
        } else if up == 0.0 {
            0.0
        } else {
            100.0 - 100.0 / (1.0 + (up / nf) / (dw / nf))
        };

        let bw = &bars[t + 1 - n..=t];
        let hn = bw.iter().map(|b| b.high).fold(f64::NEG_INFINITY, f64::max);
        let ln = bw.iter().map(|b| b.low).fold(f64::INFINITY, f64::min);
        let williams = if hn == ln { 50.0 } else { (hn - closes[t]) / (hn - ln) * 100.0 };

        let b = &bars[t];
        let ad = if b.high == b.low {
            UNDEFINED
        } else {
            (b.high - closes[t - 1]) / (b.high - b.low)
        };

        let tw = &typical[t + 1 - n..=t];
        let sm = tw.iter().sum::<f64>() / nf;
        let dev = tw.iter().map(|m| (m - sm).abs()).sum::<f64>() / nf;
        let cci = if dev == 0.0 { 0.0 } else { (typical[t] - sm) / (0.015 * dev) };

        out.push(IndicatorVector {
            sma10: sma,
            wma10: wma,
            momentum,
            stoch_k: k,
            stoch_d: d,
            rsi,
            macd: macd[t],
            williams_r: williams,
            ad_osc: ad,
            cci,
        });
    }
    Ok(out)
}

/// Indicator vector at position `t` of the series.
pub fn technical_indicators(bars: &[WeeklyBar], t: usize, n: usize) -> Result<IndicatorVector> {
    if t >= bars.len() {
        return Err(Error::Argument(format!(
            "position {t} beyond series of {} bars",
            bars.len()
        )));
    }
    Ok(indicator_series(&bars[..=t], n)?[t])
}

/// CSV with `firm_id,week_start` and the ten named indicator columns.
pub fn write_indicators_csv<W: Write>(rows: &[(&WeeklyBar, IndicatorVector)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["firm_id", "week_start"];
    header.extend(IndicatorVector::NAMES);
    w.write_record(&header)?;
    for (bar, v) in rows {
        let mut rec = vec![bar.firm_id.clone(), week_start(bar.week_index).to_string()];
        rec.extend(
            v.to_array()
                .iter()
                .map(|x| if x.is_nan() { String::new() } else { x.to_string() }),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<indicator csv>", e))?;
    Ok(())
}
