use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::numeric::is_defined;

/// Rescales the defined entries to [0, 1]; undefined entries stay undefined.
pub fn minmax_normalize(series: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = series
        .iter()
        .filter(|v| is_defined(**v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::Degenerate(
            "series needs at least two distinct defined values".into(),
        ));
    }
    let range = hi - lo;
    Ok(series.iter().map(|&v| (v - lo) / range).collect())
}

/// How the per-shift significance criterion is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceRule {
    /// Two-sided p-value of the t-statistic with n - 2 degrees of freedom.
    #[default]
    PValue,
    /// The t-statistic itself compared against alpha, as the formula is
    /// printed (kept for comparison runs only).
    TStatistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub rho: f64,
    /// Two-sided p-value.
    pub p: f64,
    /// rho * sqrt(n - 2) / sqrt(1 - rho^2); infinite when |rho| = 1.
    pub t: f64,
    pub n_obs: usize,
}

impl Correlation {
    pub fn criterion(&self, rule: SignificanceRule) -> f64 {
        match rule {
            SignificanceRule::PValue => self.p,
            SignificanceRule::TStatistic => self.t,
        }
    }
}

/// Sample Pearson correlation over the pairs where both sides are defined.
///
/// Both sides are min-max rescaled before the two-pass moments, which keeps
/// the result bit-identical whether or not the caller normalized first.
/// |rho| = 1 yields p = 0.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::Argument(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| is_defined(**a) && is_defined(**b))
        .map(|(a, b)| (*a, *b))
        .unzip();
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 3 aligned pairs, got {n}"
        )));
    }
    let xs = minmax_normalize(&xs)?;
    let ys = minmax_normalize(&ys)?;
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in xs.iter().zip(&ys) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    // 1 - rho^2 without cancellation near |rho| = 1
    let one_minus = (1.0 - rho) * (1.0 + rho);
    let (p, t) = if one_minus <= 0.0 {
        (0.0, rho.signum() * f64::INFINITY)
    } else {
        let t = rho * df.sqrt() / one_minus.sqrt();
        (beta_reg(df / 2.0, 0.5, one_minus).clamp(0.0, 1.0), t)
    };
    Ok(Correlation { rho, p, t, n_obs: n })
}
