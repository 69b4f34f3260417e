//! Small numeric helpers: the undefined-value marker, correctly rounded
//! summation and quantiles.

/// Marker stored in dense real-valued tables for a value that is not defined
/// (a window reaching before the series start, or a zero denominator).
pub const UNDEFINED: f64 = f64::NAN;

#[inline]
pub fn is_defined(x: f64) -> bool {
    !x.is_nan()
}

#[inline]
pub fn to_option(x: f64) -> Option<f64> {
    if x.is_nan() {
        None
    } else {
        Some(x)
    }
}

#[inline]
pub fn from_option(x: Option<f64>) -> f64 {
    x.unwrap_or(UNDEFINED)
}

/// Exact running sum kept as a non-overlapping expansion of doubles
/// (Shewchuk). `value` rounds the exact sum once, so any two
/// accumulators over the same multiset of inputs agree bit for bit
/// regardless of insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Adds every partial of another expansion (exactly).
    pub fn absorb(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    pub fn partials(&self) -> &[f64] {
        &self.partials
    }

    /// The exact sum rounded to nearest, ties to even.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = ExactSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Linear-interpolation quantile (the common "type 7" definition) of an
/// already sorted slice. Returns `None` for an empty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Five-number summary: min, lower quartile, median, upper quartile, max.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    Some(FiveNumber {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25)?,
        median: quantile_sorted(&sorted, 0.5)?,
        q3: quantile_sorted(&sorted, 0.75)?,
        max: sorted[sorted.len() - 1],
    })
}
