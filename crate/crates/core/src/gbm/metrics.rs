use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Classification metrics with class 1 as the positive class. Precision,
/// recall, and F-measure are None when their denominators vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_measure: Option<f64>,
    pub confusion: Confusion,
}

impl EvalMetrics {
    pub const CSV_HEADER: [&'static str; 9] =
        ["n", "accuracy", "precision", "recall", "f_measure", "tp", "fp", "tn", "fn"];

    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        vec![
            self.n.to_string(),
            self.accuracy.to_string(),
            opt(self.precision),
            opt(self.recall),
            opt(self.f_measure),
            self.confusion.tp.to_string(),
            self.confusion.fp.to_string(),
            self.confusion.tn.to_string(),
            self.confusion.fn_.to_string(),
        ]
    }
}

pub fn evaluate(pred: &[u8], truth: &[u8]) -> Result<EvalMetrics> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Argument(format!(
            "need equal non-empty label vectors, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f_measure = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(EvalMetrics {
        n: pred.len(),
        accuracy: (c.tp + c.tn) as f64 / pred.len() as f64,
        precision,
        recall,
        f_measure,
        confusion: c,
    })
}

/// Share of the most frequent label; ties count class 1.
pub fn majority_share(labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let ones = labels.iter().filter(|&&v| v == 1).count();
    ones.max(labels.len() - ones) as f64 / labels.len() as f64
}

pub fn positive_share(labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|&&v| v == 1).count() as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_confusion() {
        // TP=3, FP=1, FN=2, TN=4
        let pred = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let truth = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0];
        let m = evaluate(&pred, &truth).unwrap();
        assert_eq!(m.confusion, Confusion { tp: 3, fp: 1, tn: 4, fn_: 2 });
        assert_eq!(m.accuracy, 0.7);
        assert_eq!(m.precision, Some(0.75));
        assert_eq!(m.recall, Some(0.6));
        assert!((m.f_measure.unwrap() - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
    }

    #[test]
    fn extremes() {
        let truth = [1, 0, 1, 1];
        let all = evaluate(&truth, &truth).unwrap();
        assert_eq!((all.accuracy, all.precision, all.recall, all.f_measure), (1.0, Some(1.0), Some(1.0), Some(1.0)));
        let flipped: Vec<u8> = truth.iter().map(|v| 1 - v).collect();
        assert_eq!(evaluate(&flipped, &truth).unwrap().accuracy, 0.0);
        let none = evaluate(&[0, 0, 0, 0], &truth).unwrap();
        assert_eq!(none.precision, None);
        assert_eq!(none.f_measure, None);
        assert!(evaluate(&[], &[]).is_err());
        assert_eq!(majority_share(&[1, 0]), 0.5);
        assert_eq!(majority_share(&[0, 0, 1]), 2.0 / 3.0);
    }
}
