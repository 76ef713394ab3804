//! Classification metrics, ROC/AUC and timing fits.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Tally of `{0, 1}` predictions against `{0, 1}` truth.
pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::Mismatch(format!("{} predictions, {} labels", pred.len(), truth.len())));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => return Err(Error::InvalidInput(format!("labels must be 0 or 1, got ({p}, {t})"))),
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Undefined {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Metrics whose denominator was zero; they are reported as 0.0.
    pub undefined: Undefined,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics(c: &ConfusionCounts) -> Result<MetricsReport> {
    if c.total() == 0 {
        return Err(Error::InvalidInput("empty confusion matrix".into()));
    }
    let accuracy = (c.tp + c.tn) as f64 / c.total() as f64;
    let (precision, p_undef) = ratio(c.tp, c.tp + c.fp);
    let (recall, r_undef) = ratio(c.tp, c.tp + c.fn_);
    let (f1, f_undef) =
        if precision + recall > 0.0 { (2.0 * precision * recall / (precision + recall), false) } else { (0.0, true) };
    Ok(MetricsReport {
        accuracy,
        precision,
        recall,
        f1,
        undefined: Undefined { precision: p_undef, recall: r_undef, f1: f_undef },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` by descending threshold, from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Empirical ROC over every distinct score; tied scores form one step.
pub fn roc(scores: &[f64], truth: &[u8]) -> Result<RocCurve> {
    if scores.len() != truth.len() {
        return Err(Error::Mismatch(format!("{} scores, {} labels", scores.len(), truth.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let pos = truth.iter().filter(|&&t| t == 1).count();
    let neg = truth.iter().filter(|&&t| t == 0).count();
    if pos + neg != truth.len() {
        return Err(Error::InvalidInput("labels must be 0 or 1".into()));
    }
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = alloc::vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if truth[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5).sum();
    Ok(RocCurve { points, auc })
}

/// Least-squares line through the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginFit {
    pub slope: f64,
    /// `1 - SSE / SST` with the total sum of squares taken about the mean.
    pub r_squared: f64,
}

pub fn fit_through_origin(x: &[f64], y: &[f64]) -> Result<OriginFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("need at least two paired points".into()));
    }
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("all x are zero".into()));
    }
    let slope = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a) * (b - slope * a)).sum();
    let sst: f64 = y.iter().map(|b| (b - mean) * (b - mean)).sum();
    let r_squared = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(OriginFit { slope, r_squared })
}

/// Population stddev over mean.
pub fn coefficient_of_variation(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64;
    if mean == 0.0 {
        0.0
    } else {
        math::sqrt(var) / math::abs(mean)
    }
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let c = confusion(&[1, 0], &[1, 0]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, tn: 1, fp: 0, fn_: 0 });
        assert_eq!(confusion(&[1, 1], &[0, 0]).unwrap().fp, 2);
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(confusion(&[2], &[1]).is_err());
    }

    #[test]
    fn metrics_examples() {
        let m = metrics(&ConfusionCounts { tp: 50, tn: 40, fp: 5, fn_: 5 }).unwrap();
        assert!((m.accuracy - 0.9).abs() < 1e-12);
        assert!((m.precision - 50.0 / 55.0).abs() < 1e-12);
        assert!((m.recall - 50.0 / 55.0).abs() < 1e-12);
        assert!((m.f1 - 50.0 / 55.0).abs() < 1e-12);
        let m = metrics(&ConfusionCounts { tp: 0, tn: 7, fp: 0, fn_: 3 }).unwrap();
        assert!(m.undefined.precision && m.precision == 0.0);
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert!(metrics(&ConfusionCounts::default()).is_err());
    }

    #[test]
    fn roc_examples() {
        let r = roc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));
        let tied = roc(&[0.5, 0.5], &[1, 0]).unwrap();
        assert_eq!(tied.auc, 0.5);
        assert_eq!(roc(&[0.5], &[1]).unwrap_err(), Error::SingleClass);
    }

    #[test]
    fn origin_fit() {
        let f = fit_through_origin(&[10.0, 25.0, 50.0, 100.0], &[20.0, 50.0, 100.0, 200.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert!(coefficient_of_variation(&[2.0, 2.0]) == 0.0);
    }
}
