//! Classification, ranking, latency and calibration metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
use crate::stats::median;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn count(pred: &[bool], labels: &[bool]) -> Result<Self> {
        if pred.len() != labels.len() {
            return Err(Error::invalid(format!("{} predictions for {} labels", pred.len(), labels.len())));
        }
        let mut c = Confusion::default();
        for (&p, &l) in pred.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    /// Precision is 0 when nothing was predicted positive, recall is 0
    /// when there are no positives, and F1 is 0 when both are 0.
    pub fn prf(&self) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Prf { precision, recall, f1 }
    }
}

pub fn prf(pred: &[bool], labels: &[bool]) -> Result<Prf> {
    if pred.is_empty() {
        return Err(Error::invalid("no predictions"));
    }
    Ok(Confusion::count(pred, labels)?.prf())
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("ROC needs both classes".into()));
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC with tied scores sharing their mean rank.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are predicted positive.
    pub threshold: f64,
}

/// One point per distinct score, from `(0, 0)` at `+inf` to `(1, 1)`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push(RocPoint { fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64, threshold: s });
    }
    Ok(out)
}

/// Trapezoidal area under a curve from [`roc_curve`].
pub fn trapezoid_auc(curve: &[RocPoint]) -> f64 {
    curve.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub mean: f64,
    pub median: f64,
    /// Streams with a flag.
    pub detected: usize,
    /// Streams never flagged after onset; excluded from the mean.
    pub missed: usize,
    /// Streams flagged before the labeled onset; counted as latency 0.
    pub early: usize,
}

/// Episodes from onset to first flag per stream. `first_flags[k]` is
/// `None` when stream `k` was never flagged.
pub fn detection_latency(onsets: &[u64], first_flags: &[Option<u64>]) -> Result<Latency> {
    if onsets.len() != first_flags.len() {
        return Err(Error::invalid("onsets and first flags differ in length"));
    }
    let mut lat = Vec::new();
    let mut early = 0;
    for (&onset, flag) in onsets.iter().zip(first_flags) {
        if let Some(f) = *flag {
            if f < onset {
                early += 1;
            }
            lat.push(f.saturating_sub(onset) as f64);
        }
    }
    if early > 0 {
        warn!("{early} stream(s) flagged before the labeled onset; latency clamped to 0");
    }
    let missed = onsets.len() - lat.len();
    if lat.is_empty() {
        return Err(Error::Undefined("no stream was flagged".into()));
    }
    Ok(Latency {
        mean: lat.iter().sum::<f64>() / lat.len() as f64,
        median: median(&lat)?,
        detected: lat.len(),
        missed,
        early,
    })
}

/// Detection time as a percentage of generation plus detection time.
pub fn overhead(gen_seconds: f64, detect_seconds: f64) -> Result<f64> {
    if gen_seconds < 0.0 || detect_seconds < 0.0 || gen_seconds + detect_seconds <= 0.0 {
        return Err(Error::invalid("overhead needs non-negative times with a positive total"));
    }
    Ok(100.0 * detect_seconds / (gen_seconds + detect_seconds))
}

pub fn brier(probabilities: &[f64], labels: &[bool]) -> Result<f64> {
    if probabilities.len() != labels.len() || probabilities.is_empty() {
        return Err(Error::invalid("brier needs equal, non-zero lengths"));
    }
    Ok(probabilities
        .iter()
        .zip(labels)
        .map(|(p, &l)| (p - f64::from(u8::from(l))).powi(2))
        .sum::<f64>()
        / labels.len() as f64)
}

/// Agreement beyond chance between two labelings over any label type.
/// Two identical constant labelings give 1.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid("kappa needs equal, non-zero lengths"));
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut ma: BTreeMap<&T, f64> = BTreeMap::new();
    let mut mb: BTreeMap<&T, f64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1.0;
        *mb.entry(y).or_default() += 1.0;
    }
    let expected: f64 = ma.iter().map(|(k, ca)| ca * mb.get(k).copied().unwrap_or(0.0)).sum::<f64>() / (n * n);
    if expected >= 1.0 {
        return Ok(if observed >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((observed - expected) / (1.0 - expected))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc_roc: f64,
    #[serde(default)]
    pub detection_latency_episodes: Option<f64>,
    #[serde(default)]
    pub overhead_pct: Option<f64>,
    #[serde(default)]
    pub brier: Option<f64>,
}

impl DetectionMetrics {
    /// Classification and ranking metrics; AUC is 0.5 when only one class
    /// is present.
    pub fn from_scores(pred: &[bool], scores: &[f64], labels: &[bool]) -> Result<Self> {
        let p = prf(pred, labels)?;
        let auc_roc = match roc_auc(scores, labels) {
            Ok(a) => a,
            Err(Error::Undefined(_)) => 0.5,
            Err(e) => return Err(e),
        };
        Ok(DetectionMetrics {
            precision: p.precision,
            recall: p.recall,
            f1: p.f1,
            auc_roc,
            detection_latency_episodes: None,
            overhead_pct: None,
            brier: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prf_worked_counts() {
        // TP=3, FP=1, FN=2
        let pred = [true, true, true, true, false, false, false];
        let labels = [true, true, true, false, true, true, false];
        let p = prf(&pred, &labels).unwrap();
        assert_eq!(p.precision, 0.75);
        assert_eq!(p.recall, 0.6);
        assert!((p.f1 - 2.0 * 0.45 / 1.35).abs() < 1e-12);
        assert_eq!(prf(&[false, false], &[true, false]).unwrap(), Prf { precision: 0.0, recall: 0.0, f1: 0.0 });
        assert_eq!(prf(&labels, &labels).unwrap(), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert!(prf(&[true], &[true, false]).is_err());
    }

    #[test]
    fn auc_conventions() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 4], &[false, true, false, true]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::Undefined(_))));
    }

    #[test]
    fn separable_curve_hits_corner() {
        let c = roc_curve(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert!(c.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert!(c.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        assert_eq!(c.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn latency_examples() {
        let l = detection_latency(&[450, 100, 10], &[Some(465), None, Some(5)]).unwrap();
        assert_eq!((l.detected, l.missed, l.early), (2, 1, 1));
        assert_eq!(l.mean, 7.5);
        assert_eq!(detection_latency(&[7], &[Some(7)]).unwrap().mean, 0.0);
    }

    #[test]
    fn overhead_arithmetic() {
        assert_eq!(overhead(3.0, 0.0).unwrap(), 0.0);
        assert!((overhead(19.0, 1.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_worked_table() {
        // 2x2 table [[20, 5], [10, 15]]: p_o = 0.7, p_e = 0.5
        let mut a = vec![];
        let mut b = vec![];
        for (x, y, n) in [(1, 1, 20), (1, 0, 5), (0, 1, 10), (0, 0, 15)] {
            for _ in 0..n {
                a.push(x);
                b.push(y);
            }
        }
        assert!((cohens_kappa(&a, &b).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
    }
}
