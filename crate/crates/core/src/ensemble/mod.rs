//! Calibrated weighted voting over the six detector signals, the
//! three-of-six consensus rule and temporal emergence classification.

mod emergence;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::episode::HackingCategory;
use crate::error::{Error, Result};
use crate::signal::{DetectorSignal, RiskAssessment};
use crate::stats::{platt_fit, PlattParams};

pub use emergence::{classify_emergence, EmergenceConfig, EmergenceReport};

pub const DEFAULT_RISK_THRESHOLD: f64 = 0.5;
pub const CONSENSUS_MIN: usize = 3;
const MIN_VALIDATION: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    /// Non-negative, summing to one, in [`HackingCategory::ALL`] order.
    pub weights: Vec<f64>,
    pub platt: Vec<PlattParams>,
    pub risk_threshold: f64,
    /// Validation F1 of each detector at its own threshold; the weights
    /// are proportional to it.
    pub f1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn f1_score(pred: &[bool], labels: &[bool]) -> f64 {
    let tp = pred.iter().zip(labels).filter(|(p, l)| **p && **l).count() as f64;
    let fp = pred.iter().zip(labels).filter(|(p, l)| **p && !**l).count() as f64;
    let fn_ = pred.iter().zip(labels).filter(|(p, l)| !**p && **l).count() as f64;
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

fn check_signals(signals: &[DetectorSignal]) -> Result<()> {
    if signals.len() != 6 || signals.iter().zip(HackingCategory::ALL).any(|(s, c)| s.category != c) {
        return Err(Error::invalid("expected one signal per category in canonical order"));
    }
    Ok(())
}

/// Fits a Platt map per detector on its raw scores and weights detectors
/// by validation F1 at their native thresholds. Abstaining signals are
/// left out of both fits.
pub fn ensemble_calibrate(signals: &[Vec<DetectorSignal>], labels: &[bool]) -> Result<EnsembleModel> {
    if signals.len() != labels.len() {
        return Err(Error::invalid("signals and labels differ in length"));
    }
    if signals.len() < MIN_VALIDATION {
        return Err(Error::Calibration(format!(
            "needs at least {MIN_VALIDATION} validation episodes, got {}",
            signals.len()
        )));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::Calibration("validation labels contain a single class".into()));
    }
    for s in signals {
        check_signals(s)?;
    }
    let mut platt = Vec::with_capacity(6);
    let mut f1 = Vec::with_capacity(6);
    let mut warnings = Vec::new();
    for cat in HackingCategory::ALL {
        let d = cat.index();
        let mut scores = Vec::new();
        let mut flags = Vec::new();
        let mut ys = Vec::new();
        for (s, &y) in signals.iter().zip(labels) {
            if !s[d].abstained {
                scores.push(s[d].raw_score);
                flags.push(s[d].flagged);
                ys.push(y);
            }
        }
        let n_pos = ys.iter().filter(|&&y| y).count() as f64;
        let prior = ((n_pos + 1.0) / (ys.len() as f64 - n_pos + 1.0)).ln();
        let params = match platt_fit(&scores, &ys) {
            // A decreasing fit would break monotonicity of the risk in the
            // raw scores; such a detector carries no usable signal.
            Ok(p) if p.a >= 0.0 => p,
            Ok(_) => {
                warnings.push(format!("{cat}: scores anti-correlated with labels, calibrated to the base rate"));
                PlattParams { a: 0.0, b: prior }
            }
            Err(e) => {
                warnings.push(format!("{cat}: {e}"));
                PlattParams { a: 0.0, b: if ys.is_empty() { 0.0 } else { prior } }
            }
        };
        platt.push(params);
        if ys.is_empty() {
            warnings.push(format!("{cat}: abstained on every validation episode, F1 undefined"));
            f1.push(0.0);
        } else {
            f1.push(f1_score(&flags, &ys));
        }
    }
    let total: f64 = f1.iter().sum();
    let weights = if total > 0.0 {
        f1.iter().map(|f| f / total).collect()
    } else {
        warnings.push("no detector has positive F1; using equal weights".into());
        vec![1.0 / 6.0; 6]
    };
    for w in &warnings {
        warn!("{w}");
    }
    Ok(EnsembleModel { weights, platt, risk_threshold: DEFAULT_RISK_THRESHOLD, f1, warnings })
}

impl EnsembleModel {
    pub fn with_risk_threshold(mut self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::invalid(format!("risk threshold {t} outside (0, 1)")));
        }
        self.risk_threshold = t;
        Ok(self)
    }

    /// Same calibration with the given detectors' weights removed and the
    /// rest renormalised.
    pub fn without(&self, removed: &[HackingCategory]) -> Self {
        let mut m = self.clone();
        for c in removed {
            m.weights[c.index()] = 0.0;
        }
        let total: f64 = m.weights.iter().sum();
        if total > 0.0 {
            m.weights.iter_mut().for_each(|w| *w /= total);
        }
        m
    }

    /// Calibrated confidence for one signal.
    pub fn confidence(&self, s: &DetectorSignal) -> f64 {
        if s.abstained {
            0.0
        } else {
            self.platt[s.category.index()].apply(s.raw_score)
        }
    }

    /// Weighted confidence, renormalised over detectors that did not abstain.
    pub fn risk(&self, signals: &[DetectorSignal]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for s in signals {
            if s.abstained {
                continue;
            }
            let w = self.weights[s.category.index()];
            num += w * self.confidence(s);
            den += w;
        }
        if den > 0.0 {
            (num / den).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Combines six signals into an assessment; the signals' confidences are
/// replaced with the calibrated ones.
pub fn assess(
    model: &EnsembleModel,
    episode_id: &str,
    episode_index: u64,
    mut signals: Vec<DetectorSignal>,
) -> Result<RiskAssessment> {
    check_signals(&signals)?;
    for s in &mut signals {
        s.calibrated_confidence = model.confidence(s);
    }
    let risk = model.risk(&signals);
    Ok(RiskAssessment {
        episode_id: episode_id.to_string(),
        episode_index,
        risk,
        flagged: risk > model.risk_threshold,
        consensus_count: signals.iter().filter(|s| s.flagged).count() as u8,
        signals,
    })
}

/// True iff at least three detectors flagged.
pub fn consensus_label(signals: &[DetectorSignal]) -> bool {
    signals.iter().filter(|s| s.flagged).count() >= CONSENSUS_MIN
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(cat: HackingCategory, raw: f64, flagged: bool) -> DetectorSignal {
        let mut s = DetectorSignal::new(cat, raw, 0.5);
        s.flagged = flagged;
        s
    }

    #[test]
    fn identical_detectors_get_equal_weights() {
        let labels: Vec<bool> = (0..40).map(|i| i % 4 == 0).collect();
        let signals: Vec<Vec<DetectorSignal>> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let raw = if l { 0.9 } else { 0.1 } + 0.001 * i as f64;
                HackingCategory::ALL.iter().map(|&c| sig(c, raw, raw > 0.5)).collect()
            })
            .collect();
        let m = ensemble_calibrate(&signals, &labels).unwrap();
        for w in &m.weights {
            assert!((w - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_rejected() {
        let signals: Vec<Vec<DetectorSignal>> =
            (0..25).map(|_| HackingCategory::ALL.iter().map(|&c| sig(c, 0.0, false)).collect()).collect();
        assert!(matches!(ensemble_calibrate(&signals, &[false; 25]), Err(Error::Calibration(_))));
    }

    #[test]
    fn degenerate_weighting() {
        let m = EnsembleModel {
            weights: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            platt: vec![PlattParams { a: 1.0, b: 0.0 }; 6],
            risk_threshold: 0.5,
            f1: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            warnings: vec![],
        };
        // platt(a=1,b=0) maps ln(4) to 0.8
        let signals: Vec<DetectorSignal> =
            HackingCategory::ALL.iter().map(|&c| sig(c, if c.index() == 0 { 4f64.ln() } else { -9.0 }, false)).collect();
        let a = assess(&m, "x", 0, signals).unwrap();
        assert!((a.risk - 0.8).abs() < 1e-12);
        assert!(a.flagged);
    }

    #[test]
    fn consensus_counts() {
        let mk = |n: usize| -> Vec<DetectorSignal> {
            HackingCategory::ALL.iter().map(|&c| sig(c, 0.0, c.index() < n)).collect()
        };
        assert!(!consensus_label(&mk(2)));
        assert!(consensus_label(&mk(3)));
        assert!(consensus_label(&mk(6)));
    }
}
