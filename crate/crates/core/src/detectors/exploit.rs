//! Exploitation patterns: episode proxy returns outside robust bounds of
//! the clean return distribution.

use serde::{Deserialize, Serialize};

use super::DetectorConfig;
use crate::episode::{Episode, HackingCategory};
use crate::error::{Error, Result};
use crate::signal::DetectorSignal;
use crate::stats::{robust_bounds, RobustBounds};

const MIN_REFERENCES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploitModel {
    pub bounds: RobustBounds,
    pub iqr_mult: f64,
    pub mad_mult: f64,
}

pub fn exploit_fit(reference: &[Episode], cfg: &DetectorConfig) -> Result<ExploitModel> {
    if reference.len() < MIN_REFERENCES {
        return Err(Error::Fit {
            detector: HackingCategory::ExploitationPattern,
            reason: format!("needs at least {MIN_REFERENCES} reference episodes, got {}", reference.len()),
        });
    }
    let returns: Vec<f64> = reference.iter().map(Episode::proxy_return).collect();
    Ok(ExploitModel { bounds: robust_bounds(&returns)?, iqr_mult: cfg.iqr_mult, mad_mult: cfg.mad_mult })
}

impl ExploitModel {
    /// Largest normalised exceedance of either rule; positive means the
    /// return lies outside that rule's bounds. With both spreads zero the
    /// raw score is the absolute distance from the constant reference.
    pub fn raw(&self, ret: f64) -> f64 {
        let b = &self.bounds;
        let mut best = f64::NEG_INFINITY;
        if b.iqr > 0.0 {
            let above = ret - (b.q3 + self.iqr_mult * b.iqr);
            let below = (b.q1 - self.iqr_mult * b.iqr) - ret;
            best = best.max(above.max(below) / b.iqr);
        }
        if b.mad > 0.0 {
            best = best.max(((ret - b.median).abs() - self.mad_mult * b.mad) / b.mad);
        }
        if best == f64::NEG_INFINITY {
            (ret - b.median).abs()
        } else {
            best
        }
    }
}

/// Flags iff the raw exceedance is above `threshold` (0 by default).
pub fn exploit_score(model: &ExploitModel, e: &Episode, threshold: f64) -> DetectorSignal {
    let cat = HackingCategory::ExploitationPattern;
    if e.is_empty() {
        return DetectorSignal::abstain(cat);
    }
    DetectorSignal::new(cat, model.raw(e.proxy_return()), threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(values: &[f64]) -> ExploitModel {
        ExploitModel { bounds: robust_bounds(values).unwrap(), iqr_mult: 3.0, mad_mult: 3.0 }
    }

    #[test]
    fn median_return_is_inside() {
        let m = model(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(m.raw(3.0) < 0.0);
    }

    #[test]
    fn far_return_is_outside() {
        let m = model(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        // q3 + 3 iqr = 10; mad rule: |x - 3| > 3
        assert!(m.raw(10.5) > 0.0);
        assert!(m.raw(-3.5) > 0.0);
        // inside the iqr fence but outside the mad fence
        assert!(m.raw(6.5) > 0.0);
    }

    #[test]
    fn constant_references() {
        let m = model(&[50.0; 12]);
        assert_eq!(m.raw(50.0), 0.0);
        assert!(m.raw(50.001) > 0.0);
    }
}
