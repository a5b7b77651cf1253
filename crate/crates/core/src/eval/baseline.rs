//! Naive proxy/true ratio threshold baseline.

use serde::{Deserialize, Serialize};

use crate::detectors::RATIO_EPSILON;
use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::stats::median;

pub const DEFAULT_RATIO_THRESHOLD: f64 = 2.0;

pub fn return_ratio(e: &Episode) -> f64 {
    let t = e.true_return();
    let t = if t.abs() < RATIO_EPSILON { RATIO_EPSILON.copysign(t) } else { t };
    e.proxy_return() / t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioBaseline {
    pub clean_median_ratio: f64,
    pub threshold: f64,
}

impl RatioBaseline {
    pub fn fit(clean: &[Episode], threshold: f64) -> Result<Self> {
        if clean.is_empty() {
            return Err(Error::invalid("ratio baseline needs clean episodes"));
        }
        let ratios: Vec<f64> = clean.iter().map(return_ratio).collect();
        Ok(RatioBaseline { clean_median_ratio: median(&ratios)?, threshold })
    }

    /// Ratio relative to the clean median; this is the baseline's score.
    pub fn score(&self, e: &Episode) -> f64 {
        return_ratio(e) / self.clean_median_ratio
    }

    pub fn flag(&self, e: &Episode) -> bool {
        naive_ratio_baseline(e, self.threshold, self.clean_median_ratio)
    }
}

/// Flags when the episode's proxy/true return ratio exceeds `threshold`
/// times the clean median ratio.
pub fn naive_ratio_baseline(e: &Episode, threshold: f64, clean_median_ratio: f64) -> bool {
    return_ratio(e) > threshold * clean_median_ratio
}
