//! Detector outputs and ensemble risk assessments.

use serde::{Deserialize, Serialize};

use crate::episode::HackingCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalWarning {
    /// Some windows had a (near) zero true-reward sum and were clamped.
    DegenerateRatio,
    /// Fitted on references that were all identical.
    DegenerateFit,
    /// Too short for the detector's full context; a reduced order was used.
    ShortEpisode,
    /// Windows with zero variance contributed a correlation of 0.
    ZeroVarianceWindows,
    /// The detector cannot evaluate this episode and abstained.
    NotApplicable,
    /// Skipped by selective monitoring; the cached baseline score was used.
    Bypassed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSignal {
    pub category: HackingCategory,
    pub raw_score: f64,
    pub calibrated_confidence: f64,
    pub flagged: bool,
    pub threshold_used: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub abstained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<SignalWarning>,
}

impl DetectorSignal {
    /// Every detector flags when its raw score exceeds the threshold.
    pub fn new(category: HackingCategory, raw_score: f64, threshold: f64) -> Self {
        DetectorSignal {
            category,
            raw_score,
            calibrated_confidence: 0.0,
            flagged: raw_score > threshold,
            threshold_used: threshold,
            abstained: false,
            warning: None,
        }
    }

    pub fn abstain(category: HackingCategory) -> Self {
        DetectorSignal {
            category,
            raw_score: 0.0,
            calibrated_confidence: 0.0,
            flagged: false,
            threshold_used: 0.0,
            abstained: true,
            warning: Some(SignalWarning::NotApplicable),
        }
    }

    pub fn with_warning(mut self, w: Option<SignalWarning>) -> Self {
        if w.is_some() {
            self.warning = w;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub episode_id: String,
    pub episode_index: u64,
    pub risk: f64,
    pub flagged: bool,
    /// One signal per category, in [`HackingCategory::ALL`] order.
    pub signals: Vec<DetectorSignal>,
    pub consensus_count: u8,
}
