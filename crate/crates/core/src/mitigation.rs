//! Mitigation techniques as transformations of the generator's dynamics.
//!
//! The techniques are specified only by their measured outcomes, so each
//! one plants a fixed reduction of injection success and a fixed cost in
//! true performance into the generator. The evaluation pipeline then has
//! to recover those magnitudes from the labeled streams.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envgen::StreamConfig;
use crate::episode::{Episode, HackingCategory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    RewardRebalancing,
    BehavioralConstraints,
    MultiObjectiveRewards,
    AdversarialTraining,
    Combined,
}

impl Technique {
    pub const ALL: [Technique; 5] = [
        Technique::RewardRebalancing,
        Technique::BehavioralConstraints,
        Technique::MultiObjectiveRewards,
        Technique::AdversarialTraining,
        Technique::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Technique::RewardRebalancing => "reward_rebalancing",
            Technique::BehavioralConstraints => "behavioral_constraints",
            Technique::MultiObjectiveRewards => "multi_objective_rewards",
            Technique::AdversarialTraining => "adversarial_training",
            Technique::Combined => "combined",
        }
    }

    /// Planted reduction of injection success at intensity 1.
    pub fn design_reduction(self) -> f64 {
        match self {
            Technique::RewardRebalancing => 0.324,
            Technique::BehavioralConstraints => 0.281,
            Technique::MultiObjectiveRewards => 0.413,
            Technique::AdversarialTraining => 0.478,
            Technique::Combined => 0.546,
        }
    }

    /// Planted loss of true performance at intensity 1.
    pub fn design_cost(self) -> f64 {
        match self {
            Technique::RewardRebalancing => 0.032,
            Technique::BehavioralConstraints => 0.057,
            Technique::MultiObjectiveRewards => 0.068,
            Technique::AdversarialTraining => 0.084,
            Technique::Combined => 0.091,
        }
    }

    fn targets(self, cat: HackingCategory) -> bool {
        use HackingCategory::*;
        match self {
            Technique::RewardRebalancing => matches!(cat, SpecificationGaming | ProxyOptimization),
            // action loops and out-of-distribution action sequences
            Technique::BehavioralConstraints => matches!(cat, SpecificationGaming | ObjectiveMisalignment),
            _ => true,
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Technique::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown mitigation technique `{s}`")))
    }
}

fn default_alpha() -> f64 {
    0.4
}

fn default_scalarization() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationSpec {
    pub technique: Technique,
    pub intensity: f64,
    /// Weight moved from the proxy onto the true reward at intensity 1
    /// (reward rebalancing and the combined approach).
    #[serde(default = "default_alpha")]
    pub rebalance_alpha: f64,
    /// Weight of the true-objective term in the multi-objective proxy at
    /// intensity 1.
    #[serde(default = "default_scalarization")]
    pub scalarization_weight: f64,
}

impl MitigationSpec {
    pub fn new(technique: Technique, intensity: f64) -> Result<Self> {
        let m = MitigationSpec {
            technique,
            intensity,
            rebalance_alpha: default_alpha(),
            scalarization_weight: default_scalarization(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::Config(format!("mitigation intensity {} outside [0, 1]", self.intensity)));
        }
        for (name, v) in [("rebalance_alpha", self.rebalance_alpha), ("scalarization_weight", self.scalarization_weight)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("mitigation {name} {v} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Probability that an injection of `cat` still succeeds.
    pub fn success_factor(&self, cat: HackingCategory) -> f64 {
        if self.technique.targets(cat) {
            1.0 - self.technique.design_reduction() * self.intensity
        } else {
            1.0
        }
    }

    /// Multiplier applied to every true reward.
    pub fn performance_multiplier(&self) -> f64 {
        1.0 - self.technique.design_cost() * self.intensity
    }

    /// Weight of the true reward inside the declared proxy.
    pub fn true_mix(&self) -> f64 {
        match self.technique {
            Technique::RewardRebalancing | Technique::Combined => self.rebalance_alpha * self.intensity,
            Technique::MultiObjectiveRewards => self.scalarization_weight * self.intensity,
            _ => 0.0,
        }
    }
}

/// The stream configuration with the mitigation installed. Intensity 0
/// returns the configuration unchanged.
pub fn apply_mitigation(cfg: &StreamConfig, m: &MitigationSpec) -> Result<StreamConfig> {
    m.validate()?;
    let mut out = cfg.clone();
    if m.intensity > 0.0 {
        out.mitigation = Some(m.clone());
    }
    Ok(out)
}

/// Labeled hacking frequency and mean true return of clean episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamOutcome {
    pub hacking_frequency: f64,
    pub performance: f64,
    pub wall_seconds: f64,
}

impl StreamOutcome {
    pub fn measure(episodes: &[Episode], wall_seconds: f64) -> Self {
        let n = episodes.len().max(1) as f64;
        let hacked = episodes.iter().filter(|e| e.is_hacking()).count() as f64;
        let clean: Vec<f64> = episodes.iter().filter(|e| !e.is_hacking()).map(Episode::true_return).collect();
        let performance = if clean.is_empty() { 0.0 } else { clean.iter().sum::<f64>() / clean.len() as f64 };
        StreamOutcome { hacking_frequency: hacked / n, performance, wall_seconds }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationEffect {
    /// `None` when the unmitigated stream had no hacking.
    pub hacking_reduction_pct: Option<f64>,
    pub performance_impact_pct: f64,
    pub overhead_pct: f64,
}

pub fn evaluate_mitigation(before: &StreamOutcome, after: &StreamOutcome) -> MitigationEffect {
    let hacking_reduction_pct = (before.hacking_frequency > 0.0)
        .then(|| 100.0 * (before.hacking_frequency - after.hacking_frequency) / before.hacking_frequency);
    let performance_impact_pct = if before.performance != 0.0 {
        100.0 * (after.performance - before.performance) / before.performance.abs()
    } else {
        0.0
    };
    let overhead_pct = if before.wall_seconds > 0.0 {
        100.0 * (after.wall_seconds - before.wall_seconds) / before.wall_seconds
    } else {
        0.0
    };
    MitigationEffect { hacking_reduction_pct, performance_impact_pct, overhead_pct }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
