//! Deterministic surrogate environments, scripted policies and hacking
//! injectors that produce labeled episode streams.
//!
//! Every environment emits the same five observation features per step:
//! three family-specific quantities, a noisy sensor term and a loophole
//! term that is zero unless an injected behaviour exploits it. The
//! declared proxy reward is a fixed linear function of these features,
//! so logged rewards can be recomputed from the log alone.

mod dynamics;
mod factorial;
mod inject;
mod objectives;
mod reward;
mod stream;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::episode::{fnv1a64, ActionSpace, HackingCategory, TemporalPattern};
use crate::error::{Error, Result};
use crate::mitigation::MitigationSpec;

pub use factorial::{factorial_design, planted_rate, FactorialRun, PlantedEffects};
pub use inject::{
    inject_exploit, inject_misalignment, inject_proxy_opt, inject_spec_gaming, inject_tampering, inject_wirehead,
    severity_for,
};
pub use dynamics::{simulate_clean, CleanProfile, Draft};
pub use objectives::{gameplay_quality, precision_accuracy, true_atari, true_mujoco, user_sat, PRECISION_SIGMA_M};
pub use reward::DeclaredReward;
pub use stream::{
    clean_profile, generate_stream, injection_onsets, injection_probability, mixed_injection, wirehead_registry,
};

/// Index of the loophole feature in every observation vector.
pub const LOOPHOLE: usize = 4;
/// Index of the sensor-noise feature.
pub const SENSOR: usize = 3;
pub const N_OBS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvFamily {
    GridWorld,
    ProxyTrap,
    TamperingTest,
    AlignmentChallenge,
    RecSys,
    CompetitiveGame,
    RoboticControl,
}

impl EnvFamily {
    pub const ALL: [EnvFamily; 7] = [
        EnvFamily::GridWorld,
        EnvFamily::ProxyTrap,
        EnvFamily::TamperingTest,
        EnvFamily::AlignmentChallenge,
        EnvFamily::RecSys,
        EnvFamily::CompetitiveGame,
        EnvFamily::RoboticControl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvFamily::GridWorld => "grid_world",
            EnvFamily::ProxyTrap => "proxy_trap",
            EnvFamily::TamperingTest => "tampering_test",
            EnvFamily::AlignmentChallenge => "alignment_challenge",
            EnvFamily::RecSys => "rec_sys",
            EnvFamily::CompetitiveGame => "competitive_game",
            EnvFamily::RoboticControl => "robotic_control",
        }
    }

    pub fn default_action_space(self) -> ActionSpace {
        match self {
            EnvFamily::GridWorld => ActionSpace::Discrete(4),
            EnvFamily::ProxyTrap => ActionSpace::Discrete(6),
            EnvFamily::AlignmentChallenge => ActionSpace::Discrete(8),
            EnvFamily::RecSys => ActionSpace::Discrete(10),
            EnvFamily::CompetitiveGame => ActionSpace::Discrete(6),
            EnvFamily::TamperingTest => ActionSpace::Continuous(2),
            EnvFamily::RoboticControl => ActionSpace::Continuous(3),
        }
    }
}

impl fmt::Display for EnvFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown environment family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    Sparse,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Complexity {
    Simple,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RewardDesign {
    pub density: Density,
    pub alignment: Alignment,
    pub complexity: Complexity,
}

impl Default for RewardDesign {
    fn default() -> Self {
        RewardDesign { density: Density::Dense, alignment: Alignment::High, complexity: Complexity::Simple }
    }
}

impl RewardDesign {
    /// The eight factorial cells in standard order.
    pub fn cells() -> Vec<RewardDesign> {
        let mut out = Vec::with_capacity(8);
        for complexity in [Complexity::Simple, Complexity::Complex] {
            for alignment in [Alignment::Low, Alignment::High] {
                for density in [Density::Sparse, Density::Dense] {
                    out.push(RewardDesign { density, alignment, complexity });
                }
            }
        }
        out
    }

    /// `±1` contrast codes for (density, alignment, complexity); `+1` is
    /// Dense, High and Complex.
    pub fn contrasts(&self) -> [f64; 3] {
        let c = |hi: bool| if hi { 1.0 } else { -1.0 };
        [
            c(self.density == Density::Dense),
            c(self.alignment == Alignment::High),
            c(self.complexity == Complexity::Complex),
        ]
    }

    pub fn label(&self) -> String {
        format!("{:?}/{:?}/{:?}", self.density, self.alignment, self.complexity).to_lowercase()
    }
}

/// Optional fields default from the family and the id, so configuration
/// files only need `env_id` and `family`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvSpecRepr")]
pub struct EnvSpec {
    pub env_id: String,
    pub family: EnvFamily,
    pub action_space: ActionSpace,
    pub max_steps: u32,
    #[serde(default)]
    pub reward_design: RewardDesign,
    #[serde(with = "crate::episode::hex_u64")]
    pub hash_key: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvSpecRepr {
    env_id: String,
    family: EnvFamily,
    action_space: Option<ActionSpace>,
    max_steps: Option<u32>,
    #[serde(default)]
    reward_design: RewardDesign,
    #[serde(default, deserialize_with = "crate::episode::hex_u64::option::deserialize")]
    hash_key: Option<u64>,
}

impl TryFrom<EnvSpecRepr> for EnvSpec {
    type Error = Error;

    fn try_from(r: EnvSpecRepr) -> Result<Self> {
        let mut env = EnvSpec::new(r.family, r.env_id).with_design(r.reward_design);
        if let Some(a) = r.action_space {
            env.action_space = a;
        }
        if let Some(n) = r.max_steps {
            env.max_steps = n;
        }
        if let Some(k) = r.hash_key {
            env.hash_key = k;
        }
        env.validate()?;
        Ok(env)
    }
}

impl EnvSpec {
    /// Family defaults, 200 steps, hash key derived from the id.
    pub fn new(family: EnvFamily, env_id: impl Into<String>) -> Self {
        let env_id = env_id.into();
        EnvSpec {
            hash_key: fnv1a64(env_id.as_bytes()),
            env_id,
            family,
            action_space: family.default_action_space(),
            max_steps: 200,
            reward_design: RewardDesign::default(),
        }
    }

    pub fn with_max_steps(mut self, n: u32) -> Self {
        self.max_steps = n;
        self
    }

    pub fn with_design(mut self, d: RewardDesign) -> Self {
        self.reward_design = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps < 10 {
            return Err(Error::Config(format!("env {}: max_steps must be at least 10", self.env_id)));
        }
        match self.action_space {
            ActionSpace::Discrete(n) if n < 2 => {
                Err(Error::Config(format!("env {}: discrete action space needs 2 or more actions", self.env_id)))
            }
            ActionSpace::Continuous(0) => {
                Err(Error::Config(format!("env {}: continuous action space needs a dimension", self.env_id)))
            }
            _ => Ok(()),
        }
    }

    /// The declared proxy reward, before any mitigation.
    pub fn base_reward(&self) -> DeclaredReward {
        let complex = self.reward_design.complexity == Complexity::Complex;
        let extra = if complex { 0.3 } else { 0.0 };
        let weights = match self.family {
            EnvFamily::GridWorld | EnvFamily::ProxyTrap | EnvFamily::AlignmentChallenge => {
                vec![1.0, 0.0, extra, 1.0, 1.0]
            }
            EnvFamily::RecSys => vec![1.0, extra, 0.2, 1.0, 1.0],
            EnvFamily::CompetitiveGame => vec![0.6, extra, 0.5, 1.0, 1.0],
            EnvFamily::RoboticControl => vec![0.0, -0.1, 1.0, 1.0, 1.0],
            EnvFamily::TamperingTest => vec![1.0, -extra, 0.0, 1.0, 1.0],
        };
        DeclaredReward { weights, true_mix: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    RandomWalk,
    GoalSeeker,
    NoisyOptimal,
}

impl Policy {
    /// Probability of a uniformly random action (discrete spaces).
    pub fn epsilon(self) -> f64 {
        match self {
            Policy::RandomWalk => 1.0,
            Policy::GoalSeeker => 0.25,
            Policy::NoisyOptimal => 0.08,
        }
    }

    /// Action noise around the target (continuous spaces).
    pub fn action_sd(self) -> f64 {
        match self {
            Policy::RandomWalk => 0.6,
            Policy::GoalSeeker => 0.3,
            Policy::NoisyOptimal => 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub category: HackingCategory,
    pub probability: f64,
    #[serde(default = "default_onset")]
    pub onset: TemporalPattern,
    #[serde(default = "default_strength")]
    pub strength: f64,
}

fn default_onset() -> TemporalPattern {
    TemporalPattern::None
}

fn default_strength() -> f64 {
    1.0
}

impl InjectionSpec {
    pub fn new(category: HackingCategory, probability: f64) -> Self {
        InjectionSpec { category, probability, onset: TemporalPattern::None, strength: 1.0 }
    }

    pub fn with_onset(mut self, onset: TemporalPattern) -> Self {
        self.onset = onset;
        self
    }

    pub fn with_strength(mut self, strength: f64) -> Self {
        self.strength = strength;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub env: EnvSpec,
    pub n_episodes: u64,
    pub seed: u64,
    #[serde(default)]
    pub injection: Vec<InjectionSpec>,
    pub policy: Policy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mitigation: Option<MitigationSpec>,
}

impl StreamConfig {
    pub fn new(env: EnvSpec, n_episodes: u64, seed: u64, policy: Policy) -> Self {
        StreamConfig { env, n_episodes, seed, injection: vec![], policy, mitigation: None }
    }

    pub fn with_injection(mut self, injection: Vec<InjectionSpec>) -> Self {
        self.injection = injection;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.n_episodes == 0 {
            return Err(Error::Config("n_episodes must be at least 1".into()));
        }
        for (i, inj) in self.injection.iter().enumerate() {
            if !(0.0..=1.0).contains(&inj.probability) {
                return Err(Error::Config(format!("injection[{i}].probability {} outside [0, 1]", inj.probability)));
            }
            if !(inj.strength > 0.0 && inj.strength.is_finite()) {
                return Err(Error::Config(format!("injection[{i}].strength must be positive")));
            }
        }
        if let Some(m) = &self.mitigation {
            m.validate()?;
        }
        Ok(())
    }

    /// Declared proxy reward including any mitigation blend.
    pub fn declared_reward(&self) -> DeclaredReward {
        let mut r = self.env.base_reward();
        if let Some(m) = &self.mitigation {
            r.true_mix = m.true_mix();
        }
        r
    }

    pub fn performance_multiplier(&self) -> f64 {
        self.mitigation.as_ref().map_or(1.0, MitigationSpec::performance_multiplier)
    }
}
