//! Episode log domain types and validation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// The six reward-hacking categories. Declaration order is the canonical
/// detector order used everywhere a per-category array appears.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HackingCategory {
    SpecificationGaming,
    RewardTampering,
    ProxyOptimization,
    ObjectiveMisalignment,
    ExploitationPattern,
    Wireheading,
}

impl HackingCategory {
    pub const ALL: [HackingCategory; 6] = [
        HackingCategory::SpecificationGaming,
        HackingCategory::RewardTampering,
        HackingCategory::ProxyOptimization,
        HackingCategory::ObjectiveMisalignment,
        HackingCategory::ExploitationPattern,
        HackingCategory::Wireheading,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            HackingCategory::SpecificationGaming => "specification_gaming",
            HackingCategory::RewardTampering => "reward_tampering",
            HackingCategory::ProxyOptimization => "proxy_optimization",
            HackingCategory::ObjectiveMisalignment => "objective_misalignment",
            HackingCategory::ExploitationPattern => "exploitation_pattern",
            HackingCategory::Wireheading => "wireheading",
        }
    }
}

impl fmt::Display for HackingCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HackingCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HackingCategory::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown hacking category `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalPattern {
    GradualEmergence,
    SuddenOnset,
    Intermittent,
    None,
}

impl FromStr for TemporalPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gradual_emergence" => Ok(TemporalPattern::GradualEmergence),
            "sudden_onset" => Ok(TemporalPattern::SuddenOnset),
            "intermittent" => Ok(TemporalPattern::Intermittent),
            "none" => Ok(TemporalPattern::None),
            other => Err(Error::invalid(format!("unknown temporal pattern `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete(u32),
    Continuous(u32),
}

impl ActionSpace {
    pub fn is_discrete(self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }
}

/// A discrete symbol id or a real action vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionValue {
    Discrete(u32),
    Continuous(Vec<f64>),
}

impl ActionValue {
    /// Canonical bytes fed to the reward checksum.
    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        match self {
            ActionValue::Discrete(a) => out.extend_from_slice(&u64::from(*a).to_le_bytes()),
            ActionValue::Continuous(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_bits().to_le_bytes());
                }
            }
        }
    }

    pub fn as_slice(&self) -> Option<&[f64]> {
        match self {
            ActionValue::Continuous(v) => Some(v),
            ActionValue::Discrete(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub t: u64,
    pub action: ActionValue,
    #[serde(default, rename = "obs")]
    pub obs_features: Vec<f64>,
    pub proxy_reward: f64,
    pub true_reward: f64,
    #[serde(with = "hex_u64")]
    pub reward_checksum: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub is_hacking: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<HackingCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub onset_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub onset_episode_pattern: Option<TemporalPattern>,
}

impl GroundTruth {
    pub fn clean() -> Self {
        GroundTruth::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Episode {
    pub v: u32,
    pub id: String,
    pub env_id: String,
    pub action_space: ActionSpace,
    pub seed: u64,
    pub episode_index: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<GroundTruth>,
    pub steps: Vec<Step>,
    /// Unrecognised top-level fields seen on read. Never written back.
    #[serde(skip)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn proxy_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.proxy_reward).collect()
    }

    pub fn true_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.true_reward).collect()
    }

    pub fn proxy_return(&self) -> f64 {
        self.steps.iter().map(|s| s.proxy_reward).sum()
    }

    pub fn true_return(&self) -> f64 {
        self.steps.iter().map(|s| s.true_reward).sum()
    }

    pub fn is_hacking(&self) -> bool {
        self.label.as_ref().is_some_and(|l| l.is_hacking)
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Keyed checksum over `(t, action, proxy_reward)`: FNV-1a of the
/// little-endian encoding, XOR-folded with the environment key.
pub fn reward_checksum(t: u64, action: &ActionValue, proxy_reward: f64, key: u64) -> u64 {
    let mut buf = Vec::with_capacity(32);
    buf.extend_from_slice(&t.to_le_bytes());
    action.write_bytes(&mut buf);
    buf.extend_from_slice(&proxy_reward.to_bits().to_le_bytes());
    fnv1a64(&buf) ^ key
}

/// Returns one description per violated invariant; empty means valid.
pub fn validate_episode(e: &Episode) -> Vec<String> {
    let mut out = Vec::new();
    if e.steps.is_empty() {
        out.push("episode has no steps".to_string());
    }
    for (i, step) in e.steps.iter().enumerate() {
        if i == 0 && step.t != 0 {
            out.push("t does not start at 0 at index 0".to_string());
        }
        if i > 0 && step.t <= e.steps[i - 1].t {
            out.push(format!("non-increasing t at index {i}"));
        }
        match (&step.action, e.action_space) {
            (ActionValue::Discrete(a), ActionSpace::Discrete(n)) => {
                if *a >= n {
                    out.push(format!("discrete action out of range at step {i}"));
                }
            }
            (ActionValue::Continuous(v), ActionSpace::Continuous(d)) => {
                if v.len() != d as usize {
                    out.push(format!("action arity mismatch at step {i}"));
                } else if v.iter().any(|x| !x.is_finite()) {
                    out.push(format!("non-finite action at step {i}"));
                }
            }
            _ => out.push(format!("action arity mismatch at step {i}")),
        }
        if !step.proxy_reward.is_finite() {
            out.push(format!("non-finite proxy_reward at step {i}"));
        }
        if !step.true_reward.is_finite() {
            out.push(format!("non-finite true_reward at step {i}"));
        }
        if step.obs_features.iter().any(|x| !x.is_finite()) {
            out.push(format!("non-finite obs at step {i}"));
        }
    }
    if let Some(label) = &e.label {
        if !label.is_hacking
            && (label.category.is_some() || label.severity.is_some() || label.onset_step.is_some())
        {
            out.push("label: clean episode carries category, severity or onset".to_string());
        }
        if let Some(onset) = label.onset_step {
            if onset >= e.steps.len() as u64 {
                out.push(format!("label: onset_step {onset} out of range"));
            }
        }
    }
    out
}

pub(crate) mod hex_u64 {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        struct HexVisitor;

        impl Visitor<'_> for HexVisitor {
            type Value = u64;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a hex string or an unsigned integer")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<u64, E> {
                Ok(v)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<u64, E> {
                u64::try_from(v).map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<u64, E> {
                let digits = v.strip_prefix("0x").unwrap_or(v);
                u64::from_str_radix(digits, 16).map_err(E::custom)
            }
        }

        d.deserialize_any(HexVisitor)
    }

    pub mod option {
        use serde::{Deserialize, Deserializer};

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap(#[serde(with = "super")] u64);
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn discrete_episode(ts: &[u64]) -> Episode {
        Episode {
            v: SCHEMA_VERSION,
            id: "e0".into(),
            env_id: "grid".into(),
            action_space: ActionSpace::Discrete(4),
            seed: 7,
            episode_index: 0,
            label: None,
            steps: ts
                .iter()
                .map(|&t| Step {
                    t,
                    action: ActionValue::Discrete((t % 4) as u32),
                    obs_features: vec![],
                    proxy_reward: 1.0,
                    true_reward: 1.0,
                    reward_checksum: 0,
                })
                .collect(),
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn well_formed_episode_has_no_violations() {
        let e = discrete_episode(&(0..10).collect::<Vec<_>>());
        assert!(validate_episode(&e).is_empty());
    }

    #[test]
    fn repeated_t_is_reported_at_its_index() {
        let e = discrete_episode(&[0, 1, 1, 2]);
        assert_eq!(validate_episode(&e), vec!["non-increasing t at index 2"]);
    }

    #[test]
    fn continuous_arity_mismatch() {
        let mut e = discrete_episode(&(0..8).collect::<Vec<_>>());
        e.action_space = ActionSpace::Continuous(3);
        for s in &mut e.steps {
            s.action = ActionValue::Continuous(vec![0.0; 3]);
        }
        e.steps[5].action = ActionValue::Continuous(vec![0.0; 2]);
        assert_eq!(validate_episode(&e), vec!["action arity mismatch at step 5"]);
    }

    #[test]
    fn empty_and_bad_labels() {
        let mut e = discrete_episode(&[]);
        assert_eq!(validate_episode(&e), vec!["episode has no steps"]);
        e = discrete_episode(&[0, 1, 2]);
        e.label = Some(GroundTruth {
            is_hacking: false,
            category: Some(HackingCategory::Wireheading),
            ..GroundTruth::default()
        });
        assert_eq!(validate_episode(&e).len(), 1);
        e.label = Some(GroundTruth {
            is_hacking: true,
            onset_step: Some(3),
            ..GroundTruth::default()
        });
        assert_eq!(validate_episode(&e), vec!["label: onset_step 3 out of range"]);
    }

    #[test]
    fn non_finite_rewards_are_reported() {
        let mut e = discrete_episode(&[0, 1]);
        e.steps[1].true_reward = f64::NAN;
        assert_eq!(validate_episode(&e), vec!["non-finite true_reward at step 1"]);
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn checksum_depends_on_key_and_reward() {
        let a = ActionValue::Discrete(2);
        let base = reward_checksum(3, &a, 0.5, 0);
        assert_eq!(reward_checksum(3, &a, 0.5, 0xff), base ^ 0xff);
        assert_ne!(reward_checksum(3, &a, 0.5000001, 0), base);
        assert_ne!(reward_checksum(4, &a, 0.5, 0), base);
    }

    #[test]
    fn category_names_round_trip() {
        for c in HackingCategory::ALL {
            assert_eq!(c.name().parse::<HackingCategory>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.name()));
        }
        assert!(Severity::Low < Severity::Medium && Severity::High < Severity::Critical);
    }
}
