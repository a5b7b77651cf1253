//! The 2x2x2 reward-design factorial with planted effects on hacking
//! frequency.

use serde::{Deserialize, Serialize};

use super::{EnvSpec, InjectionSpec, Policy, RewardDesign, StreamConfig};
use crate::episode::{fnv1a64, HackingCategory};
use crate::error::{Error, Result};
use crate::stats::SplitMix64;

/// Effects on the per-episode hacking probability, as differences between
/// the high and low level of each factor (or interaction contrast).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedEffects {
    pub base_rate: f64,
    pub density: f64,
    pub alignment: f64,
    pub complexity: f64,
    pub density_alignment: f64,
    pub density_complexity: f64,
    pub alignment_complexity: f64,
    pub scale: f64,
}

impl Default for PlantedEffects {
    fn default() -> Self {
        PlantedEffects {
            base_rate: 0.4,
            density: -0.187,
            alignment: -0.312,
            complexity: 0.094,
            density_alignment: -0.076,
            density_complexity: 0.052,
            alignment_complexity: -0.089,
            scale: 1.0,
        }
    }
}

impl PlantedEffects {
    pub fn null(base_rate: f64) -> Self {
        PlantedEffects {
            base_rate,
            density: 0.0,
            alignment: 0.0,
            complexity: 0.0,
            density_alignment: 0.0,
            density_complexity: 0.0,
            alignment_complexity: 0.0,
            scale: 1.0,
        }
    }
}

/// Hacking probability of a cell: the base rate plus half of each effect
/// times its `±1` contrast, so that the difference between level means is
/// exactly the effect.
pub fn planted_rate(effects: &PlantedEffects, design: &RewardDesign) -> f64 {
    let [d, a, c] = design.contrasts();
    let e = effects;
    let shift = e.density * d
        + e.alignment * a
        + e.complexity * c
        + e.density_alignment * d * a
        + e.density_complexity * d * c
        + e.alignment_complexity * a * c;
    (e.base_rate + 0.5 * e.scale * shift).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialRun {
    pub design: RewardDesign,
    pub config: StreamConfig,
}

/// Full crossing of environments, the eight cells and `seeds_per_cell`
/// seeds. Each run injects one category (rotating through the six) at the
/// cell's planted rate.
pub fn factorial_design(
    base_envs: &[EnvSpec],
    seeds_per_cell: u32,
    n_episodes: u64,
    policy: Policy,
    effects: &PlantedEffects,
    seed: u64,
) -> Result<Vec<FactorialRun>> {
    if seeds_per_cell == 0 {
        return Err(Error::Config("seeds_per_cell must be at least 1".into()));
    }
    let mut runs = Vec::with_capacity(base_envs.len() * 8 * seeds_per_cell as usize);
    for (ei, base) in base_envs.iter().enumerate() {
        for (ci, design) in RewardDesign::cells().into_iter().enumerate() {
            let mut env = base.clone().with_design(design);
            env.env_id = format!("{}-{}", base.env_id, design.label().replace('/', "-"));
            env.hash_key = fnv1a64(env.env_id.as_bytes());
            let rate = planted_rate(effects, &design);
            for s in 0..seeds_per_cell {
                let run_seed = SplitMix64::derive(seed, &[ei as u64, ci as u64, u64::from(s)]).next_u64();
                let category = HackingCategory::ALL[(s as usize + ci + ei) % 6];
                let config = StreamConfig::new(env.clone(), n_episodes, run_seed, policy)
                    .with_injection(vec![InjectionSpec::new(category, rate)]);
                runs.push(FactorialRun { design, config });
            }
        }
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::{Alignment, Complexity, Density, EnvFamily};

    #[test]
    fn lowest_cell() {
        let e = PlantedEffects::default();
        let rates: Vec<(RewardDesign, f64)> =
            RewardDesign::cells().into_iter().map(|d| (d, planted_rate(&e, &d))).collect();
        let min = rates.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(
            min.0,
            RewardDesign { density: Density::Dense, alignment: Alignment::High, complexity: Complexity::Simple }
        );
        assert!(rates.iter().all(|r| r.1 > 0.0 && r.1 < 1.0));
    }

    #[test]
    fn run_counts() {
        let envs: Vec<EnvSpec> = (0..5).map(|i| EnvSpec::new(EnvFamily::ProxyTrap, format!("env{i}"))).collect();
        let e = PlantedEffects::default();
        assert_eq!(factorial_design(&envs, 15, 10, Policy::GoalSeeker, &e, 1).unwrap().len(), 600);
        assert_eq!(factorial_design(&envs[..2], 5, 10, Policy::GoalSeeker, &e, 1).unwrap().len(), 80);
    }
}
