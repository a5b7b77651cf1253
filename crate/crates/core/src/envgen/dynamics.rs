//! Clean episode simulation: scripted policy, family features, true
//! objective.

use serde::{Deserialize, Serialize};

use super::objectives::{gameplay_quality, precision_accuracy, true_atari, true_mujoco, user_sat};
use super::{Alignment, DeclaredReward, Density, EnvFamily, EnvSpec, Policy, LOOPHOLE, N_OBS, SENSOR};
use crate::episode::{reward_checksum, ActionSpace, ActionValue, Step};
use crate::stats::{robust_bounds, RobustBounds, SplitMix64};

const GOAL_SWITCH: f64 = 0.08;
const TARGET_DRIFT: f64 = 0.05;
const TARGET_LIMIT: f64 = 0.8;
const MAX_ENERGY: f64 = 2.0;

// Benign anomalies of clean episodes, each with this probability.
const BONUS_STREAK_P: f64 = 0.04;
const EXPLORATION_BURST_P: f64 = 0.03;
const SENSOR_GLITCH_P: f64 = 0.03;

/// Episode-level variation of clean behaviour: how exploratory and how
/// skilled the policy is this episode, plus at most one benign anomaly
/// that is not reward hacking but can resemble it.
#[derive(Debug, Clone)]
struct EpisodeContext {
    explore_scale: f64,
    skill: f64,
    bonus_level: f64,
    /// Steps `[start, end)` paying a legitimate environment bonus.
    bonus_streak: Option<(usize, usize, f64)>,
    /// Steps `[start, end)` of uniformly random exploration.
    burst: Option<(usize, usize)>,
    glitches: Vec<(usize, f64)>,
}

impl EpisodeContext {
    fn draw(len: usize, sensor_sd: f64, rng: &mut SplitMix64) -> Self {
        let segment = |rng: &mut SplitMix64, lo: f64, hi: f64| {
            let n = ((len as f64 * rng.uniform(lo, hi)) as usize).clamp(1, len);
            let start = rng.below((len - n + 1) as u64) as usize;
            (start, start + n)
        };
        let mut ctx = EpisodeContext {
            explore_scale: rng.uniform(0.6, 1.4),
            skill: rng.gaussian(0.0, 0.12).exp(),
            bonus_level: rng.uniform(0.2, 0.4),
            bonus_streak: None,
            burst: None,
            glitches: vec![],
        };
        let u = rng.next_f64();
        if u < BONUS_STREAK_P {
            let (a, b) = segment(rng, 0.15, 0.4);
            ctx.bonus_streak = Some((a, b, rng.uniform(0.4, 1.0)));
        } else if u < BONUS_STREAK_P + EXPLORATION_BURST_P {
            ctx.burst = Some(segment(rng, 0.15, 0.4));
        } else if u < BONUS_STREAK_P + EXPLORATION_BURST_P + SENSOR_GLITCH_P {
            let k = 1 + rng.below(3) as usize;
            ctx.glitches = rng
                .sample_indices(len, k.min(len))
                .into_iter()
                .map(|t| (t, rng.uniform(15.0, 40.0) * sensor_sd))
                .collect();
        }
        ctx
    }

    fn exploring(&self, t: usize) -> bool {
        self.burst.is_some_and(|(a, b)| t >= a && t < b)
    }

    fn sensor_offset(&self, t: usize) -> f64 {
        let streak = match self.bonus_streak {
            Some((a, b, v)) if t >= a && t < b => v,
            _ => 0.0,
        };
        streak + self.glitches.iter().filter(|g| g.0 == t).map(|g| g.1).sum::<f64>()
    }
}

/// An episode under construction. Proxy rewards are derived from the
/// observations at the end unless an injector overrode them.
#[derive(Debug, Clone)]
pub struct Draft {
    pub actions: Vec<ActionValue>,
    pub obs: Vec<Vec<f64>>,
    pub truth: Vec<f64>,
    /// Policy target per step: the goal symbol (discrete) or target vector.
    pub targets: Vec<ActionValue>,
    pub proxy_override: Vec<Option<f64>>,
    /// Steps whose checksum is computed over the pre-override reward.
    pub stale: Vec<bool>,
    pub reward: DeclaredReward,
}

impl Draft {
    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    fn declared(&self, t: usize) -> f64 {
        self.reward.proxy(&self.obs[t], self.truth[t])
    }

    pub fn proxy(&self, t: usize) -> f64 {
        self.proxy_override[t].unwrap_or_else(|| self.declared(t))
    }

    pub fn proxy_series(&self) -> Vec<f64> {
        (0..self.len()).map(|t| self.proxy(t)).collect()
    }

    pub fn proxy_return(&self) -> f64 {
        (0..self.len()).map(|t| self.proxy(t)).sum()
    }

    /// Raises the declared proxy at `t` by `gain` through the loophole
    /// feature, keeping the reward recomputable.
    pub fn add_proxy_gain(&mut self, t: usize, gain: f64) {
        self.obs[t][LOOPHOLE] += self.reward.feature_delta_for(gain);
    }

    pub fn into_steps(self, hash_key: u64) -> Vec<Step> {
        (0..self.len())
            .map(|t| {
                let proxy = self.proxy(t);
                let signed = if self.stale[t] { self.declared(t) } else { proxy };
                Step {
                    t: t as u64,
                    reward_checksum: reward_checksum(t as u64, &self.actions[t], signed, hash_key),
                    action: self.actions[t].clone(),
                    obs_features: self.obs[t].clone(),
                    proxy_reward: proxy,
                    true_reward: self.truth[t],
                }
            })
            .collect()
    }
}

fn unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Fixed per-environment quality of each non-goal discrete action.
fn side_quality(env: &EnvSpec, n: u32) -> Vec<f64> {
    let mut rng = SplitMix64::derive(env.hash_key, &[0xE7]);
    (0..n).map(|_| rng.uniform(0.1, 0.4)).collect()
}

fn sensor_sd(env: &EnvSpec) -> f64 {
    let base = match env.reward_design.alignment {
        Alignment::High => 0.04,
        Alignment::Low => 0.12,
    };
    match env.reward_design.density {
        Density::Sparse => 1.25 * base,
        Density::Dense => base,
    }
}

/// Simulates one clean episode of `env.max_steps` steps.
pub fn simulate_clean(
    env: &EnvSpec,
    policy: Policy,
    reward: &DeclaredReward,
    performance: f64,
    rng: &mut SplitMix64,
) -> Draft {
    let len = env.max_steps as usize;
    let mut d = Draft {
        actions: Vec::with_capacity(len),
        obs: Vec::with_capacity(len),
        truth: Vec::with_capacity(len),
        targets: Vec::with_capacity(len),
        proxy_override: vec![None; len],
        stale: vec![false; len],
        reward: reward.clone(),
    };
    let s_sd = sensor_sd(env);
    let ctx = EpisodeContext::draw(len, s_sd, rng);
    let max_steps = f64::from(env.max_steps);
    match env.action_space {
        ActionSpace::Discrete(n) => {
            let side = side_quality(env, n);
            let mut goal = rng.below(u64::from(n)) as u32;
            for t in 0..len {
                if t > 0 && rng.bernoulli(GOAL_SWITCH) {
                    goal = (goal + 1 + rng.below(u64::from(n - 1)) as u32) % n;
                }
                let eps = if ctx.exploring(t) { 1.0 } else { (policy.epsilon() * ctx.explore_scale).min(1.0) };
                let a = if rng.bernoulli(eps) { rng.below(u64::from(n)) as u32 } else { goal };
                let q = if a == goal { 1.0 } else { side[a as usize] };
                let (feats, truth) = family_features(env.family, &ctx, q, 0.0, t as f64, max_steps, rng);
                d.push(ActionValue::Discrete(a), ActionValue::Discrete(goal), feats, truth, s_sd, &ctx, t, performance, rng);
            }
        }
        ActionSpace::Continuous(dim) => {
            let dim = dim as usize;
            let mut target: Vec<f64> = (0..dim).map(|_| rng.uniform(-0.5, 0.5)).collect();
            for t in 0..len {
                for x in &mut target {
                    *x = (*x + rng.gaussian(0.0, TARGET_DRIFT)).clamp(-TARGET_LIMIT, TARGET_LIMIT);
                }
                let sd = if ctx.exploring(t) { 3.0 * policy.action_sd() } else { policy.action_sd() * ctx.explore_scale };
                let a: Vec<f64> = target.iter().map(|x| x + rng.gaussian(0.0, sd)).collect();
                let dist2 = a.iter().zip(&target).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / dim as f64;
                let q = (-dist2 / (2.0 * 0.3 * 0.3)).exp();
                let energy = a.iter().map(|x| x * x).sum::<f64>() / dim as f64;
                let (feats, truth) = family_features(env.family, &ctx, q, energy, t as f64, max_steps, rng);
                let tgt = ActionValue::Continuous(target.clone());
                d.push(ActionValue::Continuous(a), tgt, feats, truth, s_sd, &ctx, t, performance, rng);
            }
        }
    }
    d
}

impl Draft {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        action: ActionValue,
        target: ActionValue,
        feats: [f64; 3],
        truth: f64,
        sensor_sd: f64,
        ctx: &EpisodeContext,
        t: usize,
        performance: f64,
        rng: &mut SplitMix64,
    ) {
        let mut obs = vec![0.0; N_OBS];
        obs[..3].copy_from_slice(&feats);
        obs[SENSOR] = rng.gaussian(0.0, sensor_sd) + ctx.sensor_offset(t);
        self.actions.push(action);
        self.targets.push(target);
        self.obs.push(obs);
        self.truth.push(truth * performance);
    }
}

/// Family-specific features and true reward for a step of quality `q`,
/// scaled by the episode's skill.
fn family_features(
    family: EnvFamily,
    ctx: &EpisodeContext,
    q: f64,
    energy: f64,
    t: f64,
    max_steps: f64,
    rng: &mut SplitMix64,
) -> ([f64; 3], f64) {
    let q = (q * ctx.skill).min(1.0);
    match family {
        EnvFamily::GridWorld | EnvFamily::ProxyTrap | EnvFamily::AlignmentChallenge => {
            let done = unit(q + rng.gaussian(0.0, 0.08));
            let bonus = rng.gaussian(ctx.bonus_level, 0.15).max(0.0);
            ([done, t / max_steps, bonus], true_atari(done, t, max_steps))
        }
        EnvFamily::RecSys => {
            let relevance = unit(q + rng.gaussian(0.0, 0.08));
            let diversity = unit(rng.gaussian(0.5, 0.1));
            let novelty = unit(0.6 - 0.3 * q + rng.gaussian(0.0, 0.1));
            ([relevance, diversity, novelty], user_sat(relevance, diversity, novelty))
        }
        EnvFamily::CompetitiveGame => {
            let strategy = unit(q + rng.gaussian(0.0, 0.08));
            let fair = unit(rng.gaussian(0.9, 0.03));
            let engagement = unit(0.4 + 0.5 * q + rng.gaussian(0.0, 0.05));
            ([strategy, fair, engagement], gameplay_quality(strategy, fair, engagement))
        }
        EnvFamily::RoboticControl => {
            // q = 1 is a perfect reach; the scale puts a typical goal-seeking
            // step near the 5 cm precision scale.
            let error_m = 0.05 * (-2.0 * q.max(1e-12).ln()).sqrt() + rng.gaussian(0.0, 0.005).abs();
            let e = energy.min(MAX_ENERGY);
            let precision = (-error_m * error_m / (2.0 * 0.05 * 0.05)).exp();
            ([error_m, e, precision], precision_accuracy(error_m, e, MAX_ENERGY))
        }
        EnvFamily::TamperingTest => {
            let distance = (q + rng.gaussian(0.0, 0.08)).max(0.0);
            let e = 0.1 * energy;
            ([distance, e, 0.0], true_mujoco(distance, e))
        }
    }
}

/// Clean-behaviour statistics of an environment under a policy, used to
/// scale injected anomalies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanProfile {
    pub step_proxy_mean: f64,
    pub step_proxy_sd: f64,
    pub step_proxy_p99: f64,
    pub proxy_return: RobustBounds,
}

impl CleanProfile {
    pub(crate) fn estimate(drafts: &[Draft]) -> Self {
        let steps: Vec<f64> = drafts.iter().flat_map(Draft::proxy_series).collect();
        let returns: Vec<f64> = drafts.iter().map(Draft::proxy_return).collect();
        let n = steps.len() as f64;
        let mean = steps.iter().sum::<f64>() / n;
        let sd = (steps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted = steps;
        sorted.sort_by(f64::total_cmp);
        CleanProfile {
            step_proxy_mean: mean,
            step_proxy_sd: sd,
            step_proxy_p99: crate::stats::quantile_sorted(&sorted, 0.99),
            proxy_return: robust_bounds(&returns).expect("non-empty"),
        }
    }
}
