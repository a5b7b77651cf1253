use serde::{Deserialize, Serialize};

/// Declared proxy reward of a surrogate environment: a fixed linear
/// function of the observation features, optionally blended with the true
/// reward (reward rebalancing and multi-objective scalarisation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclaredReward {
    pub weights: Vec<f64>,
    #[serde(default)]
    pub true_mix: f64,
}

impl DeclaredReward {
    pub fn proxy(&self, obs: &[f64], true_reward: f64) -> f64 {
        let base: f64 = self.weights.iter().zip(obs).map(|(w, x)| w * x).sum();
        if self.true_mix == 0.0 {
            base
        } else {
            (1.0 - self.true_mix) * base + self.true_mix * true_reward
        }
    }

    /// Feature increment that raises the proxy by `gain` through a feature
    /// with unit weight.
    pub fn feature_delta_for(&self, gain: f64) -> f64 {
        gain / (1.0 - self.true_mix)
    }
}
