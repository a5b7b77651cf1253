//! Reward tampering: an Isolation Forest over summary features of the
//! proxy-reward series.

use serde::{Deserialize, Serialize};

use super::DetectorConfig;
use crate::episode::{Episode, HackingCategory};
use crate::error::{Error, Result};
use crate::signal::{DetectorSignal, SignalWarning};
use crate::stats::{
    autocorrelation, isolation_forest_fit, isolation_forest_score, linear_trend, moments, IsolationForestModel,
};

pub const N_FEATURES: usize = 10;
const MIN_REFERENCES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamperingModel {
    pub forest: IsolationForestModel,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    /// Set when every reference produced the same feature vector.
    pub degenerate: bool,
}

fn median_abs(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Mean, variance, skewness, kurtosis, lag-1 autocorrelation, trend,
/// max |diff|, count of diffs beyond 3 sigma, lag-2 autocorrelation and
/// median |diff| of the proxy-reward series.
pub fn tampering_features(e: &Episode) -> [f64; N_FEATURES] {
    let r = e.proxy_series();
    let mut f = [0.0; N_FEATURES];
    if r.is_empty() {
        return f;
    }
    let m = moments(&r).expect("non-empty");
    f[0] = m.mean;
    f[1] = m.variance;
    f[2] = m.skewness;
    f[3] = m.kurtosis;
    f[4] = autocorrelation(&r, 1).unwrap_or(0.0);
    f[5] = linear_trend(&r).unwrap_or(0.0);
    f[8] = autocorrelation(&r, 2).unwrap_or(0.0);
    let mut diffs: Vec<f64> = r.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    if !diffs.is_empty() {
        let signed: Vec<f64> = r.windows(2).map(|w| w[1] - w[0]).collect();
        let sigma = moments(&signed).expect("non-empty").variance.sqrt();
        f[6] = diffs.iter().copied().fold(0.0, f64::max);
        f[7] = if sigma > 0.0 { diffs.iter().filter(|&&d| d > 3.0 * sigma).count() as f64 } else { 0.0 };
        f[9] = median_abs(&mut diffs);
    }
    f
}

fn standardize(model: &TamperingModel, f: &[f64; N_FEATURES]) -> Vec<f64> {
    f.iter()
        .zip(model.feature_means.iter().zip(&model.feature_scales))
        .map(|(x, (m, s))| (x - m) / s)
        .collect()
}

pub fn tampering_fit(reference: &[Episode], cfg: &DetectorConfig) -> Result<TamperingModel> {
    if reference.len() < MIN_REFERENCES {
        return Err(Error::Fit {
            detector: HackingCategory::RewardTampering,
            reason: format!("needs at least {MIN_REFERENCES} reference episodes, got {}", reference.len()),
        });
    }
    let feats: Vec<[f64; N_FEATURES]> = reference.iter().map(tampering_features).collect();
    let n = feats.len() as f64;
    let mut means = vec![0.0; N_FEATURES];
    let mut scales = vec![0.0; N_FEATURES];
    for d in 0..N_FEATURES {
        let mu = feats.iter().map(|f| f[d]).sum::<f64>() / n;
        let var = feats.iter().map(|f| (f[d] - mu).powi(2)).sum::<f64>() / n;
        means[d] = mu;
        // Zero-spread features are centred but not rescaled.
        scales[d] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    }
    let degenerate = feats.iter().all(|f| f == &feats[0]);
    let mut model = TamperingModel {
        forest: IsolationForestModel {
            trees: vec![],
            subsample_size: 0,
            n_trees: 0,
            dim: N_FEATURES,
            score_threshold: 0.0,
            contamination: cfg.contamination,
            training_scores: vec![],
        },
        feature_means: means,
        feature_scales: scales,
        degenerate,
    };
    let vectors: Vec<Vec<f64>> = feats.iter().map(|f| standardize(&model, f)).collect();
    model.forest = isolation_forest_fit(&vectors, cfg.n_trees, cfg.subsample, cfg.contamination, cfg.seed)
        .map_err(|e| Error::Fit { detector: HackingCategory::RewardTampering, reason: e.to_string() })?;
    Ok(model)
}

/// Raw score is the forest anomaly score; the threshold is the fitted
/// `(1 - contamination)` training quantile.
pub fn tampering_score(model: &TamperingModel, e: &Episode, threshold_factor: f64) -> DetectorSignal {
    let cat = HackingCategory::RewardTampering;
    if e.is_empty() {
        return DetectorSignal::abstain(cat);
    }
    let x = standardize(model, &tampering_features(e));
    let s = isolation_forest_score(&model.forest, &x).expect("dimension fixed at fit");
    DetectorSignal::new(cat, s, model.forest.score_threshold * threshold_factor)
        .with_warning(model.degenerate.then_some(SignalWarning::DegenerateFit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{ActionSpace, ActionValue, Step};

    fn episode(proxy: &[f64]) -> Episode {
        Episode {
            v: 1,
            id: "e".into(),
            env_id: "test".into(),
            action_space: ActionSpace::Discrete(2),
            seed: 0,
            episode_index: 0,
            label: None,
            steps: proxy
                .iter()
                .enumerate()
                .map(|(t, &p)| Step {
                    t: t as u64,
                    action: ActionValue::Discrete(0),
                    obs_features: vec![],
                    proxy_reward: p,
                    true_reward: p,
                    reward_checksum: 0,
                })
                .collect(),
            extra: Default::default(),
        }
    }

    #[test]
    fn constant_series() {
        let f = tampering_features(&episode(&[3.0; 12]));
        assert_eq!(f, [3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_spike() {
        let mut r = vec![0.0; 20];
        r[7] = 100.0;
        let f = tampering_features(&episode(&r));
        assert_eq!(f[6], 100.0);
        assert!(f[7] >= 1.0);
    }

    #[test]
    fn ramp() {
        let r: Vec<f64> = (0..30).map(f64::from).collect();
        let f = tampering_features(&episode(&r));
        assert!((f[5] - 1.0).abs() < 1e-12);
        assert_eq!(f[7], 0.0);
        assert_eq!(f[9], 1.0);
    }

    #[test]
    fn one_step_pads_differences() {
        let f = tampering_features(&episode(&[2.0]));
        assert_eq!(&f[4..], &[0.0; 6]);
    }

    #[test]
    fn identical_references_warn() {
        let refs = vec![episode(&[1.0, 2.0, 1.0]); 25];
        let m = tampering_fit(&refs, &DetectorConfig::default()).unwrap();
        assert!(m.degenerate);
        let s = tampering_score(&m, &refs[0], 1.0);
        assert_eq!(s.warning, Some(SignalWarning::DegenerateFit));
        assert!(!s.flagged);
    }
}
