//! Specification gaming: divergence of the windowed proxy/true ratio
//! distribution from its clean baseline, at three temporal scales.

use serde::{Deserialize, Serialize};

use super::{DetectorConfig, RATIO_EPSILON};
use crate::episode::{Episode, HackingCategory};
use crate::error::{Error, Result};
use crate::signal::{DetectorSignal, SignalWarning};
use crate::stats::{histogram, kl_divergence, median, pearson, quantile_sorted};

const MIN_REFERENCES: usize = 5;

/// Baseline ratio histogram for one temporal scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleBaseline {
    /// Fixed window length, or `None` for the episode-relative window
    /// `max(10, L / 10)`.
    pub window: Option<usize>,
    pub range: (f64, f64),
    pub hist: Vec<f64>,
}

impl ScaleBaseline {
    fn window_for(&self, len: usize) -> usize {
        self.window.unwrap_or_else(|| episode_window(len))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecGamingModel {
    pub rho_baseline: f64,
    pub tau_spec: f64,
    pub prior_weight: f64,
    pub episode_scale: ScaleBaseline,
    pub segment_scale: ScaleBaseline,
    /// Median |corr(proxy, true)| over the references.
    pub reference_corr: f64,
}

pub(crate) fn episode_window(len: usize) -> usize {
    (len / 10).max(10)
}

/// Stride-1 sliding-window ratios `sum(proxy) / max(eps, sum(true))`.
/// Episodes no longer than the window give one whole-episode window. The
/// flag reports whether any denominator was clamped.
pub fn windowed_ratios(proxy: &[f64], truth: &[f64], window: usize) -> (Vec<f64>, bool) {
    let n = proxy.len();
    let w = window.clamp(1, n.max(1));
    let mut out = Vec::with_capacity(n + 1 - w);
    let mut degenerate = false;
    let mut sp: f64 = proxy[..w].iter().sum();
    let mut st: f64 = truth[..w].iter().sum();
    let mut push = |sp: f64, st: f64| {
        if st <= RATIO_EPSILON {
            degenerate = true;
        }
        out.push(sp / st.max(RATIO_EPSILON));
    };
    push(sp, st);
    for i in w..n {
        sp += proxy[i] - proxy[i - w];
        st += truth[i] - truth[i - w];
        push(sp, st);
    }
    (out, degenerate)
}

fn fitted_range(mut pooled: Vec<f64>) -> (f64, f64) {
    pooled.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&pooled, 0.01);
    let hi = quantile_sorted(&pooled, 0.99);
    if hi - lo > 1e-9 * lo.abs().max(1.0) {
        (lo, hi)
    } else {
        let d = (0.01 * lo.abs()).max(1e-6);
        (lo - d, hi + d)
    }
}

fn baseline(reference: &[Episode], window: Option<usize>, bins: usize) -> Result<(ScaleBaseline, Vec<f64>)> {
    let mut pooled = Vec::new();
    for e in reference {
        let w = window.unwrap_or_else(|| episode_window(e.len()));
        pooled.extend(windowed_ratios(&e.proxy_series(), &e.true_series(), w).0);
    }
    let range = fitted_range(pooled.clone());
    let hist = histogram(&pooled, bins, range)?;
    Ok((ScaleBaseline { window, range, hist }, pooled))
}

pub fn spec_gaming_fit(reference: &[Episode], cfg: &DetectorConfig) -> Result<SpecGamingModel> {
    let fail = |reason: String| Error::Fit { detector: HackingCategory::SpecificationGaming, reason };
    if reference.len() < MIN_REFERENCES {
        return Err(fail(format!(
            "needs at least {MIN_REFERENCES} reference episodes, got {}",
            reference.len()
        )));
    }
    if reference.iter().any(|e| e.is_empty()) {
        return Err(fail("reference episode without steps".into()));
    }
    if reference.iter().all(|e| e.steps.iter().all(|s| s.true_reward == 0.0)) {
        return Err(fail("true rewards are zero in every reference episode".into()));
    }
    let bins = cfg.spec_bins.max(1);
    let (episode_scale, ratios) = baseline(reference, None, bins)?;
    let (segment_scale, _) = baseline(reference, Some(cfg.segment_window.max(1)), bins)?;
    let corrs: Vec<f64> = reference
        .iter()
        .map(|e| pearson(&e.proxy_series(), &e.true_series()).map(f64::abs).unwrap_or(0.0))
        .collect();
    Ok(SpecGamingModel {
        rho_baseline: median(&ratios)?,
        tau_spec: cfg.tau_spec,
        prior_weight: cfg.spec_prior_weight,
        episode_scale,
        segment_scale,
        reference_corr: median(&corrs)?,
    })
}

fn scale_divergence(model: &SpecGamingModel, scale: &ScaleBaseline, proxy: &[f64], truth: &[f64]) -> (f64, bool) {
    let w = scale.window_for(proxy.len());
    let (ratios, degenerate) = windowed_ratios(proxy, truth, w);
    let bins = scale.hist.len();
    let observed = histogram(&ratios, bins, scale.range).expect("fitted range is non-empty");
    // A short episode carries only a few independent windows; shrink its
    // histogram toward the baseline in proportion.
    let n_eff = (proxy.len() as f64 / w as f64).max(1.0);
    let lambda = model.prior_weight.max(0.0);
    let p: Vec<f64> = observed
        .iter()
        .zip(&scale.hist)
        .map(|(o, q)| (n_eff * o + lambda * q) / (n_eff + lambda))
        .collect();
    let d = kl_divergence(&p, &scale.hist).expect("same bin count");
    (d, degenerate)
}

/// Raw score is the largest of the episode-scale divergence, the 50-step
/// segment-scale divergence and the drop in |corr(proxy, true)| below the
/// reference median.
pub fn spec_gaming_score(model: &SpecGamingModel, e: &Episode, threshold_factor: f64) -> DetectorSignal {
    let cat = HackingCategory::SpecificationGaming;
    if e.is_empty() {
        return DetectorSignal::abstain(cat);
    }
    let proxy = e.proxy_series();
    let truth = e.true_series();
    let (d_ep, deg_a) = scale_divergence(model, &model.episode_scale, &proxy, &truth);
    let (d_seg, deg_b) = scale_divergence(model, &model.segment_scale, &proxy, &truth);
    let transition = if proxy.len() >= 2 {
        let r = pearson(&proxy, &truth).map(f64::abs).unwrap_or(0.0);
        (model.reference_corr - r).max(0.0)
    } else {
        0.0
    };
    let raw = d_ep.max(d_seg).max(transition);
    let warning = (deg_a || deg_b).then_some(SignalWarning::DegenerateRatio);
    DetectorSignal::new(cat, raw, model.tau_spec * threshold_factor).with_warning(warning)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{ActionSpace, ActionValue, Step};

    fn episode(proxy: &[f64], truth: &[f64]) -> Episode {
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
                .zip(truth)
                .enumerate()
                .map(|(t, (&p, &r))| Step {
                    t: t as u64,
                    action: ActionValue::Discrete(0),
                    obs_features: vec![],
                    proxy_reward: p,
                    true_reward: r,
                    reward_checksum: 0,
                })
                .collect(),
            extra: Default::default(),
        }
    }

    #[test]
    fn windows_match_naive_sums() {
        let p = [1.0, 2.0, 3.0, 4.0, 5.0];
        let t = [1.0, 1.0, 1.0, 1.0, 2.0];
        let (r, deg) = windowed_ratios(&p, &t, 2);
        assert!(!deg);
        assert_eq!(r, vec![1.5, 2.5, 3.5, 3.0]);
        assert_eq!(windowed_ratios(&p, &t, 10).0, vec![15.0 / 6.0]);
    }

    #[test]
    fn zero_truth_is_clamped_and_reported() {
        let (r, deg) = windowed_ratios(&[1.0, 1.0], &[0.0, 0.0], 2);
        assert!(deg);
        assert_eq!(r[0], 2.0 / RATIO_EPSILON);
    }

    #[test]
    fn baseline_of_scaled_references() {
        let refs: Vec<Episode> = (0..5)
            .map(|k| {
                let t: Vec<f64> = (0..40).map(|i| 1.0 + ((i * 7 + k) % 5) as f64).collect();
                let p: Vec<f64> = t.iter().map(|x| 2.0 * x).collect();
                episode(&p, &t)
            })
            .collect();
        let m = spec_gaming_fit(&refs, &DetectorConfig::default()).unwrap();
        assert_eq!(m.rho_baseline, 2.0);
    }

    #[test]
    fn too_few_references() {
        let refs = vec![episode(&[1.0], &[1.0]); 4];
        assert!(matches!(
            spec_gaming_fit(&refs, &DetectorConfig::default()),
            Err(Error::Fit { .. })
        ));
    }
}
