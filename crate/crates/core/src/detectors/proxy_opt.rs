//! Proxy optimization: the step-level proxy/true correlation falling well
//! below what the early part of the reference stream predicts.

use serde::{Deserialize, Serialize};

use super::{initial_phase, DetectorConfig};
use crate::episode::{Episode, HackingCategory};
use crate::error::{Error, Result};
use crate::signal::{DetectorSignal, SignalWarning};
use crate::stats::{median, theil_sen, LineFit, RollingCorrelation};

const MIN_INITIAL: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyOptModel {
    pub window: usize,
    pub stride: usize,
    /// Expected correlation as a function of episode index.
    pub expected: LineFit,
    /// Index range the line was fitted on; predictions are not
    /// extrapolated past it.
    pub index_range: (f64, f64),
    pub delta_threshold: f64,
}

/// Mean Pearson correlation over windows of `window` steps advanced by
/// `stride`, plus the number of zero-variance windows (counted as 0).
/// Episodes shorter than the window are one window.
pub fn windowed_correlation(proxy: &[f64], truth: &[f64], window: usize, stride: usize) -> (f64, usize) {
    let n = proxy.len();
    if n < 2 {
        return (0.0, 1);
    }
    let w = window.clamp(2, n);
    let stride = stride.max(1);
    let mut rc = RollingCorrelation::new();
    for i in 0..w {
        rc.push(proxy[i], truth[i]);
    }
    let mut start = 0;
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut zero_var = 0usize;
    loop {
        match rc.correlation() {
            Some(r) => sum += r,
            None => zero_var += 1,
        }
        count += 1;
        let next = start + stride;
        if next + w > n {
            break;
        }
        // Slide by `stride` steps, O(1) per step.
        for i in start..next {
            rc.pop(proxy[i], truth[i]);
            rc.push(proxy[i + w], truth[i + w]);
        }
        start = next;
    }
    (sum / count as f64, zero_var)
}

pub fn proxy_opt_fit(reference: &[Episode], cfg: &DetectorConfig) -> Result<ProxyOptModel> {
    let fail = |reason: String| Error::Fit { detector: HackingCategory::ProxyOptimization, reason };
    if reference.len() < MIN_INITIAL {
        return Err(fail(format!(
            "needs at least {MIN_INITIAL} reference episodes, got {}",
            reference.len()
        )));
    }
    let initial = initial_phase(reference, cfg.initial_fraction, MIN_INITIAL);
    let points: Vec<(f64, f64)> = initial
        .iter()
        .map(|e| {
            let x = e.episode_index as f64;
            (x, windowed_correlation(&e.proxy_series(), &e.true_series(), cfg.corr_window, cfg.corr_stride).0)
        })
        .collect();
    let expected = match theil_sen(&points) {
        Ok(fit) => fit,
        // All references share one index: the expectation is a constant.
        Err(Error::DegenerateInput(_)) => {
            let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
            LineFit { slope: 0.0, intercept: median(&ys)? }
        }
        Err(e) => return Err(fail(e.to_string())),
    };
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(ProxyOptModel {
        window: cfg.corr_window.max(2),
        stride: cfg.corr_stride.max(1),
        expected,
        index_range: (lo, hi),
        delta_threshold: cfg.delta_rho,
    })
}

impl ProxyOptModel {
    pub fn expected_at(&self, episode_index: u64) -> f64 {
        let x = (episode_index as f64).clamp(self.index_range.0, self.index_range.1);
        self.expected.predict(x).clamp(-1.0, 1.0)
    }
}

/// Raw score is `rho_expected - rho_current`.
pub fn proxy_opt_score(model: &ProxyOptModel, e: &Episode, threshold_factor: f64) -> DetectorSignal {
    let cat = HackingCategory::ProxyOptimization;
    if e.is_empty() {
        return DetectorSignal::abstain(cat);
    }
    let (current, zero_var) =
        windowed_correlation(&e.proxy_series(), &e.true_series(), model.window, model.stride);
    let delta = model.expected_at(e.episode_index) - current;
    DetectorSignal::new(cat, delta, model.delta_threshold * threshold_factor)
        .with_warning((zero_var > 0).then_some(SignalWarning::ZeroVarianceWindows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::pearson;

    #[test]
    fn matches_batch_windows() {
        let p: Vec<f64> = (0..130).map(|i| ((i * 37) % 11) as f64).collect();
        let t: Vec<f64> = (0..130).map(|i| ((i * 13) % 7) as f64 + 0.1 * i as f64).collect();
        let (r, zv) = windowed_correlation(&p, &t, 50, 25);
        let starts = [0usize, 25, 50, 75];
        let expect: f64 = starts
            .iter()
            .map(|&s| pearson(&p[s..s + 50], &t[s..s + 50]).unwrap())
            .sum::<f64>()
            / 4.0;
        assert_eq!(zv, 0);
        assert!((r - expect).abs() < 1e-9);
    }

    #[test]
    fn short_episode_is_one_window() {
        let p = [1.0, 2.0, 3.0];
        let (r, _) = windowed_correlation(&p, &p, 50, 25);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_window_counts_zero() {
        let (r, zv) = windowed_correlation(&[1.0; 60], &[2.0; 60], 50, 25);
        assert_eq!((r, zv), (0.0, 1));
    }
}
