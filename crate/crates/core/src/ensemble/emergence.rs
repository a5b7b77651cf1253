//! Classifying how hacking flags emerge over a training stream.

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::episode::TemporalPattern;
use crate::stats::theil_sen;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmergenceConfig {
    pub bucket: usize,
    pub low: f64,
    pub high: f64,
    /// Level a sudden onset must hold afterwards.
    pub sustain: f64,
    /// Buckets after a jump that must hold `sustain`.
    pub confirm: usize,
    pub gradual_span: usize,
    pub min_runs: usize,
    pub min_episodes: usize,
}

impl Default for EmergenceConfig {
    fn default() -> Self {
        EmergenceConfig {
            bucket: 25,
            low: 0.2,
            high: 0.6,
            sustain: 0.5,
            confirm: 2,
            gradual_span: 8,
            min_runs: 3,
            min_episodes: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergenceReport {
    pub pattern: TemporalPattern,
    pub onset_episode: Option<u64>,
    pub detection_episode: Option<u64>,
    pub flag_rate_series: Vec<f64>,
}

fn is_sudden(r: &[f64], cfg: &EmergenceConfig) -> bool {
    (1..r.len()).any(|j| {
        if r[j] <= cfg.high {
            return false;
        }
        // the jump may pass through at most one intermediate bucket
        let from_low = r[j - 1] < cfg.low || (j >= 2 && r[j - 2] < cfg.low);
        let held = j + cfg.confirm < r.len() && r[j + 1..=j + cfg.confirm].iter().all(|&x| x >= cfg.sustain);
        from_low && held
    })
}

fn is_gradual(r: &[f64], cfg: &EmergenceConfig) -> bool {
    let Some(top) = r.iter().position(|&x| x > cfg.high) else {
        return false;
    };
    let Some(start) = r[..top].iter().rposition(|&x| x < cfg.low) else {
        return false;
    };
    if top - start < cfg.gradual_span {
        return false;
    }
    let pts: Vec<(f64, f64)> = (start..=top).map(|b| (b as f64, r[b])).collect();
    theil_sen(&pts).map(|f| f.slope > 0.0).unwrap_or(false)
}

fn runs_above(r: &[f64], cfg: &EmergenceConfig) -> usize {
    let mut runs = 0;
    let mut armed = true;
    let mut inside = false;
    for &x in r {
        if x > cfg.sustain {
            if !inside && armed {
                runs += 1;
                armed = false;
            }
            inside = true;
        } else {
            inside = false;
            if x < cfg.low {
                armed = true;
            }
        }
    }
    runs
}

/// Buckets the stream (ordered by episode index) into fixed-size windows
/// and classifies the flag-rate profile. Sudden onset is tested first,
/// then gradual emergence, then intermittency.
pub fn classify_emergence(flags: &[(u64, bool)], cfg: &EmergenceConfig) -> EmergenceReport {
    let mut ordered = flags.to_vec();
    ordered.sort_by_key(|f| f.0);
    let bucket = cfg.bucket.max(1);
    let rates: Vec<f64> = ordered
        .chunks(bucket)
        .map(|c| c.iter().filter(|f| f.1).count() as f64 / c.len() as f64)
        .collect();
    if ordered.len() < cfg.min_episodes {
        warn!("stream of {} episodes is too short to classify", ordered.len());
        return EmergenceReport {
            pattern: TemporalPattern::None,
            onset_episode: None,
            detection_episode: None,
            flag_rate_series: rates,
        };
    }
    let pattern = if is_sudden(&rates, cfg) {
        TemporalPattern::SuddenOnset
    } else if is_gradual(&rates, cfg) {
        TemporalPattern::GradualEmergence
    } else if runs_above(&rates, cfg) >= cfg.min_runs {
        TemporalPattern::Intermittent
    } else {
        TemporalPattern::None
    };
    let onset_bucket = rates.iter().position(|&x| x > cfg.low);
    let onset_episode = onset_bucket.map(|b| ordered[b * bucket].0);
    let detection_episode =
        onset_bucket.and_then(|b| ordered[b * bucket..].iter().find(|f| f.1).map(|f| f.0));
    EmergenceReport { pattern, onset_episode, detection_episode, flag_rate_series: rates }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic flags realising a per-bucket rate profile.
    fn stream(rates: &[f64]) -> Vec<(u64, bool)> {
        let mut out = Vec::new();
        for (b, &r) in rates.iter().enumerate() {
            let k = (r * 25.0).round() as usize;
            for i in 0..25 {
                out.push(((b * 25 + i) as u64, i < k));
            }
        }
        out
    }

    #[test]
    fn step_is_sudden() {
        let mut r = vec![0.0; 12];
        r.extend(vec![0.8; 12]);
        let rep = classify_emergence(&stream(&r), &EmergenceConfig::default());
        assert_eq!(rep.pattern, TemporalPattern::SuddenOnset);
        assert_eq!(rep.onset_episode, Some(300));
        assert_eq!(rep.detection_episode, Some(300));
    }

    #[test]
    fn sigmoid_is_gradual() {
        let r: Vec<f64> = (0..32).map(|b| 0.9 / (1.0 + (-(b as f64 - 16.0) / 4.0).exp())).collect();
        let rep = classify_emergence(&stream(&r), &EmergenceConfig::default());
        assert_eq!(rep.pattern, TemporalPattern::GradualEmergence);
    }

    #[test]
    fn spikes_are_intermittent() {
        let mut r = vec![0.0; 30];
        for b in [3, 9, 15, 21, 27] {
            r[b] = 0.8;
        }
        let rep = classify_emergence(&stream(&r), &EmergenceConfig::default());
        assert_eq!(rep.pattern, TemporalPattern::Intermittent);
    }

    #[test]
    fn flat_is_none() {
        let rep = classify_emergence(&stream(&[0.04; 20]), &EmergenceConfig::default());
        assert_eq!(rep.pattern, TemporalPattern::None);
        assert_eq!(rep.onset_episode, None);
    }

    #[test]
    fn short_stream() {
        let rep = classify_emergence(&stream(&[1.0]), &EmergenceConfig::default());
        assert_eq!(rep.pattern, TemporalPattern::None);
    }
}
