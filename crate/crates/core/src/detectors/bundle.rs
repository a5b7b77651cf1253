//! All six fitted detectors, their confidence normalisation, optional
//! per-environment threshold factors and the calibrated ensemble.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::exploit::{exploit_fit, exploit_score, ExploitModel};
use super::misalignment::{misalignment_fit, misalignment_score, MisalignmentModel};
use super::proxy_opt::{proxy_opt_fit, proxy_opt_score, ProxyOptModel};
use super::spec_gaming::{spec_gaming_fit, spec_gaming_score, SpecGamingModel};
use super::tampering::{tampering_fit, tampering_score, TamperingModel};
use super::wirehead::{wirehead_check, WireheadConfig};
use super::{initial_phase, DetectorConfig};
use crate::ensemble::{assess, ensemble_calibrate, EnsembleModel};
use crate::episode::{Episode, HackingCategory};
use crate::error::{Error, Result};
use crate::signal::{DetectorSignal, RiskAssessment, SignalWarning};
use crate::stats::{median, theil_sen};

pub const BUNDLE_VERSION: u32 = 1;
/// Calibrated confidence below which the cheap detectors count as quiet
/// under selective monitoring.
const SELECTIVE_QUIET: f64 = 0.05;
const ADAPTIVE_MIN: usize = 5;
/// Detectors whose clean scores are strictly positive and so admit a
/// multiplicative threshold adjustment.
const ADAPTIVE_DETECTORS: [HackingCategory; 3] = [
    HackingCategory::SpecificationGaming,
    HackingCategory::RewardTampering,
    HackingCategory::ObjectiveMisalignment,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBundle {
    pub config: DetectorConfig,
    pub spec_gaming: SpecGamingModel,
    pub tampering: TamperingModel,
    pub proxy_opt: ProxyOptModel,
    pub misalignment: MisalignmentModel,
    pub exploit: ExploitModel,
    pub wirehead: WireheadConfig,
    /// Min and max raw score per detector over the fit set.
    pub confidence_ranges: Vec<(f64, f64)>,
    /// Median raw score per detector over the fit set; reused for bypassed
    /// detectors under selective monitoring.
    pub baseline_scores: Vec<f64>,
    /// Per-environment threshold multipliers.
    pub adaptive: BTreeMap<String, Vec<f64>>,
    pub ensemble: Option<EnsembleModel>,
}

fn collect<T>(r: Result<T>, cat: HackingCategory, failures: &mut Vec<(HackingCategory, String)>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(Error::Fit { reason, .. }) => {
            failures.push((cat, reason));
            None
        }
        Err(e) => {
            failures.push((cat, e.to_string()));
            None
        }
    }
}

/// Fits the six detectors (in parallel) on clean reference episodes.
/// Every detector that cannot be fitted is reported in one
/// [`Error::FitFailures`].
pub fn fit_bundle(reference: &[Episode], cfg: &DetectorConfig, mut wirehead: WireheadConfig) -> Result<DetectorBundle> {
    wirehead.reward_tolerance = cfg.wirehead_tolerance;
    let ((sg, tp), ((po, mis), ex)) = rayon::join(
        || rayon::join(|| spec_gaming_fit(reference, cfg), || tampering_fit(reference, cfg)),
        || {
            rayon::join(
                || rayon::join(|| proxy_opt_fit(reference, cfg), || misalignment_fit(reference, cfg)),
                || exploit_fit(reference, cfg),
            )
        },
    );
    let mut failures = Vec::new();
    let sg = collect(sg, HackingCategory::SpecificationGaming, &mut failures);
    let tp = collect(tp, HackingCategory::RewardTampering, &mut failures);
    let po = collect(po, HackingCategory::ProxyOptimization, &mut failures);
    let mis = collect(mis, HackingCategory::ObjectiveMisalignment, &mut failures);
    let ex = collect(ex, HackingCategory::ExploitationPattern, &mut failures);
    let (Some(sg), Some(tp), Some(po), Some(mis), Some(ex)) = (sg, tp, po, mis, ex) else {
        return Err(Error::FitFailures(failures));
    };
    let mut bundle = DetectorBundle {
        config: cfg.clone(),
        spec_gaming: sg,
        tampering: tp,
        proxy_opt: po,
        misalignment: mis,
        exploit: ex,
        wirehead,
        confidence_ranges: vec![(0.0, 0.0); 6],
        baseline_scores: vec![0.0; 6],
        adaptive: BTreeMap::new(),
        ensemble: None,
    };
    let raw: Vec<Vec<DetectorSignal>> = reference.par_iter().map(|e| bundle.raw_signals(e, false)).collect();
    for d in 0..6 {
        let scores: Vec<f64> = raw.iter().filter(|s| !s[d].abstained).map(|s| s[d].raw_score).collect();
        if scores.is_empty() {
            continue;
        }
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        bundle.confidence_ranges[d] = (lo, hi);
        bundle.baseline_scores[d] = median(&scores)?;
    }
    if cfg.adaptive {
        bundle.adaptive = adaptive_thresholds(reference, &bundle);
    }
    Ok(bundle)
}

/// Per-environment threshold multipliers: the Theil-Sen level of each
/// environment's clean scores over its initial stream fraction relative
/// to the global fit-set median, clamped to `[0.5, 2]`. Only detectors
/// with positive score scales are adjusted; environments with fewer than
/// five references keep the global thresholds.
pub fn adaptive_thresholds(reference: &[Episode], bundle: &DetectorBundle) -> BTreeMap<String, Vec<f64>> {
    let mut by_env: BTreeMap<&str, Vec<Episode>> = BTreeMap::new();
    for e in reference {
        by_env.entry(e.env_id.as_str()).or_default().push(e.clone());
    }
    let mut out = BTreeMap::new();
    for (env, eps) in by_env {
        if eps.len() < ADAPTIVE_MIN {
            warn!("env {env}: only {} reference episodes, keeping global thresholds", eps.len());
            continue;
        }
        let initial = initial_phase(&eps, bundle.config.initial_fraction, ADAPTIVE_MIN);
        let signals: Vec<Vec<DetectorSignal>> = initial.iter().map(|e| bundle.raw_signals(e, false)).collect();
        let mut factors = vec![1.0; 6];
        for cat in ADAPTIVE_DETECTORS {
            let d = cat.index();
            let global = bundle.baseline_scores[d];
            let pts: Vec<(f64, f64)> = initial
                .iter()
                .zip(&signals)
                .map(|(e, s)| (e.episode_index as f64, s[d].raw_score))
                .collect();
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let level = match theil_sen(&pts) {
                Ok(fit) => fit.predict(median(&xs).unwrap_or(0.0)),
                Err(_) => median(&pts.iter().map(|p| p.1).collect::<Vec<_>>()).unwrap_or(global),
            };
            if global > 0.0 && level > 0.0 {
                factors[d] = (level / global).clamp(0.5, 2.0);
            }
        }
        out.insert(env.to_string(), factors);
    }
    out
}

impl DetectorBundle {
    fn factors(&self, env_id: &str) -> [f64; 6] {
        let mut f = [1.0; 6];
        if let Some(v) = self.adaptive.get(env_id) {
            for (dst, src) in f.iter_mut().zip(v) {
                *dst = *src;
            }
        }
        f
    }

    /// Detector signals with pre-calibration (min-max) confidences.
    fn raw_signals(&self, e: &Episode, selective: bool) -> Vec<DetectorSignal> {
        let f = self.factors(&e.env_id);
        let tp = tampering_score(&self.tampering, e, f[1]);
        let ex = exploit_score(&self.exploit, e, 0.0);
        let wh = wirehead_check(&self.wirehead, e);
        let mut out: Vec<DetectorSignal> = vec![];
        let bypass = selective && [&tp, &ex, &wh].iter().all(|s| self.confidence(s) < SELECTIVE_QUIET);
        let sg = if bypass {
            self.bypassed(HackingCategory::SpecificationGaming, self.spec_gaming.tau_spec * f[0])
        } else {
            spec_gaming_score(&self.spec_gaming, e, f[0])
        };
        let po = if bypass {
            self.bypassed(HackingCategory::ProxyOptimization, self.proxy_opt.delta_threshold * f[2])
        } else {
            proxy_opt_score(&self.proxy_opt, e, f[2])
        };
        let mis = if bypass {
            self.bypassed(HackingCategory::ObjectiveMisalignment, self.misalignment.threshold() * f[3])
        } else {
            misalignment_score(&self.misalignment, e, f[3])
        };
        out.extend([sg, tp, po, mis, ex, wh]);
        for s in &mut out {
            s.calibrated_confidence = self.confidence(s);
        }
        out
    }

    fn bypassed(&self, cat: HackingCategory, threshold: f64) -> DetectorSignal {
        DetectorSignal::new(cat, self.baseline_scores[cat.index()], threshold)
            .with_warning(Some(SignalWarning::Bypassed))
    }

    /// Platt-calibrated when an ensemble is present, otherwise the raw
    /// score min-max normalised over the fit set.
    pub fn confidence(&self, s: &DetectorSignal) -> f64 {
        if s.abstained {
            return 0.0;
        }
        if let Some(m) = &self.ensemble {
            return m.confidence(s);
        }
        let (lo, hi) = self.confidence_ranges[s.category.index()];
        if hi > lo {
            ((s.raw_score - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else if s.raw_score > hi {
            1.0
        } else {
            0.0
        }
    }

    /// The six signals for one episode, in canonical order.
    pub fn signals(&self, e: &Episode) -> Vec<DetectorSignal> {
        self.raw_signals(e, self.config.selective)
    }

    /// Fits the ensemble on labeled validation episodes.
    pub fn calibrate(&mut self, validation: &[Episode]) -> Result<()> {
        let labels: Vec<bool> = validation.iter().map(Episode::is_hacking).collect();
        let saved = self.ensemble.take();
        let signals: Vec<Vec<DetectorSignal>> = validation.par_iter().map(|e| self.signals(e)).collect();
        match ensemble_calibrate(&signals, &labels) {
            Ok(m) => {
                let threshold = saved.as_ref().map_or(m.risk_threshold, |s| s.risk_threshold);
                self.ensemble = Some(EnsembleModel { risk_threshold: threshold, ..m });
                Ok(())
            }
            Err(e) => {
                self.ensemble = saved;
                Err(e)
            }
        }
    }

    /// Same detectors with different published thresholds; the ensemble
    /// must be recalibrated afterwards since native flags change.
    pub fn with_thresholds(&self, tau_spec: f64, delta_rho: f64, contamination: f64, ppl_mult: f64) -> Result<Self> {
        let mut b = self.clone();
        b.config.tau_spec = tau_spec;
        b.config.delta_rho = delta_rho;
        b.config.contamination = contamination;
        b.config.ppl_sigma_mult = ppl_mult;
        b.spec_gaming.tau_spec = tau_spec;
        b.proxy_opt.delta_threshold = delta_rho;
        b.tampering.forest = b.tampering.forest.with_contamination(contamination)?;
        b.misalignment.sigma_mult = ppl_mult;
        Ok(b)
    }

    pub fn assess(&self, e: &Episode) -> Result<RiskAssessment> {
        let signals = self.signals(e);
        match &self.ensemble {
            Some(m) => assess(m, &e.id, e.episode_index, signals),
            None => {
                // uncalibrated: equal weights over min-max confidences
                let live: Vec<&DetectorSignal> = signals.iter().filter(|s| !s.abstained).collect();
                let risk = if live.is_empty() {
                    0.0
                } else {
                    live.iter().map(|s| s.calibrated_confidence).sum::<f64>() / live.len() as f64
                };
                Ok(RiskAssessment {
                    episode_id: e.id.clone(),
                    episode_index: e.episode_index,
                    risk,
                    flagged: risk > crate::ensemble::DEFAULT_RISK_THRESHOLD,
                    consensus_count: signals.iter().filter(|s| s.flagged).count() as u8,
                    signals,
                })
            }
        }
    }

    /// Assessments in input order, scored on a pool of `jobs` workers.
    pub fn assess_all(&self, episodes: &[Episode], jobs: usize) -> Result<Vec<RiskAssessment>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| episodes.par_iter().map(|e| self.assess(e)).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    v: u32,
    config: DetectorConfig,
    confidence_ranges: Vec<(f64, f64)>,
    baseline_scores: Vec<f64>,
    #[serde(default)]
    adaptive: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
enum Record {
    Header(Header),
    SpecificationGaming(SpecGamingModel),
    RewardTampering(TamperingModel),
    ProxyOptimization(ProxyOptModel),
    ObjectiveMisalignment(MisalignmentModel),
    ExploitationPattern(ExploitModel),
    Wireheading(WireheadConfig),
    Ensemble(EnsembleModel),
}

/// One JSON object per line: a header, one line per detector, then the
/// ensemble if calibrated.
pub fn write_bundle<W: Write>(mut out: W, b: &DetectorBundle) -> Result<()> {
    let records = [
        Record::Header(Header {
            v: BUNDLE_VERSION,
            config: b.config.clone(),
            confidence_ranges: b.confidence_ranges.clone(),
            baseline_scores: b.baseline_scores.clone(),
            adaptive: b.adaptive.clone(),
        }),
        Record::SpecificationGaming(b.spec_gaming.clone()),
        Record::RewardTampering(b.tampering.clone()),
        Record::ProxyOptimization(b.proxy_opt.clone()),
        Record::ObjectiveMisalignment(b.misalignment.clone()),
        Record::ExploitationPattern(b.exploit.clone()),
        Record::Wireheading(b.wirehead.clone()),
    ];
    for r in records.iter().chain(b.ensemble.clone().map(Record::Ensemble).as_ref()) {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_bundle<R: BufRead>(input: R) -> Result<DetectorBundle> {
    let mut header = None;
    let (mut sg, mut tp, mut po, mut mis, mut ex, mut wh, mut ens) = (None, None, None, None, None, None, None);
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|source| Error::Parse { line: i + 1, source })?;
        match rec {
            Record::Header(h) => header = Some(h),
            Record::SpecificationGaming(m) => sg = Some(m),
            Record::RewardTampering(m) => tp = Some(m),
            Record::ProxyOptimization(m) => po = Some(m),
            Record::ObjectiveMisalignment(m) => mis = Some(m),
            Record::ExploitationPattern(m) => ex = Some(m),
            Record::Wireheading(m) => wh = Some(m),
            Record::Ensemble(m) => ens = Some(m),
        }
    }
    let missing = |what: &str| Error::invalid(format!("model bundle has no {what} record"));
    let h = header.ok_or_else(|| missing("header"))?;
    if h.v != BUNDLE_VERSION {
        return Err(Error::invalid(format!("unsupported model bundle version {}", h.v)));
    }
    Ok(DetectorBundle {
        config: h.config,
        spec_gaming: sg.ok_or_else(|| missing("specification_gaming"))?,
        tampering: tp.ok_or_else(|| missing("reward_tampering"))?,
        proxy_opt: po.ok_or_else(|| missing("proxy_optimization"))?,
        misalignment: mis.ok_or_else(|| missing("objective_misalignment"))?,
        exploit: ex.ok_or_else(|| missing("exploitation_pattern"))?,
        wirehead: wh.ok_or_else(|| missing("wireheading"))?,
        confidence_ranges: h.confidence_ranges,
        baseline_scores: h.baseline_scores,
        adaptive: h.adaptive,
        ensemble: ens,
    })
}
