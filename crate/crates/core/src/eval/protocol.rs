//! End-to-end experiment protocols on generated streams: the synthetic
//! benchmark with its ablation and sensitivity variants, detection
//! latency on sudden-onset streams, the reward-design factorial and the
//! mitigation comparison.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baseline::{RatioBaseline, DEFAULT_RATIO_THRESHOLD};
use super::effects::{factorial_effects, EffectEstimate};
use super::metrics::{brier, cohens_kappa, detection_latency, overhead, DetectionMetrics, Latency};
use crate::detectors::{fit_bundle, DetectorBundle, DetectorConfig};
use crate::ensemble::{classify_emergence, consensus_label, ensemble_calibrate, EmergenceConfig, EmergenceReport, EnsembleModel};
use crate::envgen::{
    factorial_design, generate_stream, mixed_injection, wirehead_registry, EnvFamily, EnvSpec, PlantedEffects, Policy,
    RewardDesign, StreamConfig,
};
use crate::episode::{Episode, HackingCategory, TemporalPattern};
use crate::error::{Error, Result};
use crate::mitigation::{apply_mitigation, evaluate_mitigation, MitigationEffect, MitigationSpec, StreamOutcome, Technique};
use crate::signal::DetectorSignal;
use crate::stats::SplitMix64;

/// Runs `f` on a dedicated pool of `jobs` workers.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

fn equal_shares() -> Vec<(HackingCategory, f64)> {
    HackingCategory::ALL.iter().map(|&c| (c, 1.0)).collect()
}

fn default_env() -> EnvSpec {
    EnvSpec::new(EnvFamily::GridWorld, "gridworld-bench")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub env: EnvSpec,
    pub policy: Policy,
    pub n_reference: u64,
    pub n_stream: u64,
    /// Probability that an episode of the stream is injected.
    pub injection_rate: f64,
    pub strength: f64,
    pub shares: Vec<(HackingCategory, f64)>,
    pub onset: TemporalPattern,
    /// Share of the stream used to calibrate the ensemble when `folds` is 1.
    pub calibration_fraction: f64,
    /// 1 for a single seeded split; k >= 2 for k-fold calibration with
    /// every episode evaluated once.
    pub folds: usize,
    pub risk_threshold: f64,
    pub baseline_threshold: f64,
    pub detector: DetectorConfig,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            env: default_env(),
            policy: Policy::GoalSeeker,
            n_reference: 200,
            n_stream: 1000,
            injection_rate: 0.2,
            strength: 1.0,
            shares: equal_shares(),
            onset: TemporalPattern::None,
            calibration_fraction: 0.8,
            folds: 1,
            risk_threshold: crate::ensemble::DEFAULT_RISK_THRESHOLD,
            baseline_threshold: DEFAULT_RATIO_THRESHOLD,
            detector: DetectorConfig::default(),
            seed: 2024,
        }
    }
}

impl BenchmarkConfig {
    pub fn reference_config(&self) -> StreamConfig {
        StreamConfig::new(self.env.clone(), self.n_reference, SplitMix64::derive(self.seed, &[1]).next_u64(), self.policy)
    }

    pub fn stream_config(&self) -> StreamConfig {
        StreamConfig::new(self.env.clone(), self.n_stream, SplitMix64::derive(self.seed, &[2]).next_u64(), self.policy)
            .with_injection(mixed_injection(self.injection_rate, &self.shares, self.strength, self.onset))
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return Err(Error::Config("calibration_fraction must be in (0, 1)".into()));
        }
        if !(self.risk_threshold > 0.0 && self.risk_threshold < 1.0) {
            return Err(Error::Config("risk_threshold must be in (0, 1)".into()));
        }
        if self.shares.is_empty() || self.shares.iter().any(|s| !(s.1 >= 0.0)) || self.shares.iter().all(|s| s.1 == 0.0) {
            return Err(Error::Config("shares must be non-negative with a positive total".into()));
        }
        self.reference_config().validate()?;
        self.stream_config().validate()
    }
}

/// A stream with its detector signals, scored once and re-used by every
/// ensemble variant.
#[derive(Debug, Clone)]
pub struct ScoredStream {
    pub labels: Vec<bool>,
    pub categories: Vec<Option<HackingCategory>>,
    pub episode_index: Vec<u64>,
    /// Signals with pre-calibration (min-max) confidences.
    pub signals: Vec<Vec<DetectorSignal>>,
    pub baseline_scores: Vec<f64>,
    pub baseline_flags: Vec<bool>,
    pub generate_seconds: f64,
    pub detect_seconds: f64,
}

impl ScoredStream {
    pub fn score(bundle: &DetectorBundle, baseline: &RatioBaseline, cfg: &StreamConfig) -> Result<Self> {
        let t0 = Instant::now();
        let episodes = generate_stream(cfg)?;
        let generate_seconds = t0.elapsed().as_secs_f64();
        Ok(Self::from_episodes(bundle, baseline, &episodes, generate_seconds))
    }

    pub fn from_episodes(bundle: &DetectorBundle, baseline: &RatioBaseline, episodes: &[Episode], generate_seconds: f64) -> Self {
        let t0 = Instant::now();
        let signals: Vec<Vec<DetectorSignal>> = episodes.par_iter().map(|e| bundle.signals(e)).collect();
        let detect_seconds = t0.elapsed().as_secs_f64();
        ScoredStream {
            labels: episodes.iter().map(Episode::is_hacking).collect(),
            categories: episodes.iter().map(|e| e.label.as_ref().and_then(|l| l.category)).collect(),
            episode_index: episodes.iter().map(|e| e.episode_index).collect(),
            signals,
            baseline_scores: episodes.iter().map(|e| baseline.score(e)).collect(),
            baseline_flags: episodes.iter().map(|e| baseline.flag(e)).collect(),
            generate_seconds,
            detect_seconds,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Same stream with each detector's flag recomputed from the bundle's
    /// thresholds, for threshold sweeps that leave raw scores unchanged.
    fn rescored(&self, bundle: &DetectorBundle, episodes: &[Episode]) -> Self {
        let signals = episodes.par_iter().map(|e| bundle.signals(e)).collect();
        ScoredStream { signals, ..self.clone() }
    }
}

/// Calibration and evaluation index sets.
pub fn folds(n: usize, k: usize, calibration_fraction: f64, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::derive(seed, &[0xF01D]).shuffle(&mut order);
    if k <= 1 {
        let cut = ((n as f64) * calibration_fraction).round() as usize;
        let mut cal = order[..cut].to_vec();
        let mut eval = order[cut..].to_vec();
        cal.sort_unstable();
        eval.sort_unstable();
        return vec![(cal, eval)];
    }
    (0..k)
        .map(|f| {
            let (mut cal, mut eval) = (vec![], vec![]);
            for (pos, &i) in order.iter().enumerate() {
                if pos % k == f {
                    eval.push(i);
                } else {
                    cal.push(i);
                }
            }
            cal.sort_unstable();
            eval.sort_unstable();
            (cal, eval)
        })
        .collect()
}

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub label: bool,
    pub risk: f64,
    pub uncalibrated_risk: f64,
    pub flagged: bool,
    pub consensus: bool,
}

/// The calibrated models of each fold and the pooled held-out records.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub models: Vec<EnsembleModel>,
    pub folds: Vec<(Vec<usize>, Vec<usize>)>,
    pub records: Vec<EvalRecord>,
}

fn uncalibrated_risk(signals: &[DetectorSignal]) -> f64 {
    let live: Vec<f64> = signals.iter().filter(|s| !s.abstained).map(|s| s.calibrated_confidence).collect();
    if live.is_empty() {
        0.0
    } else {
        live.iter().sum::<f64>() / live.len() as f64
    }
}

/// Calibrates on each fold's calibration set and evaluates on its held-out
/// set. `variant` may alter each calibrated model (e.g. drop a detector).
pub fn evaluate_folds(
    scored: &ScoredStream,
    splits: &[(Vec<usize>, Vec<usize>)],
    risk_threshold: f64,
    variant: impl Fn(EnsembleModel) -> EnsembleModel,
) -> Result<Evaluation> {
    let mut models = Vec::with_capacity(splits.len());
    let mut records = Vec::with_capacity(scored.len());
    for (cal, eval) in splits {
        let sig: Vec<Vec<DetectorSignal>> = cal.iter().map(|&i| scored.signals[i].clone()).collect();
        let lab: Vec<bool> = cal.iter().map(|&i| scored.labels[i]).collect();
        let model = variant(ensemble_calibrate(&sig, &lab)?.with_risk_threshold(risk_threshold)?);
        for &i in eval {
            let risk = model.risk(&scored.signals[i]);
            records.push(EvalRecord {
                index: i,
                label: scored.labels[i],
                risk,
                uncalibrated_risk: uncalibrated_risk(&scored.signals[i]),
                flagged: risk > model.risk_threshold,
                consensus: consensus_label(&scored.signals[i]),
            });
        }
        models.push(model);
    }
    records.sort_by_key(|r| r.index);
    Ok(Evaluation { models, folds: splits.to_vec(), records })
}

impl Evaluation {
    pub fn metrics(&self) -> Result<DetectionMetrics> {
        let pred: Vec<bool> = self.records.iter().map(|r| r.flagged).collect();
        let scores: Vec<f64> = self.records.iter().map(|r| r.risk).collect();
        let labels = self.labels();
        let mut m = DetectionMetrics::from_scores(&pred, &scores, &labels)?;
        m.brier = Some(brier(&scores, &labels)?);
        Ok(m)
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn uncalibrated_brier(&self) -> Result<f64> {
        let p: Vec<f64> = self.records.iter().map(|r| r.uncalibrated_risk).collect();
        brier(&p, &self.labels())
    }

    /// Agreement between ensemble flags and the three-of-six consensus.
    pub fn consensus_kappa(&self) -> Result<f64> {
        let a: Vec<bool> = self.records.iter().map(|r| r.flagged).collect();
        let b: Vec<bool> = self.records.iter().map(|r| r.consensus).collect();
        cohens_kappa(&a, &b)
    }

    /// Flagged count and precision at each risk threshold.
    pub fn threshold_sweep(&self, thresholds: &[f64]) -> Vec<ThresholdPoint> {
        thresholds
            .iter()
            .map(|&t| {
                let flagged: Vec<&EvalRecord> = self.records.iter().filter(|r| r.risk > t).collect();
                let tp = flagged.iter().filter(|r| r.label).count();
                let positives = self.records.iter().filter(|r| r.label).count();
                ThresholdPoint {
                    threshold: t,
                    flagged: flagged.len(),
                    precision: if flagged.is_empty() { 0.0 } else { tp as f64 / flagged.len() as f64 },
                    recall: if positives == 0 { 0.0 } else { tp as f64 / positives as f64 },
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub flagged: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Detectors, baseline and the scored benchmark stream.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub config: BenchmarkConfig,
    pub bundle: DetectorBundle,
    pub baseline: RatioBaseline,
    pub episodes: Vec<Episode>,
    pub scored: ScoredStream,
    pub splits: Vec<(Vec<usize>, Vec<usize>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub ensemble: DetectionMetrics,
    pub uncalibrated_brier: f64,
    pub baseline: DetectionMetrics,
    /// Native-threshold metrics of each detector on the held-out episodes.
    pub detectors: Vec<(HackingCategory, DetectionMetrics)>,
    pub consensus_kappa: f64,
    pub sweep: Vec<ThresholdPoint>,
    pub weights: Vec<f64>,
}

impl Benchmark {
    /// Generates references and stream, fits the detectors and scores the
    /// stream on `jobs` workers.
    pub fn prepare(cfg: &BenchmarkConfig, jobs: usize) -> Result<Self> {
        cfg.validate()?;
        let ref_cfg = cfg.reference_config();
        let stream_cfg = cfg.stream_config();
        with_jobs(jobs, || {
            let refs = generate_stream(&ref_cfg)?;
            let bundle = fit_bundle(&refs, &cfg.detector, wirehead_registry([&ref_cfg, &stream_cfg]))?;
            let baseline = RatioBaseline::fit(&refs, cfg.baseline_threshold)?;
            let t0 = Instant::now();
            let episodes = generate_stream(&stream_cfg)?;
            let gen = t0.elapsed().as_secs_f64();
            let scored = ScoredStream::from_episodes(&bundle, &baseline, &episodes, gen);
            let splits = folds(scored.len(), cfg.folds, cfg.calibration_fraction, cfg.seed);
            Ok(Benchmark { config: cfg.clone(), bundle, baseline, episodes, scored, splits })
        })?
    }

    pub fn evaluate(&self) -> Result<Evaluation> {
        evaluate_folds(&self.scored, &self.splits, self.config.risk_threshold, |m| m)
    }

    pub fn overhead_pct(&self) -> Result<f64> {
        overhead(self.scored.generate_seconds, self.scored.detect_seconds)
    }

    pub fn report(&self) -> Result<BenchmarkReport> {
        let ev = self.evaluate()?;
        let mut ensemble = ev.metrics()?;
        ensemble.overhead_pct = self.overhead_pct().ok();
        let held: Vec<usize> = ev.records.iter().map(|r| r.index).collect();
        let labels = ev.labels();
        let sub = |f: &dyn Fn(usize) -> bool| -> Vec<bool> { held.iter().map(|&i| f(i)).collect() };
        let subf = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { held.iter().map(|&i| f(i)).collect() };
        let baseline = DetectionMetrics::from_scores(
            &sub(&|i| self.scored.baseline_flags[i]),
            &subf(&|i| self.scored.baseline_scores[i]),
            &labels,
        )?;
        let detectors = HackingCategory::ALL
            .iter()
            .map(|&c| {
                let d = c.index();
                let m = DetectionMetrics::from_scores(
                    &sub(&|i| self.scored.signals[i][d].flagged),
                    &subf(&|i| self.scored.signals[i][d].raw_score),
                    &labels,
                )?;
                Ok((c, m))
            })
            .collect::<Result<Vec<_>>>()?;
        let thresholds: Vec<f64> = (1..=9).map(|k| f64::from(k) / 10.0).collect();
        Ok(BenchmarkReport {
            ensemble,
            uncalibrated_brier: ev.uncalibrated_brier()?,
            baseline,
            detectors,
            consensus_kappa: ev.consensus_kappa()?,
            sweep: ev.threshold_sweep(&thresholds),
            weights: ev.models[0].weights.clone(),
        })
    }

    /// Full ensemble followed by each single-detector removal.
    pub fn ablation(&self) -> Result<Vec<AblationRow>> {
        let full = self.evaluate()?.metrics()?;
        let mut rows = vec![AblationRow { removed: None, metrics: full, f1_drop: 0.0 }];
        for c in HackingCategory::ALL {
            let m = evaluate_folds(&self.scored, &self.splits, self.config.risk_threshold, |m| m.without(&[c]))?
                .metrics()?;
            rows.push(AblationRow { removed: Some(c), f1_drop: full.f1 - m.f1, metrics: m });
        }
        Ok(rows)
    }

    /// Ensemble metrics over the full grid of published detector
    /// thresholds; the ensemble is recalibrated at every grid point.
    pub fn sensitivity(&self, grid: &SensitivityGrid, jobs: usize) -> Result<Vec<SensitivityRow>> {
        let points = grid.points();
        with_jobs(jobs, || {
            points
                .iter()
                .map(|&(tau, delta, gamma, ppl)| {
                    let b = self.bundle.with_thresholds(tau, delta, gamma, ppl)?;
                    let scored = self.scored.rescored(&b, &self.episodes);
                    let m = evaluate_folds(&scored, &self.splits, self.config.risk_threshold, |m| m)?.metrics()?;
                    Ok(SensitivityRow { tau_spec: tau, delta_rho: delta, contamination: gamma, ppl_mult: ppl, metrics: m })
                })
                .collect()
        })?
    }
}

pub fn run_benchmark(cfg: &BenchmarkConfig, jobs: usize) -> Result<(Benchmark, BenchmarkReport)> {
    let b = Benchmark::prepare(cfg, jobs)?;
    let r = b.report()?;
    Ok((b, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub removed: Option<HackingCategory>,
    pub metrics: DetectionMetrics,
    pub f1_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityGrid {
    pub tau_spec: Vec<f64>,
    pub delta_rho: Vec<f64>,
    pub contamination: Vec<f64>,
    pub ppl_mult: Vec<f64>,
}

impl Default for SensitivityGrid {
    fn default() -> Self {
        SensitivityGrid {
            tau_spec: vec![0.2, 0.3, 0.4],
            delta_rho: vec![0.3, 0.5, 0.7],
            contamination: vec![0.05, 0.1, 0.15],
            ppl_mult: vec![1.5, 2.0, 2.5],
        }
    }
}

impl SensitivityGrid {
    pub fn points(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut out = vec![];
        for &t in &self.tau_spec {
            for &d in &self.delta_rho {
                for &g in &self.contamination {
                    for &p in &self.ppl_mult {
                        out.push((t, d, g, p));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub tau_spec: f64,
    pub delta_rho: f64,
    pub contamination: f64,
    pub ppl_mult: f64,
    pub metrics: DetectionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    pub n_streams: u64,
    pub n_episodes: u64,
    pub injection_rate: f64,
    pub seed: u64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig { n_streams: 10, n_episodes: 400, injection_rate: 0.2, seed: 77 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyReport {
    pub latency: Latency,
    /// Per stream: first labeled hacking episode and first flag at or
    /// after it.
    pub streams: Vec<(Option<u64>, Option<u64>)>,
    pub emergence: Vec<EmergenceReport>,
}

impl Benchmark {
    /// Sudden-onset streams in the benchmark environment, scored with the
    /// first fold's calibrated ensemble. Onset is the first labeled hacking
    /// episode; detection is the first flag at or after it.
    pub fn latency(&self, cfg: &LatencyConfig, jobs: usize) -> Result<LatencyReport> {
        let model = self.evaluate()?.models.swap_remove(0);
        let emergence_cfg = EmergenceConfig::default();
        let per_stream = with_jobs(jobs, || {
            (0..cfg.n_streams)
                .map(|k| {
                    let sc = StreamConfig::new(
                        self.config.env.clone(),
                        cfg.n_episodes,
                        SplitMix64::derive(cfg.seed, &[k]).next_u64(),
                        self.config.policy,
                    )
                    .with_injection(mixed_injection(
                        cfg.injection_rate,
                        &self.config.shares,
                        self.config.strength,
                        TemporalPattern::SuddenOnset,
                    ));
                    let episodes = generate_stream(&sc)?;
                    let flags: Vec<bool> = episodes.par_iter().map(|e| model.risk(&self.bundle.signals(e)) > model.risk_threshold).collect();
                    let onset = episodes.iter().position(Episode::is_hacking);
                    let first = onset.and_then(|o| (o..flags.len()).find(|&i| flags[i]));
                    let pairs: Vec<(u64, bool)> = episodes.iter().map(|e| e.episode_index).zip(flags).collect();
                    Ok(((onset.map(|o| o as u64), first.map(|f| f as u64)), classify_emergence(&pairs, &emergence_cfg)))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let (streams, emergence): (Vec<_>, Vec<_>) = per_stream.into_iter().unzip();
        let known: Vec<&(Option<u64>, Option<u64>)> = streams.iter().filter(|s| s.0.is_some()).collect();
        let onsets: Vec<u64> = known.iter().filter_map(|s| s.0).collect();
        let firsts: Vec<Option<u64>> = known.iter().map(|s| s.1).collect();
        Ok(LatencyReport { latency: detection_latency(&onsets, &firsts)?, streams, emergence })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorialConfig {
    pub families: Vec<EnvFamily>,
    pub runs_per_cell: u32,
    pub n_episodes: u64,
    pub max_steps: u32,
    pub replications: u32,
    pub policy: Policy,
    pub effects: PlantedEffects,
    pub seed: u64,
}

impl Default for FactorialConfig {
    fn default() -> Self {
        FactorialConfig {
            families: vec![EnvFamily::GridWorld, EnvFamily::RecSys],
            runs_per_cell: 40,
            n_episodes: 100,
            max_steps: 200,
            replications: 20,
            policy: Policy::GoalSeeker,
            effects: PlantedEffects::default(),
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorialReport {
    /// Effect estimates of each replication.
    pub replications: Vec<Vec<EffectEstimate>>,
    /// Mean hacking frequency and run count of each cell over all
    /// replications.
    pub cells: Vec<(RewardDesign, f64, usize)>,
    pub planted: PlantedEffects,
}

impl FactorialReport {
    /// Planted value of each estimated factor, in estimate order.
    pub fn planted_values(&self) -> [f64; 6] {
        let e = &self.planted;
        [e.density, e.alignment, e.complexity, e.density_alignment, e.density_complexity, e.alignment_complexity]
            .map(|v| v * e.scale)
    }
}

/// Hacking frequency of a run is its labeled fraction of hacked episodes.
pub fn run_factorial(cfg: &FactorialConfig, jobs: usize) -> Result<FactorialReport> {
    if cfg.families.is_empty() {
        return Err(Error::Config("factorial needs at least one environment family".into()));
    }
    let envs: Vec<EnvSpec> = cfg
        .families
        .iter()
        .map(|&f| EnvSpec::new(f, format!("{}-factorial", f.name())).with_max_steps(cfg.max_steps))
        .collect();
    let replications = with_jobs(jobs, || {
        (0..cfg.replications)
            .map(|r| {
                let seed = SplitMix64::derive(cfg.seed, &[u64::from(r)]).next_u64();
                let runs = factorial_design(&envs, cfg.runs_per_cell / envs.len().max(1) as u32, cfg.n_episodes, cfg.policy, &cfg.effects, seed)?;
                let freqs: Vec<(RewardDesign, f64)> = runs
                    .par_iter()
                    .map(|run| {
                        let eps = generate_stream(&run.config)?;
                        Ok((run.design, StreamOutcome::measure(&eps, 0.0).hacking_frequency))
                    })
                    .collect::<Result<_>>()?;
                Ok((factorial_effects(&freqs)?, freqs))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let cells = RewardDesign::cells()
        .into_iter()
        .map(|cell| {
            let f: Vec<f64> =
                replications.iter().flat_map(|r| r.1.iter().filter(|x| x.0 == cell).map(|x| x.1)).collect();
            (cell, f.iter().sum::<f64>() / f.len() as f64, f.len())
        })
        .collect();
    let replications = replications.into_iter().map(|r| r.0).collect();
    Ok(FactorialReport { replications, cells, planted: cfg.effects })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigationConfig {
    pub env: EnvSpec,
    pub policy: Policy,
    pub n_episodes: u64,
    pub injection_rate: f64,
    pub techniques: Vec<Technique>,
    pub intensities: Vec<f64>,
    pub seed: u64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            env: default_env(),
            policy: Policy::GoalSeeker,
            n_episodes: 4000,
            injection_rate: 0.4,
            techniques: Technique::ALL.to_vec(),
            intensities: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationRow {
    pub technique: Technique,
    pub intensity: f64,
    pub outcome: StreamOutcome,
    pub effect: MitigationEffect,
    /// Generated episodes are byte-identical to the unmitigated stream.
    pub identical_to_base: bool,
}

pub fn run_mitigation(cfg: &MitigationConfig, jobs: usize) -> Result<Vec<MitigationRow>> {
    let base = StreamConfig::new(cfg.env.clone(), cfg.n_episodes, cfg.seed, cfg.policy)
        .with_injection(mixed_injection(cfg.injection_rate, &equal_shares(), 1.0, TemporalPattern::None));
    with_jobs(jobs, || {
        let t0 = Instant::now();
        let base_eps = generate_stream(&base)?;
        let before = StreamOutcome::measure(&base_eps, t0.elapsed().as_secs_f64());
        let base_bytes = crate::io::episodes_to_bytes(&base_eps);
        let mut rows = vec![];
        for &technique in &cfg.techniques {
            for &intensity in &cfg.intensities {
                let m = MitigationSpec::new(technique, intensity)?;
                let sc = apply_mitigation(&base, &m)?;
                let t0 = Instant::now();
                let eps = generate_stream(&sc)?;
                let outcome = StreamOutcome::measure(&eps, t0.elapsed().as_secs_f64());
                rows.push(MitigationRow {
                    technique,
                    intensity,
                    effect: evaluate_mitigation(&before, &outcome),
                    outcome,
                    identical_to_base: crate::io::episodes_to_bytes(&eps) == base_bytes,
                });
            }
        }
        Ok(rows)
    })?
}
