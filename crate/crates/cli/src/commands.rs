use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use hackwatch::detectors::{fit_bundle, read_bundle, write_bundle, DetectorBundle, WireheadConfig};
use hackwatch::envgen::{generate_stream, wirehead_registry};
use hackwatch::eval::{
    folds, roc_curve, roc_svg, run_factorial, run_mitigation, scatter_svg, series_svg, write_ablation_csv,
    write_cells_csv, write_factorial_csv, write_metrics_csv, write_mitigation_rows_csv,
    write_sensitivity_csv, write_sweep_csv, Benchmark, DetectionMetrics, EvalRecord, Evaluation, RocPoint,
};
use hackwatch::io::{episodes_to_bytes, read_episodes};
use hackwatch::mitigation::Technique;
use hackwatch::{Episode, Error, HackingCategory, RiskAssessment};
use tracing::{info, warn};

use crate::config::{load, ExperimentConfig, FitConfig, GenerateConfig};
use crate::manifest::{manifest_for, Run};
use crate::{CliError, ExperimentKind};

/// Smallest validation set on which the ensemble is calibrated.
const MIN_VALIDATION: usize = 20;
const SWEEP: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn data_err(e: Error) -> CliError {
    match e {
        Error::Config(m) => CliError::Config(m),
        Error::Io(e) => CliError::Io(e.to_string()),
        e => CliError::Data(e.to_string()),
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> hackwatch::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(data_err)?;
    Ok(buf)
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_log(path: &Path) -> Result<Vec<Episode>, CliError> {
    let eps = read_episodes(open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if eps.is_empty() {
        return Err(CliError::Empty(format!("{} contains no episodes", path.display())));
    }
    Ok(eps)
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).expect("serializable");
        out.push(b'\n');
    }
    out
}

pub fn generate(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg: GenerateConfig = load(config)?;
    cfg.validate()?;
    let mut run = Run::new("generate", &cfg, cfg.streams.first().map(|s| s.seed));
    run.input(config);
    let mut episodes = Vec::new();
    for s in &cfg.streams {
        let eps = generate_stream(s).map_err(data_err)?;
        info!(env = %s.env.env_id, episodes = eps.len(), "generated stream");
        episodes.extend(eps);
    }
    run.phase("generate");
    run.measure("episodes", episodes.len() as f64);
    run.measure("hacking_episodes", episodes.iter().filter(|e| e.is_hacking()).count() as f64);
    run.output(out, &episodes_to_bytes(&episodes))?;
    run.phase("write");
    run.finish(&manifest_for(out))
}

pub struct FitArgs<'a> {
    pub log: &'a Path,
    pub out: &'a Path,
    pub registry: Option<&'a Path>,
    pub detector: Option<&'a Path>,
    pub seed: Option<u64>,
}

pub fn fit(a: FitArgs<'_>) -> Result<(), CliError> {
    let mut cfg: FitConfig = match a.detector {
        Some(p) => load(p)?,
        None => FitConfig::default(),
    };
    cfg.validate()?;
    if let Some(s) = a.seed {
        cfg.detector.seed = s;
    }
    let wirehead = match a.registry {
        Some(p) => {
            let g: GenerateConfig = load(p)?;
            g.validate()?;
            wirehead_registry(&g.streams)
        }
        None => WireheadConfig::default(),
    };
    if wirehead.envs.is_empty() {
        warn!("no environment registry given; the wireheading detector will abstain");
    }

    let mut run = Run::new("fit", &cfg, Some(cfg.detector.seed));
    run.input(a.log);
    a.registry.inspect(|p| run.input(p));
    a.detector.inspect(|p| run.input(p));
    let episodes = read_log(a.log)?;
    run.phase("read");

    let clean: Vec<usize> = (0..episodes.len()).filter(|&i| !episodes[i].is_hacking()).collect();
    let (train, held) = folds(clean.len(), 1, 0.8, cfg.detector.seed).swap_remove(0);
    let reference: Vec<Episode> = train.iter().map(|&k| episodes[clean[k]].clone()).collect();
    let mut validation: Vec<Episode> = held.iter().map(|&k| episodes[clean[k]].clone()).collect();
    validation.extend(episodes.iter().filter(|e| e.is_hacking()).cloned());
    info!(reference = reference.len(), validation = validation.len(), "split log");

    let mut bundle = fit_bundle(&reference, &cfg.detector, wirehead).map_err(data_err)?;
    run.phase("fit");
    let hacked = validation.iter().filter(|e| e.is_hacking()).count();
    if validation.len() < MIN_VALIDATION || hacked == 0 || hacked == validation.len() {
        warn!(
            validation = validation.len(),
            hacked, "validation split needs both clean and hacked episodes; ensemble left uncalibrated"
        );
    } else if let Err(e) = bundle.calibrate(&validation) {
        warn!("ensemble calibration failed: {e}; ensemble left uncalibrated");
    }
    run.phase("calibrate");

    let mut bytes = Vec::new();
    write_bundle(&mut bytes, &bundle).map_err(data_err)?;
    run.output(a.out, &bytes)?;
    run.finish(&manifest_for(a.out))
}

pub struct DetectArgs<'a> {
    pub model: &'a Path,
    pub log: &'a Path,
    pub out: &'a Path,
    pub risk_threshold: Option<f64>,
    pub selective: bool,
    pub jobs: usize,
}

pub fn detect(a: DetectArgs<'_>) -> Result<(), CliError> {
    if let Some(t) = a.risk_threshold {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::Config(format!("--risk-threshold must lie in (0, 1), got {t}")));
        }
    }
    let mut bundle: DetectorBundle =
        read_bundle(open(a.model)?).map_err(|e| CliError::Data(format!("{}: {e}", a.model.display())))?;
    bundle.config.selective |= a.selective;
    if let (Some(t), Some(m)) = (a.risk_threshold, bundle.ensemble.take()) {
        bundle.ensemble = Some(m.with_risk_threshold(t).map_err(data_err)?);
    }
    let settings = (a.risk_threshold, a.selective);
    let mut run = Run::new("detect", &settings, None);
    run.input(a.model);
    run.input(a.log);
    let episodes = read_log(a.log)?;
    run.phase("read");

    let mut assessments = bundle.assess_all(&episodes, a.jobs).map_err(data_err)?;
    if let Some(t) = a.risk_threshold {
        for r in &mut assessments {
            r.flagged = r.risk > t;
        }
    }
    run.phase("detect");
    let flagged = assessments.iter().filter(|r| r.flagged).count();
    info!(episodes = assessments.len(), flagged, "scored log");
    run.output(a.out, &jsonl(&assessments))?;
    run.finish(&manifest_for(a.out))
}

pub struct ExperimentArgs<'a> {
    pub kind: ExperimentKind,
    pub config: Option<&'a Path>,
    pub out: &'a Path,
    pub jobs: usize,
    pub folds: Option<usize>,
    pub mitigation: Option<Technique>,
    pub intensity: Option<f64>,
}

pub fn experiment(a: ExperimentArgs<'_>) -> Result<(), CliError> {
    let mut cfg: ExperimentConfig = match a.config {
        Some(p) => load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = a.folds {
        cfg.benchmark.folds = k;
    }
    if let Some(t) = a.mitigation {
        cfg.mitigation.techniques = vec![t];
    }
    if let Some(x) = a.intensity {
        cfg.mitigation.intensities = vec![x];
    }
    cfg.validate()?;
    let mut run = Run::new(&format!("experiment {}", a.kind.name()), &cfg, None);
    a.config.inspect(|p| run.input(p));
    let dir = a.out;
    let path = |name: &str| -> PathBuf { dir.join(name) };

    match a.kind {
        ExperimentKind::Benchmark => {
            let b = Benchmark::prepare(&cfg.benchmark, a.jobs).map_err(data_err)?;
            run.phase("prepare");
            let report = b.report().map_err(data_err)?;
            run.measure("overhead_pct", b.overhead_pct().unwrap_or(f64::NAN));
            let latency = b.latency(&cfg.latency, a.jobs).map_err(data_err)?;
            run.phase("evaluate");

            let mut ensemble = report.ensemble;
            ensemble.overhead_pct = None;
            ensemble.detection_latency_episodes = Some(latency.latency.median);
            let mut rows = vec![("ensemble".to_string(), ensemble), ("ratio_baseline".to_string(), report.baseline)];
            rows.extend(report.detectors.iter().map(|(c, m)| (c.to_string(), *m)));
            run.output(&path("metrics.csv"), &csv_bytes(|w| write_metrics_csv(w, &rows))?)?;
            run.output(&path("sweep.csv"), &csv_bytes(|w| write_sweep_csv(w, &report.sweep))?)?;

            let ev = b.evaluate().map_err(data_err)?;
            let curves = benchmark_curves(&b, &ev);
            run.output(&path("roc.svg"), roc_svg(&curves, Some("ensemble")).as_bytes())?;
            let summary = serde_json::json!({
                "uncalibrated_brier": report.uncalibrated_brier,
                "consensus_kappa": report.consensus_kappa,
                "weights": report.weights,
                "latency": latency.latency,
                "latency_streams": latency.streams,
            });
            run.output(&path("summary.json"), &serde_json::to_vec_pretty(&summary).expect("json"))?;
        }
        ExperimentKind::Ablation => {
            let mut bc = cfg.benchmark.clone();
            bc.shares = cfg.ablation.shares.clone();
            let b = Benchmark::prepare(&bc, a.jobs).map_err(data_err)?;
            run.phase("prepare");
            let rows = b.ablation().map_err(data_err)?;
            run.phase("evaluate");
            run.output(&path("ablation.csv"), &csv_bytes(|w| write_ablation_csv(w, &rows))?)?;
            let pts: Vec<(String, f64, f64)> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| (r.removed.map_or("full".to_string(), |c| format!("-{c}")), i as f64, r.metrics.f1))
                .collect();
            run.output(&path("ablation.svg"), scatter_svg("Ablation", "configuration", "F1", &pts).as_bytes())?;
        }
        ExperimentKind::Sensitivity => {
            let b = Benchmark::prepare(&cfg.benchmark, a.jobs).map_err(data_err)?;
            run.phase("prepare");
            let rows = b.sensitivity(&cfg.sensitivity, a.jobs).map_err(data_err)?;
            run.phase("evaluate");
            run.output(&path("sensitivity.csv"), &csv_bytes(|w| write_sensitivity_csv(w, &rows))?)?;
            let series = vec![(
                "ensemble F1".to_string(),
                rows.iter().enumerate().map(|(i, r)| (i as f64, r.metrics.f1)).collect(),
            )];
            run.output(
                &path("sensitivity.svg"),
                series_svg("Threshold sensitivity", "grid point", "F1", &series).as_bytes(),
            )?;
        }
        ExperimentKind::Factorial => {
            let report = run_factorial(&cfg.factorial, a.jobs).map_err(data_err)?;
            run.phase("evaluate");
            run.output(&path("effects.csv"), &csv_bytes(|w| write_factorial_csv(w, &report))?)?;
            run.output(&path("cells.csv"), &csv_bytes(|w| write_cells_csv(w, &report))?)?;
            let pts: Vec<(String, f64, f64)> =
                report.cells.iter().enumerate().map(|(i, (d, mean, _))| (d.label(), i as f64, *mean)).collect();
            run.output(
                &path("cells.svg"),
                scatter_svg("Hacking frequency per cell", "cell", "hacking frequency", &pts).as_bytes(),
            )?;
        }
        ExperimentKind::Mitigation => {
            let rows = run_mitigation(&cfg.mitigation, a.jobs).map_err(data_err)?;
            run.phase("evaluate");
            run.output(&path("mitigation.csv"), &csv_bytes(|w| write_mitigation_rows_csv(w, &rows))?)?;
            // wall-clock figures would break byte-identical reruns, so they live in the manifest
            for r in &rows {
                let key = format!("{}@{}", r.technique.name(), r.intensity);
                run.measure(&format!("{key}.wall_seconds"), r.outcome.wall_seconds);
                run.measure(&format!("{key}.overhead_pct"), r.effect.overhead_pct);
            }
            let mut series: Vec<(String, Vec<(f64, f64)>)> = vec![];
            for r in &rows {
                let name = r.technique.name().to_string();
                let pt = (r.intensity, r.effect.hacking_reduction_pct.unwrap_or(0.0));
                match series.iter_mut().find(|s| s.0 == name) {
                    Some(s) => s.1.push(pt),
                    None => series.push((name, vec![pt])),
                }
            }
            run.output(
                &path("mitigation.svg"),
                series_svg("Mitigation", "intensity", "hacking reduction (%)", &series).as_bytes(),
            )?;
        }
    }
    run.phase("write");
    run.finish(&path("manifest.json"))
}

fn curve(scores: &[f64], labels: &[bool]) -> Vec<RocPoint> {
    roc_curve(scores, labels).unwrap_or_default()
}

fn benchmark_curves(b: &Benchmark, ev: &Evaluation) -> Vec<(String, Vec<RocPoint>)> {
    let labels = ev.labels();
    let mut curves: Vec<(String, Vec<RocPoint>)> = HackingCategory::ALL
        .iter()
        .map(|c| {
            let s: Vec<f64> = ev.records.iter().map(|r| b.scored.signals[r.index][c.index()].raw_score).collect();
            (c.to_string(), curve(&s, &labels))
        })
        .collect();
    let risk: Vec<f64> = ev.records.iter().map(|r| r.risk).collect();
    curves.push(("ensemble".to_string(), curve(&risk, &labels)));
    curves
}

fn read_assessments(path: &Path) -> Result<Vec<RiskAssessment>, CliError> {
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), n + 1)))?;
        out.push(r);
    }
    if out.is_empty() {
        return Err(CliError::Empty(format!("{} contains no assessments", path.display())));
    }
    Ok(out)
}

pub fn report(assessments: &Path, labels: &Path, out: &Path) -> Result<(), CliError> {
    let mut run = Run::new("report", &(assessments, labels), None);
    run.input(assessments);
    run.input(labels);
    let rs = read_assessments(assessments)?;
    let eps = read_log(labels)?;
    let by_id: HashMap<&str, bool> = eps.iter().map(|e| (e.id.as_str(), e.is_hacking())).collect();
    let truth: Vec<bool> = rs
        .iter()
        .map(|r| {
            by_id
                .get(r.episode_id.as_str())
                .copied()
                .ok_or_else(|| CliError::Data(format!("no label for episode {}", r.episode_id)))
        })
        .collect::<Result<_, _>>()?;
    run.phase("read");

    let metrics = |pred: &[bool], score: &[f64]| DetectionMetrics::from_scores(pred, score, &truth).map_err(data_err);
    let flags: Vec<bool> = rs.iter().map(|r| r.flagged).collect();
    let risk: Vec<f64> = rs.iter().map(|r| r.risk).collect();
    let mut ensemble = metrics(&flags, &risk)?;
    ensemble.brier = hackwatch::eval::brier(&risk, &truth).ok();
    let consensus_score: Vec<f64> = rs.iter().map(|r| f64::from(r.consensus_count) / 6.0).collect();
    let consensus_flag: Vec<bool> = rs.iter().map(|r| r.consensus_count >= 3).collect();
    let mut rows = vec![
        ("ensemble".to_string(), ensemble),
        ("consensus".to_string(), metrics(&consensus_flag, &consensus_score)?),
    ];
    let mut curves = vec![];
    for c in HackingCategory::ALL {
        let d = c.index();
        let pred: Vec<bool> = rs.iter().map(|r| r.signals[d].flagged).collect();
        let score: Vec<f64> = rs.iter().map(|r| r.signals[d].calibrated_confidence).collect();
        rows.push((c.to_string(), metrics(&pred, &score)?));
        curves.push((c.to_string(), curve(&score, &truth)));
    }
    curves.push(("ensemble".to_string(), curve(&risk, &truth)));

    let records: Vec<EvalRecord> = rs
        .iter()
        .zip(&truth)
        .enumerate()
        .map(|(i, (r, &label))| EvalRecord {
            index: i,
            label,
            risk: r.risk,
            uncalibrated_risk: r.risk,
            flagged: r.flagged,
            consensus: r.consensus_count >= 3,
        })
        .collect();
    let sweep = Evaluation { models: vec![], folds: vec![], records }.threshold_sweep(&SWEEP);
    run.phase("evaluate");

    run.output(&out.join("metrics.csv"), &csv_bytes(|w| write_metrics_csv(w, &rows))?)?;
    run.output(&out.join("sweep.csv"), &csv_bytes(|w| write_sweep_csv(w, &sweep))?)?;
    run.output(&out.join("roc.svg"), roc_svg(&curves, Some("ensemble")).as_bytes())?;
    run.finish(&out.join("manifest.json"))
}
