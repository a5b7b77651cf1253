//! Generator, detectors and ensemble wired together.

use hackwatch::detectors::{fit_bundle, read_bundle, write_bundle, DetectorConfig};
use hackwatch::envgen::{generate_stream, wirehead_registry, EnvFamily, EnvSpec, InjectionSpec, Policy, StreamConfig};
use hackwatch::stats::quantile;
use hackwatch::{Episode, HackingCategory, SignalWarning};

fn reference(family: EnvFamily, n: u64) -> StreamConfig {
    StreamConfig::new(EnvSpec::new(family, "env-under-test"), n, 31, Policy::GoalSeeker)
}

fn injected(family: EnvFamily, cat: HackingCategory, n: u64) -> StreamConfig {
    StreamConfig::new(EnvSpec::new(family, "env-under-test"), n, 32, Policy::GoalSeeker)
        .with_injection(vec![InjectionSpec::new(cat, 1.0)])
}

#[test]
fn injected_episodes_exceed_clean_95th_percentile() {
    for family in [EnvFamily::GridWorld, EnvFamily::RoboticControl] {
        let ref_cfg = reference(family, 300);
        let refs = generate_stream(&ref_cfg).unwrap();
        let bundle = fit_bundle(&refs, &DetectorConfig::default(), wirehead_registry([&ref_cfg])).unwrap();
        let clean: Vec<Vec<f64>> = refs.iter().map(|e| bundle.signals(e).iter().map(|s| s.raw_score).collect()).collect();
        for cat in HackingCategory::ALL {
            let d = cat.index();
            let col: Vec<f64> = clean.iter().map(|s| s[d]).collect();
            let p95 = quantile(&col, 0.95).unwrap();
            let eps = generate_stream(&injected(family, cat, 60)).unwrap();
            let hacked: Vec<&Episode> = eps.iter().filter(|e| e.label.as_ref().and_then(|l| l.category) == Some(cat)).collect();
            let above = hacked.iter().filter(|e| bundle.signals(e)[d].raw_score > p95).count();
            let rate = above as f64 / hacked.len() as f64;
            assert!(rate >= 0.9, "{family} {cat}: {above}/{} above the clean 95th percentile", hacked.len());
        }
    }
}

#[test]
fn bundle_round_trips_and_refits_identically() {
    let cfg = reference(EnvFamily::RecSys, 120);
    let refs = generate_stream(&cfg).unwrap();
    let fit = || fit_bundle(&refs, &DetectorConfig::default(), wirehead_registry([&cfg])).unwrap();
    let mut a = Vec::new();
    write_bundle(&mut a, &fit()).unwrap();
    let mut b = Vec::new();
    write_bundle(&mut b, &fit()).unwrap();
    assert_eq!(a, b);
    let back = read_bundle(&a[..]).unwrap();
    let mut c = Vec::new();
    write_bundle(&mut c, &back).unwrap();
    assert_eq!(a, c);
    assert_eq!(a.iter().filter(|&&x| x == b'\n').count(), 7);
}

#[test]
fn unknown_environment_makes_wirehead_abstain() {
    let cfg = reference(EnvFamily::GridWorld, 80);
    let refs = generate_stream(&cfg).unwrap();
    let bundle = fit_bundle(&refs, &DetectorConfig::default(), wirehead_registry([&cfg])).unwrap();
    let other = StreamConfig::new(EnvSpec::new(EnvFamily::GridWorld, "elsewhere"), 3, 5, Policy::GoalSeeker);
    for e in generate_stream(&other).unwrap() {
        let s = bundle.signals(&e);
        assert!(s[HackingCategory::Wireheading.index()].abstained);
        assert!(bundle.assess(&e).unwrap().risk.is_finite());
    }
}

#[test]
fn selective_monitoring_bypasses_expensive_detectors_on_quiet_episodes() {
    let cfg = reference(EnvFamily::GridWorld, 200);
    let refs = generate_stream(&cfg).unwrap();
    let det = DetectorConfig { selective: true, ..DetectorConfig::default() };
    let bundle = fit_bundle(&refs, &det, wirehead_registry([&cfg])).unwrap();
    let bypassed = refs
        .iter()
        .filter(|e| bundle.signals(e).iter().any(|s| s.warning == Some(SignalWarning::Bypassed)))
        .count();
    assert!(bypassed > 0);
    // a tampered episode always trips a cheap detector, so nothing is skipped
    let eps = generate_stream(&injected(EnvFamily::GridWorld, HackingCategory::RewardTampering, 30)).unwrap();
    for e in eps.iter().filter(|e| e.is_hacking()) {
        assert!(bundle.signals(e).iter().all(|s| s.warning != Some(SignalWarning::Bypassed)));
    }
}

#[test]
fn too_few_references_name_every_failing_detector() {
    let refs = generate_stream(&reference(EnvFamily::GridWorld, 3)).unwrap();
    let err = fit_bundle(&refs, &DetectorConfig::default(), Default::default()).unwrap_err();
    let msg = err.to_string();
    for cat in [HackingCategory::SpecificationGaming, HackingCategory::RewardTampering, HackingCategory::ExploitationPattern]
    {
        assert!(msg.contains(cat.name()), "{msg}");
    }
}
