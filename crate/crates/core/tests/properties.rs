use hackwatch::ensemble::{consensus_label, EnsembleModel};
use hackwatch::envgen::{generate_stream, EnvFamily, EnvSpec, Policy, StreamConfig};
use hackwatch::eval::{cohens_kappa, ks_critical_5pct, ks_uniform, prf, roc_auc, welch_t, EvalRecord, Evaluation};
use hackwatch::io::{episodes_to_bytes, read_episodes};
use hackwatch::stats::{bin_index, histogram, quantile, theil_sen, PlattParams, SplitMix64};
use hackwatch::{DetectorSignal, HackingCategory};
use proptest::prelude::*;

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..60).prop_flat_map(|n| {
        (prop::collection::vec(-50.0f64..50.0, n), prop::collection::vec(any::<bool>(), n)).prop_map(|(s, mut l)| {
            l[0] = true;
            l[1] = false;
            (s, l)
        })
    })
}

fn model(a: [f64; 6], w: [f64; 6]) -> EnsembleModel {
    let total: f64 = w.iter().sum();
    EnsembleModel {
        weights: w.iter().map(|x| x / total).collect(),
        platt: a.iter().map(|&a| PlattParams { a, b: -1.0 }).collect(),
        risk_threshold: 0.5,
        f1: vec![0.5; 6],
        warnings: vec![],
    }
}

fn signals(raw: &[f64]) -> Vec<DetectorSignal> {
    HackingCategory::ALL.iter().zip(raw).map(|(&c, &r)| DetectorSignal::new(c, r, 0.5)).collect()
}

proptest! {
    #[test]
    fn auc_is_antisymmetric((scores, labels) in scored_labels()) {
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let b = roc_auc(&neg, &labels).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn prf_ignores_order(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..80), seed in any::<u64>()) {
        let mut shuffled = pairs.clone();
        SplitMix64::new(seed).shuffle(&mut shuffled);
        let unzip = |v: &[(bool, bool)]| -> (Vec<bool>, Vec<bool>) { v.iter().copied().unzip() };
        let (p1, l1) = unzip(&pairs);
        let (p2, l2) = unzip(&shuffled);
        prop_assert_eq!(prf(&p1, &l1).unwrap(), prf(&p2, &l2).unwrap());
    }

    #[test]
    fn risk_is_monotone_in_each_raw_score(
        a in prop::array::uniform6(0.0f64..5.0),
        w in prop::array::uniform6(0.01f64..1.0),
        raw in prop::array::uniform6(-3.0f64..3.0),
        d in 0usize..6,
        bump in 0.0f64..4.0,
    ) {
        let m = model(a, w);
        let mut higher = raw;
        higher[d] += bump;
        let r = m.risk(&signals(&raw));
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!(m.risk(&signals(&higher)) >= r - 1e-15);
    }

    #[test]
    fn sweep_flags_fewer_as_threshold_rises(recs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..100)) {
        let records = recs
            .iter()
            .enumerate()
            .map(|(index, &(risk, label))| EvalRecord {
                index,
                label,
                risk,
                uncalibrated_risk: risk,
                flagged: risk > 0.5,
                consensus: false,
            })
            .collect();
        let ev = Evaluation { models: vec![], folds: vec![], records };
        let thresholds: Vec<f64> = (1..=9).map(|k| f64::from(k) / 10.0).collect();
        let sweep = ev.threshold_sweep(&thresholds);
        for w in sweep.windows(2) {
            prop_assert!(w[1].flagged <= w[0].flagged);
            prop_assert!(w[1].recall <= w[0].recall);
        }
    }

    #[test]
    fn kappa_is_symmetric(pairs in prop::collection::vec((0u8..3, 0u8..3), 2..60)) {
        let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        match (cohens_kappa(&a, &b), cohens_kappa(&b, &a)) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12 && x <= 1.0 + 1e-12),
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn histogram_is_a_distribution(values in prop::collection::vec(-10.0f64..10.0, 0..200), bins in 1usize..32) {
        let h = histogram(&values, bins, (-5.0, 5.0)).unwrap();
        prop_assert_eq!(h.len(), bins);
        prop_assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for v in values {
            prop_assert!(bin_index(v, bins, -5.0, 5.0) < bins);
        }
    }

    #[test]
    fn quantile_is_monotone(values in prop::collection::vec(-1e3f64..1e3, 1..100), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(quantile(&values, lo).unwrap() <= quantile(&values, hi).unwrap());
    }

    #[test]
    fn theil_sen_is_shift_equivariant(ys in prop::collection::vec(-10.0f64..10.0, 3..30), k in -5.0f64..5.0) {
        let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
        let tilted: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, y + k * x)).collect();
        let a = theil_sen(&pts).unwrap();
        let b = theil_sen(&tilted).unwrap();
        prop_assert!((b.slope - a.slope - k).abs() < 1e-9);
    }
}

#[test]
fn consensus_is_exact_on_all_flag_combinations() {
    for mask in 0u32..64 {
        let sigs: Vec<DetectorSignal> = HackingCategory::ALL
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut s = DetectorSignal::new(c, 0.0, 0.5);
                s.flagged = mask & (1 << i) != 0;
                s
            })
            .collect();
        assert_eq!(consensus_label(&sigs), mask.count_ones() >= 3, "mask {mask:06b}");
    }
}

#[test]
fn welch_p_values_are_uniform_under_the_null() {
    let mut rng = SplitMix64::new(42);
    let p: Vec<f64> = (0..1000)
        .map(|_| {
            let a: Vec<f64> = (0..12).map(|_| rng.gaussian(0.0, 1.0)).collect();
            let b: Vec<f64> = (0..20).map(|_| rng.gaussian(0.0, 3.0)).collect();
            welch_t(&a, &b).unwrap().p_value
        })
        .collect();
    let d = ks_uniform(&p);
    assert!(d < ks_critical_5pct(p.len()), "KS statistic {d}");
}

#[test]
fn generated_logs_round_trip_and_repeat() {
    let cfg = StreamConfig::new(EnvSpec::new(EnvFamily::RoboticControl, "arm"), 25, 9, Policy::NoisyOptimal);
    let a = generate_stream(&cfg).unwrap();
    let bytes = episodes_to_bytes(&a);
    assert_eq!(bytes, episodes_to_bytes(&generate_stream(&cfg).unwrap()));
    let back = read_episodes(&bytes[..]).unwrap();
    assert_eq!(episodes_to_bytes(&back), bytes);
}
