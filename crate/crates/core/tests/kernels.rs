//! Numeric kernels against brute-force definitions on seeded random inputs.

use hackwatch::eval::roc_auc;
use hackwatch::stats::{
    autocorrelation, kl_divergence, linear_trend, moments, pearson, platt_apply, robust_bounds, smooth, theil_sen,
    PlattParams, SplitMix64, KL_SMOOTHING,
};

const TRIALS: u64 = 200;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

fn series(rng: &mut SplitMix64) -> Vec<f64> {
    let n = 5 + rng.below(60) as usize;
    let scale = rng.uniform(0.1, 50.0);
    let shift = rng.uniform(-100.0, 100.0);
    (0..n).map(|_| shift + scale * rng.normal()).collect()
}

// Oracles work in the most literal form of each definition.

fn naive_mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn central(x: &[f64], k: i32) -> f64 {
    let m = naive_mean(x);
    x.iter().map(|v| (v - m).powi(k)).sum::<f64>() / x.len() as f64
}

fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let (lo, frac) = (h.floor() as usize, h.fract());
    if lo + 1 < sorted.len() {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[lo]
    }
}

fn sorted_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn moments_match_definition() {
    let mut rng = SplitMix64::new(1);
    for _ in 0..TRIALS {
        let x = series(&mut rng);
        let m = moments(&x).unwrap();
        let var = central(&x, 2);
        assert!(close(m.mean, naive_mean(&x), 1e-9));
        assert!(close(m.variance, var, 1e-9));
        assert!(close(m.skewness, central(&x, 3) / var.powf(1.5), 1e-9));
        assert!(close(m.kurtosis, central(&x, 4) / (var * var) - 3.0, 1e-9));
    }
}

#[test]
fn pearson_matches_covariance_over_deviations() {
    let mut rng = SplitMix64::new(2);
    for _ in 0..TRIALS {
        let x = series(&mut rng);
        let slope = rng.uniform(-3.0, 3.0);
        let y: Vec<f64> = x.iter().map(|v| slope * v + 10.0 * rng.normal()).collect();
        let (mx, my) = (naive_mean(&x), naive_mean(&y));
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
        let sy: f64 = y.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
        assert!(close(pearson(&x, &y).unwrap(), cov / (sx * sy), 1e-9));
    }
}

#[test]
fn kl_matches_natural_log_sum() {
    let mut rng = SplitMix64::new(3);
    for _ in 0..TRIALS {
        let bins = 2 + rng.below(20) as usize;
        let mut draw = |zero_some: bool| {
            let mut raw: Vec<f64> =
                (0..bins).map(|_| if zero_some && rng.bernoulli(0.3) { 0.0 } else { rng.next_f64() + 0.01 }).collect();
            raw[0] += 0.5;
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect::<Vec<f64>>()
        };
        let p = draw(true);
        let q = draw(true);
        let qsum: f64 = q.iter().map(|v| v + KL_SMOOTHING).sum();
        let oracle: f64 = p
            .iter()
            .zip(&q)
            .filter(|(pi, _)| **pi > 0.0)
            .map(|(pi, qi)| pi * (pi / ((qi + KL_SMOOTHING) / qsum)).ln() / std::f64::consts::LN_2)
            .sum();
        assert!(close(kl_divergence(&p, &q).unwrap(), oracle.max(0.0), 1e-9));
        assert!(close(smooth(&q).iter().sum::<f64>(), 1.0, 1e-12));
    }
}

#[test]
fn autocorrelation_matches_definition() {
    let mut rng = SplitMix64::new(4);
    for _ in 0..TRIALS {
        let x = series(&mut rng);
        let lag = 1 + rng.below((x.len() - 1) as u64) as usize;
        let m = naive_mean(&x);
        let num: f64 = (0..x.len() - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum();
        let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        assert!(close(autocorrelation(&x, lag).unwrap(), num / den, 1e-9));
    }
}

#[test]
fn trend_matches_normal_equations() {
    let mut rng = SplitMix64::new(5);
    for _ in 0..TRIALS {
        let y = series(&mut rng);
        let n = y.len() as f64;
        let st: f64 = (0..y.len()).map(|i| i as f64).sum();
        let stt: f64 = (0..y.len()).map(|i| (i * i) as f64).sum();
        let sy: f64 = y.iter().sum();
        let sty: f64 = y.iter().enumerate().map(|(i, v)| i as f64 * v).sum();
        let oracle = (n * sty - st * sy) / (n * stt - st * st);
        let got = linear_trend(&y).unwrap();
        assert!((got - oracle).abs() <= 1e-9 * (1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max)));
    }
}

#[test]
fn robust_bounds_match_sorted_order_statistics() {
    let mut rng = SplitMix64::new(6);
    for _ in 0..TRIALS {
        let x = series(&mut rng);
        let mut s = x.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = type7(&s, 0.5);
        let b = robust_bounds(&x).unwrap();
        assert!(close(b.median, sorted_median(x.clone()), 1e-12));
        assert!(close(b.q1, type7(&s, 0.25), 1e-12));
        assert!(close(b.q3, type7(&s, 0.75), 1e-12));
        assert!(close(b.mad, sorted_median(x.iter().map(|v| (v - med).abs()).collect()), 1e-12));
    }
}

#[test]
fn theil_sen_matches_pairwise_slopes() {
    let mut rng = SplitMix64::new(7);
    for _ in 0..TRIALS {
        let n = 3 + rng.below(40) as usize;
        let pts: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.below(30) as f64, rng.uniform(-5.0, 5.0) + rng.normal())).collect();
        let mut slopes = vec![];
        for i in 0..n {
            for j in 0..n {
                if i < j && pts[i].0 != pts[j].0 {
                    slopes.push((pts[j].1 - pts[i].1) / (pts[j].0 - pts[i].0));
                }
            }
        }
        if slopes.is_empty() {
            assert!(theil_sen(&pts).is_err());
            continue;
        }
        let slope = sorted_median(slopes);
        let intercept = sorted_median(pts.iter().map(|(x, y)| y - slope * x).collect());
        let fit = theil_sen(&pts).unwrap();
        assert!(close(fit.slope, slope, 1e-9));
        assert!(close(fit.intercept, intercept, 1e-9));
    }
}

#[test]
fn platt_apply_matches_logistic() {
    let mut rng = SplitMix64::new(8);
    for _ in 0..TRIALS {
        let p = PlattParams { a: rng.uniform(-20.0, 20.0), b: rng.uniform(-10.0, 10.0) };
        let s = rng.uniform(-3.0, 3.0);
        let oracle = 1.0 / (1.0 + (-(p.a * s + p.b)).exp());
        assert!((platt_apply(&p, s) - oracle).abs() <= 1e-9);
    }
}

#[test]
fn auc_matches_pair_count() {
    let mut rng = SplitMix64::new(9);
    for _ in 0..TRIALS {
        let n = 4 + rng.below(80) as usize;
        let mut labels: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.4)).collect();
        labels[0] = true;
        labels[n - 1] = false;
        // quarter-step scores so ties occur
        let scores: Vec<f64> =
            labels.iter().map(|&l| ((rng.normal() + if l { 0.8 } else { 0.0 }) * 4.0).round() / 4.0).collect();
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!(close(roc_auc(&scores, &labels).unwrap(), wins / pairs, 1e-9));
    }
}
