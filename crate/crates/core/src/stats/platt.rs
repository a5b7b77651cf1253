//! Platt scaling: a logistic map from raw scores to probabilities.

use serde::{Deserialize, Serialize};

use super::moments::{mean, std_dev};
use crate::error::{Error, Result};

/// Calibrated probability is `1 / (1 + exp(-(a * score + b)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    pub fn apply(&self, score: f64) -> f64 {
        platt_apply(self, score)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn platt_apply(params: &PlattParams, score: f64) -> f64 {
    sigmoid(params.a * score + params.b)
}

// -log(sigmoid(x)), computed without overflow
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn objective(z: &[f64], t: &[f64], a: f64, b: f64) -> f64 {
    z.iter()
        .zip(t)
        .map(|(&zi, &ti)| {
            let x = a * zi + b;
            ti * neg_log_sigmoid(x) + (1.0 - ti) * neg_log_sigmoid(-x)
        })
        .sum()
}

/// Newton's method with backtracking on the smoothed-target negative log
/// likelihood. Scores are standardised internally and the parameters
/// mapped back to raw-score units.
pub fn platt_fit(scores: &[f64], labels: &[bool]) -> Result<PlattParams> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("platt: scores and labels differ in length"));
    }
    if scores.len() < 4 {
        return Err(Error::Calibration("platt needs at least four samples".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Calibration("platt: non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::Calibration("platt needs both classes".into()));
    }
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let t: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();

    let mu = mean(scores);
    let sd = std_dev(scores);
    let prior = ((n_pos + 1.0) / (n_neg + 1.0)).ln();
    if sd <= 1e-300 {
        return Ok(PlattParams { a: 0.0, b: prior });
    }
    let z: Vec<f64> = scores.iter().map(|s| (s - mu) / sd).collect();

    let (mut a, mut b) = (0.0, prior);
    let mut f = objective(&z, &t, a, b);
    for _ in 0..200 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for (&zi, &ti) in z.iter().zip(&t) {
            let p = sigmoid(a * zi + b);
            let d = p - ti;
            let w = p * (1.0 - p);
            ga += d * zi;
            gb += d;
            haa += w * zi * zi;
            hab += w * zi;
            hbb += w;
        }
        if ga.abs() < 1e-10 && gb.abs() < 1e-10 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(-hab * ga + haa * gb) / det;
        let slope = ga * da + gb * db;
        let mut step = 1.0;
        let mut improved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(&z, &t, na, nb);
            if nf < f + 1e-4 * step * slope {
                a = na;
                b = nb;
                f = nf;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(PlattParams { a: a / sd, b: b - a * mu / sd })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_reference_points() {
        let p = PlattParams { a: 1.0, b: 0.0 };
        assert_eq!(platt_apply(&p, 0.0), 0.5);
        assert!(platt_apply(&p, 800.0) > 1.0 - 1e-12);
        assert!(platt_apply(&p, -800.0) >= 0.0);
        for s in [-3.0, -0.2, 0.7, 5.0] {
            let q = PlattParams { a: 0.8, b: -0.3 };
            let oracle = 1.0 / (1.0 + (-(0.8 * s - 0.3f64)).exp());
            assert!((platt_apply(&q, s) - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let err = platt_fit(&[0.1, 0.2, 0.3, 0.4], &[true; 4]).unwrap_err();
        assert!(matches!(err, Error::Calibration(_)));
    }

    #[test]
    fn constant_scores_give_the_prior() {
        let p = platt_fit(&[1.0; 6], &[true, false, false, false, false, true]).unwrap();
        assert_eq!(p.a, 0.0);
        assert!((platt_apply(&p, 1.0) - 3.0 / 8.0).abs() < 1e-12);
    }
}
