use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustBounds {
    pub median: f64,
    /// Unscaled median absolute deviation.
    pub mad: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

impl LineFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// already-sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("quantile of empty data"));
    }
    Ok(quantile_sorted(&sorted(values), p))
}

/// Exact median in O(n) expected time.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("median of empty data"));
    }
    let mut v = values.to_vec();
    Ok(median_in_place(&mut v))
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

pub fn robust_bounds(values: &[f64]) -> Result<RobustBounds> {
    if values.is_empty() {
        return Err(Error::invalid("robust bounds of empty data"));
    }
    let s = sorted(values);
    let med = quantile_sorted(&s, 0.5);
    let mut dev: Vec<f64> = s.iter().map(|x| (x - med).abs()).collect();
    let mad = median_in_place(&mut dev);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    Ok(RobustBounds { median: med, mad, q1, q3, iqr: q3 - q1 })
}

/// Theil-Sen estimator: slope is the median of all pairwise slopes over
/// points with distinct x, intercept the median residual.
pub fn theil_sen(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::invalid("theil-sen needs at least two points"));
    }
    let mut slopes = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for (i, &(xi, yi)) in points.iter().enumerate() {
        for &(xj, yj) in &points[i + 1..] {
            if xi != xj {
                slopes.push((yj - yi) / (xj - xi));
            }
        }
    }
    if slopes.is_empty() {
        return Err(Error::DegenerateInput("theil-sen: all x values are equal".into()));
    }
    let slope = median_in_place(&mut slopes);
    let mut resid: Vec<f64> = points.iter().map(|&(x, y)| y - slope * x).collect();
    let intercept = median_in_place(&mut resid);
    Ok(LineFit { slope, intercept })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_bounds() {
        let b = robust_bounds(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((b.median, b.mad, b.iqr), (5.0, 0.0, 0.0));
    }

    #[test]
    fn one_to_five() {
        let b = robust_bounds(&[3.0, 1.0, 5.0, 2.0, 4.0]).unwrap();
        assert_eq!((b.median, b.mad), (3.0, 1.0));
        assert_eq!((b.q1, b.q3, b.iqr), (2.0, 4.0, 2.0));
        assert!(robust_bounds(&[]).is_err());
    }

    #[test]
    fn even_median() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
    }

    #[test]
    fn theil_sen_exact_line() {
        let pts: Vec<_> = (0..5).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let fit = theil_sen(&pts).unwrap();
        assert_eq!((fit.slope, fit.intercept), (2.0, 1.0));
        let fit = theil_sen(&[(0.0, 0.0), (1.0, 3.0)]).unwrap();
        assert_eq!((fit.slope, fit.intercept), (3.0, 0.0));
    }

    #[test]
    fn theil_sen_ignores_a_gross_outlier() {
        let mut pts: Vec<_> = (0..10).map(|i| (i as f64, i as f64)).collect();
        pts[4].1 = 1e6;
        let fit = theil_sen(&pts).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn theil_sen_degenerate() {
        let err = theil_sen(&[(1.0, 0.0), (1.0, 2.0), (1.0, 5.0)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(_)));
    }
}
