use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub n: usize,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub skewness: f64,
    /// Excess kurtosis.
    pub kurtosis: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    // second pass removes most of the rounding in the first sum
    m + xs.iter().map(|x| x - m).sum::<f64>() / n
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn negligible_variance(m2: f64, mean: f64) -> bool {
    m2 <= 1e-24 * (1.0 + mean * mean)
}

/// Population moments. Skewness is 0 for n < 3 and kurtosis 0 for n < 4;
/// both are 0 for a zero-variance series.
pub fn moments(series: &[f64]) -> Result<MomentSummary> {
    if series.is_empty() {
        return Err(Error::invalid("moments of an empty series"));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("moments of a non-finite series"));
    }
    let n = series.len();
    let nf = n as f64;
    let m = mean(series);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in series {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if negligible_variance(m2, m) {
        return Ok(MomentSummary { n, mean: m, variance: 0.0, skewness: 0.0, kurtosis: 0.0 });
    }
    let skewness = if n < 3 { 0.0 } else { m3 / m2.powf(1.5) };
    let kurtosis = if n < 4 { 0.0 } else { m4 / (m2 * m2) - 3.0 };
    Ok(MomentSummary { n, mean: m, variance: m2, skewness, kurtosis })
}

/// Sample Pearson correlation; 0 when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("pearson: lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::invalid("pearson needs at least two points"));
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let n = x.len() as f64;
    if negligible_variance(sxx / n, mx) || negligible_variance(syy / n, my) {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Lag-`lag` autocorrelation normalised by the overall variance.
pub fn autocorrelation(series: &[f64], lag: usize) -> Result<f64> {
    if lag == 0 || lag >= series.len() {
        return Err(Error::invalid(format!(
            "autocorrelation lag {lag} for series of length {}",
            series.len()
        )));
    }
    let m = mean(series);
    let den: f64 = series.iter().map(|x| (x - m) * (x - m)).sum();
    if negligible_variance(den / series.len() as f64, m) {
        return Ok(0.0);
    }
    let num: f64 = series
        .iter()
        .zip(&series[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum();
    Ok(num / den)
}

/// Ordinary least-squares slope against the index `0..n`.
pub fn linear_trend(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 2 {
        return Err(Error::invalid("linear trend needs at least two points"));
    }
    let tm = (n as f64 - 1.0) / 2.0;
    let ym = mean(series);
    let (mut sty, mut stt) = (0.0, 0.0);
    for (i, y) in series.iter().enumerate() {
        let dt = i as f64 - tm;
        sty += dt * (y - ym);
        stt += dt * dt;
    }
    Ok(sty / stt)
}

/// Sliding-window Pearson correlation maintained from running sums, so
/// advancing the window costs O(1) instead of O(window).
#[derive(Debug, Clone, Default)]
pub struct RollingCorrelation {
    n: usize,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl RollingCorrelation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        self.sx += x;
        self.sy += y;
        self.sxx += x * x;
        self.syy += y * y;
        self.sxy += x * y;
    }

    pub fn pop(&mut self, x: f64, y: f64) {
        self.n -= 1;
        self.sx -= x;
        self.sy -= y;
        self.sxx -= x * x;
        self.syy -= y * y;
        self.sxy -= x * y;
    }

    /// Correlation of the current window; `None` when either side has
    /// (numerically) zero variance.
    pub fn correlation(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let n = self.n as f64;
        let mx = self.sx / n;
        let my = self.sy / n;
        let cxx = self.sxx / n - mx * mx;
        let cyy = self.syy / n - my * my;
        let scale_x = self.sxx / n;
        let scale_y = self.syy / n;
        if cxx <= 1e-12 * scale_x.max(1e-300) || cyy <= 1e-12 * scale_y.max(1e-300) {
            return None;
        }
        let cxy = self.sxy / n - mx * my;
        Some((cxy / (cxx * cyy).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Running mean and variance (Welford), used for streaming summaries.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m2 / self.n as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_moments() {
        let m = moments(&[2.0, 2.0, 2.0, 2.0]).unwrap();
        assert_eq!((m.mean, m.variance, m.skewness, m.kurtosis), (2.0, 0.0, 0.0, 0.0));
        let m = moments(&[0.1, 0.1, 0.1]).unwrap();
        assert_eq!((m.variance, m.skewness), (0.0, 0.0));
    }

    #[test]
    fn two_point_moments() {
        let m = moments(&[0.0, 1.0]).unwrap();
        assert_eq!(m.mean, 0.5);
        assert_eq!(m.variance, 0.25);
        assert_eq!(m.skewness, 0.0);
        assert!(moments(&[]).is_err());
    }

    #[test]
    fn pearson_extremes() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]).unwrap(), 0.0);
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn autocorrelation_of_alternating_series() {
        let s = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let r1 = autocorrelation(&s, 1).unwrap();
        assert!((r1 - (-5.0 / 6.0)).abs() < 1e-15);
        assert!(autocorrelation(&s, 2).unwrap() > 0.0);
        assert_eq!(autocorrelation(&[3.0; 5], 1).unwrap(), 0.0);
        assert!(autocorrelation(&s, 6).is_err());
    }

    #[test]
    fn trend_of_exact_line() {
        assert!((linear_trend(&[0.0, 1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(linear_trend(&[4.0; 10]).unwrap(), 0.0);
        assert!(linear_trend(&[1.0]).is_err());
    }

    #[test]
    fn rolling_correlation_detects_zero_variance() {
        let mut r = RollingCorrelation::new();
        for _ in 0..5 {
            r.push(1.0, 2.0);
        }
        assert_eq!(r.correlation(), None);
    }

    #[test]
    fn running_stats_matches_batch() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut rs = RunningStats::default();
        xs.iter().for_each(|&x| rs.push(x));
        let m = moments(&xs).unwrap();
        assert!((rs.mean() - m.mean).abs() < 1e-12);
        assert!((rs.variance() - m.variance).abs() < 1e-12);
    }
}
