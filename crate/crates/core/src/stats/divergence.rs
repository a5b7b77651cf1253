use crate::error::{Error, Result};

/// Mass added to every reference bin before normalising.
pub const KL_SMOOTHING: f64 = 1e-6;

/// Bin index for `v` under equal-width bins over `[lo, hi]`. Bins are
/// closed on the right, so a value on an interior edge lands in the lower
/// bin; out-of-range values are clamped into the end bins.
pub fn bin_index(v: f64, bins: usize, lo: f64, hi: f64) -> usize {
    let pos = (v - lo) / (hi - lo) * bins as f64;
    if pos.is_nan() || pos <= 0.0 {
        return 0;
    }
    ((pos.ceil() as usize).saturating_sub(1)).min(bins - 1)
}

/// Raw per-bin counts.
pub fn histogram_counts(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    if !(lo < hi) {
        return Err(Error::invalid(format!("histogram range ({lo}, {hi}) is empty")));
    }
    let mut counts = vec![0.0; bins];
    for &v in values {
        counts[bin_index(v, bins, lo, hi)] += 1.0;
    }
    Ok(counts)
}

/// Normalised histogram. An empty input yields the uniform histogram.
pub fn histogram(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Vec<f64>> {
    let counts = histogram_counts(values, bins, range)?;
    if values.is_empty() {
        return Ok(vec![1.0 / bins as f64; bins]);
    }
    let n = values.len() as f64;
    Ok(counts.into_iter().map(|c| c / n).collect())
}

/// `q` with [`KL_SMOOTHING`] added to every bin, renormalised.
pub fn smooth(q: &[f64]) -> Vec<f64> {
    let total: f64 = q.iter().map(|x| x + KL_SMOOTHING).sum();
    q.iter().map(|x| (x + KL_SMOOTHING) / total).collect()
}

/// `D_KL(p || q)` in bits. `q` is smoothed first so the divergence stays
/// finite; bins with `p = 0` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!("kl: {} bins vs {} bins", p.len(), q.len())));
    }
    for (name, h) in [("p", p), ("q", q)] {
        let s: f64 = h.iter().sum();
        if (s - 1.0).abs() > 1e-9 || h.iter().any(|x| *x < 0.0) {
            return Err(Error::invalid(format!("kl: {name} is not a distribution (sum {s})")));
        }
    }
    let qs = smooth(q);
    let d: f64 = p
        .iter()
        .zip(&qs)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).log2())
        .sum();
    Ok(d.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_distributions() {
        assert!(kl_divergence(&[0.5, 0.5], &[0.5, 0.5]).unwrap() < 1e-12);
    }

    #[test]
    fn one_bit() {
        let d = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn edge_value_goes_to_lower_bin() {
        assert_eq!(histogram(&[0.5], 2, (0.0, 1.0)).unwrap(), vec![1.0, 0.0]);
        assert_eq!(histogram(&[1.0], 2, (0.0, 1.0)).unwrap(), vec![0.0, 1.0]);
        assert_eq!(histogram(&[0.0, -3.0], 2, (0.0, 1.0)).unwrap(), vec![1.0, 0.0]);
        assert_eq!(histogram(&[7.0], 2, (0.0, 1.0)).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn empty_input_is_uniform() {
        assert_eq!(histogram(&[], 4, (0.0, 1.0)).unwrap(), vec![0.25; 4]);
        assert!(histogram(&[1.0], 4, (1.0, 1.0)).is_err());
    }
}
