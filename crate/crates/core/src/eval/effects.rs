//! Effect sizes, Welch's test and the 2^3 factorial estimator.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::envgen::RewardDesign;
use crate::error::{Error, Result};
use crate::stats::mean;

fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// `(mean_a - mean_b)` over the pooled sample standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("cohen's d needs at least two values per group"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * sample_var(a) + (nb - 1.0) * sample_var(b)) / (na + nb - 2.0)).sqrt();
    let diff = mean(a) - mean(b);
    if pooled == 0.0 {
        return if diff == 0.0 { Ok(0.0) } else { Err(Error::Undefined("zero pooled variance".into())) };
    }
    Ok(diff / pooled)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Two-sided tail probability of Student's t with `df` degrees of
/// freedom, through the regularized incomplete beta function.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
/// freedom.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("welch's test needs at least two values per group"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_var(a) / na, sample_var(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        let t = if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY };
        return Ok(WelchTest { t, df: na + nb - 2.0, p_value: p });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchTest { t, df, p_value: student_t_two_sided(t, df) })
}

/// Kolmogorov-Smirnov distance between a sample and Uniform(0, 1).
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i as f64 + 1.0) / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 5% critical value of the one-sample KS statistic.
pub fn ks_critical_5pct(n: usize) -> f64 {
    1.358 / (n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub factor: String,
    /// Difference in mean hacking frequency between the `+1` and `-1`
    /// contrast groups.
    pub effect: f64,
    pub cohens_d: f64,
    pub p_value: f64,
}

pub const FACTORS: [&str; 6] = [
    "density",
    "alignment",
    "complexity",
    "density:alignment",
    "density:complexity",
    "alignment:complexity",
];

fn contrast(design: &RewardDesign, k: usize) -> f64 {
    let [d, a, c] = design.contrasts();
    [d, a, c, d * a, d * c, a * c][k]
}

/// Three main effects and three two-way interactions by `±1` contrast
/// coding (`+1` = dense, high alignment, complex). Cohen's d and the
/// p-value compare the two contrast groups.
pub fn factorial_effects(runs: &[(RewardDesign, f64)]) -> Result<Vec<EffectEstimate>> {
    for cell in RewardDesign::cells() {
        if !runs.iter().any(|(d, _)| *d == cell) {
            return Err(Error::MissingCell(cell.label()));
        }
    }
    FACTORS
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (hi, lo): (Vec<&(RewardDesign, f64)>, Vec<_>) = runs.iter().partition(|(d, _)| contrast(d, k) > 0.0);
            let hi: Vec<f64> = hi.iter().map(|r| r.1).collect();
            let lo: Vec<f64> = lo.iter().map(|r| r.1).collect();
            let d = match cohens_d(&hi, &lo) {
                Ok(d) => d,
                Err(Error::Undefined(_)) => (mean(&hi) - mean(&lo)).signum() * f64::INFINITY,
                Err(e) => return Err(e),
            };
            let p_value = match welch_t(&hi, &lo) {
                Ok(w) => w.p_value,
                Err(Error::InvalidInput(_)) => 1.0,
                Err(e) => return Err(e),
            };
            Ok(EffectEstimate { factor: name.to_string(), effect: mean(&hi) - mean(&lo), cohens_d: d, p_value })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(cohens_d(&a, &a).unwrap(), 0.0);
        let b = [2.0, 3.0, 4.0];
        assert!((cohens_d(&b, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn t_table_value() {
        // t(0.975, 10) = 2.228
        assert!((student_t_two_sided(2.228, 10.0) - 0.05).abs() < 1e-3);
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((welch_t(&a, &a).unwrap().p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_cell() {
        let runs: Vec<(RewardDesign, f64)> = RewardDesign::cells().into_iter().skip(1).map(|d| (d, 0.3)).collect();
        assert!(matches!(factorial_effects(&runs), Err(Error::MissingCell(_))));
    }
}
