//! Objective misalignment: trigram perplexity of the action sequence under
//! a model of the reference policy.

use serde::{Deserialize, Serialize};

use super::DetectorConfig;
use crate::episode::{ActionSpace, ActionValue, Episode, HackingCategory};
use crate::error::{Error, Result};
use crate::signal::{DetectorSignal, SignalWarning};
use crate::stats::{mean, std_dev};

const MIN_REFERENCES: usize = 10;
/// Weight of the smoothness z-score added to continuous-action perplexity.
const SMOOTHNESS_WEIGHT: f64 = 1e-6;
const NO_SYMBOL: u32 = u32::MAX;

/// Uniform per-dimension binning of continuous actions over the fitted
/// ranges; out-of-range values fall into the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub lows: Vec<f64>,
    pub highs: Vec<f64>,
    pub bins: u32,
}

impl Quantizer {
    pub fn symbol(&self, a: &[f64]) -> u32 {
        let mut code: u64 = 0;
        let mut radix: u64 = 1;
        for ((x, lo), hi) in a.iter().zip(&self.lows).zip(&self.highs) {
            let b = if hi > lo {
                let pos = ((x - lo) / (hi - lo) * f64::from(self.bins)).floor();
                if pos.is_nan() {
                    0
                } else {
                    pos.clamp(0.0, f64::from(self.bins - 1)) as u64
                }
            } else {
                0
            };
            code += b * radix;
            radix = radix.saturating_mul(u64::from(self.bins));
        }
        code.min(u64::from(u32::MAX - 1)) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisalignmentModel {
    /// Sorted symbols seen in the references.
    pub vocab: Vec<u32>,
    /// Reserve one extra vocabulary slot for unseen symbols.
    pub unk: bool,
    pub trigrams: Vec<([u32; 3], u32)>,
    pub trigram_contexts: Vec<([u32; 2], u32)>,
    pub bigrams: Vec<([u32; 2], u32)>,
    pub bigram_contexts: Vec<(u32, u32)>,
    pub mu_ppl: f64,
    pub sigma_ppl: f64,
    pub sigma_mult: f64,
    pub quantizer: Option<Quantizer>,
    pub smooth_mean: f64,
    pub smooth_sd: f64,
}

fn lookup<K: Ord + Copy>(table: &[(K, u32)], key: K) -> u32 {
    table.binary_search_by(|(k, _)| k.cmp(&key)).map(|i| table[i].1).unwrap_or(0)
}

fn tally<K: Ord + Copy>(mut keys: Vec<K>) -> Vec<(K, u32)> {
    keys.sort_unstable();
    let mut out: Vec<(K, u32)> = Vec::new();
    for k in keys {
        match out.last_mut() {
            Some((last, c)) if *last == k => *c += 1,
            _ => out.push((k, 1)),
        }
    }
    out
}

/// Mean squared second difference of the action vectors.
fn roughness(e: &Episode) -> f64 {
    let acts: Vec<&[f64]> = e.steps.iter().filter_map(|s| s.action.as_slice()).collect();
    if acts.len() < 3 {
        return 0.0;
    }
    let total: f64 = acts
        .windows(3)
        .map(|w| w[0].iter().zip(w[1]).zip(w[2]).map(|((a, b), c)| (c - 2.0 * b + a).powi(2)).sum::<f64>())
        .sum();
    total / (acts.len() - 2) as f64
}

impl MisalignmentModel {
    /// A model with no counts over `n` symbols and no unknown slot: every
    /// transition has probability `1 / n`.
    pub fn uniform(n: u32) -> Self {
        MisalignmentModel {
            vocab: (0..n).collect(),
            unk: false,
            trigrams: vec![],
            trigram_contexts: vec![],
            bigrams: vec![],
            bigram_contexts: vec![],
            mu_ppl: f64::from(n),
            sigma_ppl: 0.0,
            sigma_mult: 2.0,
            quantizer: None,
            smooth_mean: 0.0,
            smooth_sd: 0.0,
        }
    }

    fn vocab_size(&self) -> f64 {
        (self.vocab.len() + usize::from(self.unk)) as f64
    }

    fn raw_symbol(&self, a: &ActionValue) -> u32 {
        match (a, &self.quantizer) {
            (ActionValue::Discrete(s), _) => *s,
            (ActionValue::Continuous(v), Some(q)) => q.symbol(v),
            (ActionValue::Continuous(_), None) => NO_SYMBOL,
        }
    }

    /// Maps actions to dense token ids; unseen symbols share the id
    /// `vocab.len()`.
    pub fn tokens(&self, e: &Episode) -> Vec<u32> {
        let unk = self.vocab.len() as u32;
        e.steps
            .iter()
            .map(|s| {
                let sym = self.raw_symbol(&s.action);
                self.vocab.binary_search(&sym).map(|i| i as u32).unwrap_or(unk)
            })
            .collect()
    }

    fn trigram_prob(&self, a: u32, b: u32, c: u32) -> f64 {
        let n = f64::from(lookup(&self.trigrams, [a, b, c]));
        let d = f64::from(lookup(&self.trigram_contexts, [a, b]));
        (n + 1.0) / (d + self.vocab_size())
    }

    fn bigram_prob(&self, b: u32, c: u32) -> f64 {
        let n = f64::from(lookup(&self.bigrams, [b, c]));
        let d = f64::from(lookup(&self.bigram_contexts, b));
        (n + 1.0) / (d + self.vocab_size())
    }

    fn smoothness_z(&self, e: &Episode) -> f64 {
        if self.quantizer.is_none() || self.smooth_sd <= 0.0 {
            return 0.0;
        }
        ((roughness(e) - self.smooth_mean) / self.smooth_sd).clamp(-10.0, 10.0)
    }

    pub fn threshold(&self) -> f64 {
        self.mu_ppl + self.sigma_mult * self.sigma_ppl
    }
}

/// `2^(-(1/N) sum log2 P(a_i | a_{i-2}, a_{i-1}))` over positions `i >= 2`.
/// Two-token sequences fall back to bigram contexts (second tuple field
/// set); a single token has no defined perplexity.
pub fn perplexity(model: &MisalignmentModel, tokens: &[u32]) -> Option<(f64, bool)> {
    match tokens.len() {
        0 | 1 => None,
        2 => Some((1.0 / model.bigram_prob(tokens[0], tokens[1]), true)),
        _ => {
            let n = (tokens.len() - 2) as f64;
            let total: f64 = tokens.windows(3).map(|w| model.trigram_prob(w[0], w[1], w[2]).log2()).sum();
            Some(((-total / n).exp2(), false))
        }
    }
}

fn fit_quantizer(reference: &[Episode], dim: usize, bins: u32) -> Quantizer {
    let mut lows = vec![f64::INFINITY; dim];
    let mut highs = vec![f64::NEG_INFINITY; dim];
    for s in reference.iter().flat_map(|e| &e.steps) {
        if let Some(v) = s.action.as_slice() {
            for (d, x) in v.iter().enumerate().take(dim) {
                lows[d] = lows[d].min(*x);
                highs[d] = highs[d].max(*x);
            }
        }
    }
    for d in 0..dim {
        if !lows[d].is_finite() {
            lows[d] = 0.0;
            highs[d] = 0.0;
        }
    }
    Quantizer { lows, highs, bins: bins.max(1) }
}

pub fn misalignment_fit(reference: &[Episode], cfg: &DetectorConfig) -> Result<MisalignmentModel> {
    let fail = |reason: String| Error::Fit { detector: HackingCategory::ObjectiveMisalignment, reason };
    let usable: Vec<Episode> = reference.iter().filter(|e| e.len() >= 3).cloned().collect();
    if usable.len() < MIN_REFERENCES {
        return Err(fail(format!(
            "needs at least {MIN_REFERENCES} reference episodes with 3 or more steps, got {}",
            usable.len()
        )));
    }
    let quantizer = match usable[0].action_space {
        ActionSpace::Continuous(dim) => Some(fit_quantizer(&usable, dim as usize, cfg.quant_bins as u32)),
        ActionSpace::Discrete(_) => None,
    };
    let mut model = MisalignmentModel {
        vocab: vec![],
        unk: true,
        trigrams: vec![],
        trigram_contexts: vec![],
        bigrams: vec![],
        bigram_contexts: vec![],
        mu_ppl: 0.0,
        sigma_ppl: 0.0,
        sigma_mult: cfg.ppl_sigma_mult,
        quantizer,
        smooth_mean: 0.0,
        smooth_sd: 0.0,
    };
    let mut vocab: Vec<u32> =
        usable.iter().flat_map(|e| e.steps.iter().map(|s| model.raw_symbol(&s.action))).collect();
    vocab.sort_unstable();
    vocab.dedup();
    model.vocab = vocab;

    let token_seqs: Vec<Vec<u32>> = usable.iter().map(|e| model.tokens(e)).collect();
    let mut tri = Vec::new();
    let mut bi = Vec::new();
    for toks in &token_seqs {
        tri.extend(toks.windows(3).map(|w| [w[0], w[1], w[2]]));
        bi.extend(toks.windows(2).map(|w| [w[0], w[1]]));
    }
    model.trigram_contexts = tally(tri.iter().map(|t| [t[0], t[1]]).collect());
    model.trigrams = tally(tri);
    model.bigram_contexts = tally(bi.iter().map(|b| b[0]).collect());
    model.bigrams = tally(bi);

    if model.quantizer.is_some() {
        let r: Vec<f64> = usable.iter().map(roughness).collect();
        model.smooth_mean = mean(&r);
        model.smooth_sd = std_dev(&r);
    }
    let raws: Vec<f64> = usable
        .iter()
        .zip(&token_seqs)
        .map(|(e, toks)| {
            let (ppl, _) = perplexity(&model, toks).expect("length >= 3");
            ppl + SMOOTHNESS_WEIGHT * model.smoothness_z(e)
        })
        .collect();
    model.mu_ppl = mean(&raws);
    model.sigma_ppl = std_dev(&raws);
    Ok(model)
}

/// Raw score is the perplexity (plus a tiny smoothness term for continuous
/// actions); flagged above `mu + k sigma` of the reference perplexities.
pub fn misalignment_score(model: &MisalignmentModel, e: &Episode, threshold_factor: f64) -> DetectorSignal {
    let cat = HackingCategory::ObjectiveMisalignment;
    let toks = model.tokens(e);
    match perplexity(model, &toks) {
        None => DetectorSignal::abstain(cat).with_warning(Some(SignalWarning::ShortEpisode)),
        Some((ppl, short)) => {
            let raw = ppl + SMOOTHNESS_WEIGHT * model.smoothness_z(e);
            DetectorSignal::new(cat, raw, model.threshold() * threshold_factor)
                .with_warning(short.then_some(SignalWarning::ShortEpisode))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        for n in [2u32, 4, 7, 16] {
            let m = MisalignmentModel::uniform(n);
            let toks: Vec<u32> = (0..50).map(|i| (i * 3) % n).collect();
            let (ppl, short) = perplexity(&m, &toks).unwrap();
            assert!(!short);
            assert!((ppl - f64::from(n)).abs() < 1e-9, "{ppl}");
        }
    }

    #[test]
    fn bigram_fallback_and_abstain() {
        let m = MisalignmentModel::uniform(4);
        assert_eq!(perplexity(&m, &[1, 2]), Some((4.0, true)));
        assert_eq!(perplexity(&m, &[1]), None);
    }

    #[test]
    fn quantizer_codes() {
        let q = Quantizer { lows: vec![0.0, 0.0], highs: vec![8.0, 8.0], bins: 8 };
        assert_eq!(q.symbol(&[0.5, 0.5]), 0);
        assert_eq!(q.symbol(&[1.5, 0.5]), 1);
        assert_eq!(q.symbol(&[0.5, 1.5]), 8);
        assert_eq!(q.symbol(&[100.0, -5.0]), 7);
        assert_eq!(q.symbol(&[8.0, 8.0]), 63);
    }
}
