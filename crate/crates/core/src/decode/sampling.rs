use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    /// 0 means greedy.
    pub temperature: f64,
    /// 0 disables top-k.
    pub top_k: usize,
    /// 1 disables nucleus truncation.
    pub top_p: f64,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_k: 10,
            top_p: 0.8,
            seed: 0,
        }
    }
}

impl SamplingParams {
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            top_k: 0,
            top_p: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config("temperature must be finite and nonnegative".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config("top_p must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Lowest index among the maxima.
pub fn argmax(logits: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in logits.iter().enumerate() {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|b| v > logits[b]) {
            best = Some(i);
        }
    }
    best
}

/// Truncated, renormalized distribution as `(token, probability)` in descending order.
///
/// Temperature scaling, then top-k, then top-p over the sorted distribution.
/// Equal probabilities keep ascending token order.
pub fn truncated_distribution(logits: &[f64], sp: &SamplingParams) -> Result<Vec<(u32, f64)>> {
    if logits.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Config("logits must be finite or -inf".into()));
    }
    let best = argmax(logits).ok_or(Error::NoSampleableToken)?;
    if sp.temperature == 0.0 {
        return Ok(vec![(best as u32, 1.0)]);
    }
    let max = logits[best];
    let mut probs: Vec<(u32, f64)> = logits
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > f64::NEG_INFINITY)
        .map(|(i, &v)| (i as u32, ((v - max) / sp.temperature).exp()))
        .collect();
    // Stable: ties stay in ascending id order.
    probs.sort_by(|a, b| b.1.total_cmp(&a.1));
    if sp.top_k > 0 {
        probs.truncate(sp.top_k);
    }
    let total: f64 = probs.iter().map(|p| p.1).sum();
    for p in &mut probs {
        p.1 /= total;
    }
    if sp.top_p < 1.0 {
        let mut cum = 0.0;
        let mut keep = probs.len();
        for (i, p) in probs.iter().enumerate() {
            cum += p.1;
            // Tolerance so that e.g. 0.5 + 0.3 counts as reaching 0.8.
            if cum >= sp.top_p - 1e-12 {
                keep = i + 1;
                break;
            }
        }
        probs.truncate(keep);
        let total: f64 = probs.iter().map(|p| p.1).sum();
        for p in &mut probs {
            p.1 /= total;
        }
    }
    Ok(probs)
}

/// Draws one token. Greedy decoding does not touch `rng`.
pub fn sample_token(logits: &[f64], sp: &SamplingParams, rng: &mut impl Rng) -> Result<u32> {
    let dist = truncated_distribution(logits, sp)?;
    if dist.len() == 1 {
        return Ok(dist[0].0);
    }
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for &(tok, p) in &dist {
        cum += p;
        if u < cum {
            return Ok(tok);
        }
    }
    Ok(dist.last().expect("nonempty").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// An rng that fails the test if it is used.
    struct Untouchable;

    impl rand::RngCore for Untouchable {
        fn next_u32(&mut self) -> u32 {
            panic!("rng used")
        }
        fn next_u64(&mut self) -> u64 {
            panic!("rng used")
        }
        fn fill_bytes(&mut self, _: &mut [u8]) {
            panic!("rng used")
        }
        fn try_fill_bytes(&mut self, _: &mut [u8]) -> std::result::Result<(), rand::Error> {
            panic!("rng used")
        }
    }

    #[test]
    fn greedy_is_argmax_without_rng() {
        let logits = [0.5, 2.0, 2.0, -1.0];
        let sp = SamplingParams::greedy();
        assert_eq!(sample_token(&logits, &sp, &mut Untouchable).unwrap(), 1);
    }

    #[test]
    fn top_k_one_is_argmax() {
        let logits = [0.5, 2.0, 1.9, -1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in [0.1, 1.0, 10.0] {
            let sp = SamplingParams {
                temperature: t,
                top_k: 1,
                top_p: 1.0,
                seed: 0,
            };
            for _ in 0..100 {
                assert_eq!(sample_token(&logits, &sp, &mut rng).unwrap(), 1);
            }
        }
    }

    #[test]
    fn dominant_logit_under_default_params() {
        let mut logits = vec![0.0; 52];
        logits[0] = 10.0;
        let dist = truncated_distribution(&logits, &SamplingParams::default()).unwrap();
        assert!(dist[0].0 == 0 && dist[0].1 > 0.999);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..10_000)
            .filter(|_| sample_token(&logits, &SamplingParams::default(), &mut rng).unwrap() == 0)
            .count();
        assert_eq!(hits, 10_000);
    }

    #[test]
    fn ties_prefer_lower_ids() {
        let logits = [1.0, 3.0, 3.0, 3.0, 0.0];
        let sp = SamplingParams {
            temperature: 1.0,
            top_k: 2,
            top_p: 1.0,
            seed: 0,
        };
        let d = truncated_distribution(&logits, &sp).unwrap();
        assert_eq!(d.iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn nucleus_keeps_smallest_prefix_reaching_p() {
        let probs: [f64; 4] = [0.5, 0.3, 0.15, 0.05];
        let logits: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        let sp = SamplingParams {
            temperature: 1.0,
            top_k: 0,
            top_p: 0.8,
            seed: 0,
        };
        let d = truncated_distribution(&logits, &sp).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d[0].1 - 0.625).abs() < 1e-12);
    }

    #[test]
    fn all_masked_is_rejected() {
        let logits = [f64::NEG_INFINITY; 4];
        assert!(matches!(
            sample_token(&logits, &SamplingParams::default(), &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::NoSampleableToken)
        ));
    }

    #[test]
    fn untruncated_sampling_matches_tempered_softmax() {
        let logits = [1.0, 0.2, -0.5, 2.0, 0.0, 1.5, -1.0, 0.7];
        let t = 0.9;
        let sp = SamplingParams {
            temperature: t,
            top_k: 0,
            top_p: 1.0,
            seed: 0,
        };
        let z: f64 = logits.iter().map(|l| (l / t).exp()).sum();
        let expected: Vec<f64> = logits.iter().map(|l| (l / t).exp() / z).collect();
        let n = 100_000;
        let mut counts = [0usize; 8];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..n {
            counts[sample_token(&logits, &sp, &mut rng).unwrap() as usize] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&expected)
            .map(|(&c, &p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 7 degrees of freedom, 0.1% critical value.
        assert!(chi2 < 24.32, "chi2 = {chi2}");
    }
}
