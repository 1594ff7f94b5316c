//! Batch loss, exact gradients and the finite-difference oracle.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{cross_entropy_sum, group_targets, llm_targets, LossBreakdown, LossWeights};
use crate::dialogue::RenderedSequence;
use crate::error::{Error, Result};
use crate::model::{backward, forward_with_cache, full_forward, Parameters};
use crate::tensor::{Matrix, Real};

/// Positions contributing to each loss across a batch.
fn batch_counts(batch: &[RenderedSequence]) -> (usize, usize) {
    let llm = batch
        .iter()
        .map(|r| r.llm_mask.iter().skip(1).filter(|&&m| m).count())
        .sum();
    let slots = batch.iter().map(|r| r.group_mask.iter().filter(|&&m| m).count()).sum();
    (llm, slots)
}

fn check_batch<T: Real>(batch: &[RenderedSequence], p: &Parameters<T>) -> Result<()> {
    for r in batch {
        if r.llm_mask.len() != r.len() || r.group_mask.len() != r.num_slots() {
            return Err(Error::ShapeMismatch("mask lengths do not match the sequence".into()));
        }
        if r.group_size != p.config.group_size {
            return Err(Error::ShapeMismatch(format!(
                "sequence group size {} for a model with group size {}",
                r.group_size, p.config.group_size
            )));
        }
    }
    Ok(())
}

fn mean(sum: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Pooled losses over a batch: each objective is a mean over all of its positions in the batch.
pub fn batch_loss<T: Real>(
    p: &Parameters<T>,
    batch: &[RenderedSequence],
    weights: LossWeights,
) -> Result<LossBreakdown> {
    check_batch(batch, p)?;
    let (n_llm, n_slots) = batch_counts(batch);
    let g = p.config.group_size;
    let (mut llm_sum, mut group_sum) = (0.0, 0.0);
    for r in batch {
        let out = full_forward(r, p)?;
        llm_sum += cross_entropy_sum(&out.text_logits, llm_targets(&r.tokens, &r.llm_mask), None);
        let units = r.flat_slot_units();
        group_sum += cross_entropy_sum(&out.group_logits, group_targets(&units, &r.group_mask, g), None);
    }
    Ok(LossBreakdown::new(
        mean(llm_sum, n_llm),
        mean(group_sum, n_slots * g),
        weights,
        n_llm,
        n_slots,
    ))
}

/// Losses and the gradient of the weighted total with respect to every parameter.
///
/// Samples are processed in order and their gradients summed in that order,
/// so the result is deterministic.
pub fn compute_gradients<T: Real>(
    p: &Parameters<T>,
    batch: &[RenderedSequence],
    weights: LossWeights,
) -> Result<(LossBreakdown, Parameters<T>)> {
    check_batch(batch, p)?;
    let (n_llm, n_slots) = batch_counts(batch);
    let g = p.config.group_size;
    let llm_scale = if n_llm == 0 { 0.0 } else { weights.llm / n_llm as f64 };
    let group_scale = if n_slots == 0 {
        0.0
    } else {
        weights.group / (n_slots * g) as f64
    };
    let mut grad = p.zeros_like();
    let (mut llm_sum, mut group_sum) = (0.0, 0.0);
    for r in batch {
        let (out, cache) = forward_with_cache(r, p)?;
        let mut d_text = Matrix::zeros_like(&out.text_logits);
        llm_sum += cross_entropy_sum(
            &out.text_logits,
            llm_targets(&r.tokens, &r.llm_mask),
            Some((&mut d_text, T::of(llm_scale))),
        );
        let units = r.flat_slot_units();
        let mut d_group = Matrix::zeros_like(&out.group_logits);
        group_sum += cross_entropy_sum(
            &out.group_logits,
            group_targets(&units, &r.group_mask, g),
            Some((&mut d_group, T::of(group_scale))),
        );
        let sample_grad = backward(p, r, &out.hidden, &cache, &d_text, &d_group);
        for ((_, acc), (_, s)) in grad.named_mut().into_iter().zip(sample_grad.named()) {
            acc.add_assign(s);
        }
    }
    let losses = LossBreakdown::new(
        mean(llm_sum, n_llm),
        mean(group_sum, n_slots * g),
        weights,
        n_llm,
        n_slots,
    );
    if !losses.is_finite() {
        return Err(Error::NonFiniteLoss {
            llm: losses.loss_llm,
            group: losses.loss_group,
        });
    }
    if let Some(name) = grad.first_non_finite() {
        return Err(Error::NonFiniteGradient(name));
    }
    Ok((losses, grad))
}

/// Per-tensor result of a finite-difference comparison.
#[derive(Clone, Debug, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub tensors: Vec<TensorCheck>,
}

/// `|a - b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares analytic gradients with central differences on up to
/// `per_tensor` randomly chosen entries of every tensor.
pub fn grad_check(
    p: &Parameters<f64>,
    batch: &[RenderedSequence],
    eps: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let weights = LossWeights::default();
    let (_, analytic) = compute_gradients(p, batch, weights)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = p.clone();
    let mut tensors = Vec::new();
    let names: Vec<(String, usize)> = p.named().into_iter().map(|(n, t)| (n, t.len())).collect();
    for (ti, (name, len)) in names.iter().enumerate() {
        let picks = sample(&mut rng, *len, per_tensor.min(*len));
        let mut worst = 0.0f64;
        for i in picks.iter() {
            let orig = p.named()[ti].1.as_slice()[i];
            let f = |probe: &mut Parameters<f64>, v: f64| -> Result<f64> {
                probe.named_mut()[ti].1.as_mut_slice()[i] = v;
                Ok(batch_loss(probe, batch, weights)?.total)
            };
            let plus = f(&mut probe, orig + eps)?;
            let minus = f(&mut probe, orig - eps)?;
            probe.named_mut()[ti].1.as_mut_slice()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let exact = analytic.named()[ti].1.as_slice()[i];
            worst = worst.max(relative_error(numeric, exact));
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            checked: picks.len(),
            max_rel_error: worst,
        });
    }
    let worst = tensors
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .expect("at least one tensor");
    Ok(GradCheckReport {
        max_rel_error: worst.max_rel_error,
        worst_tensor: worst.name.clone(),
        tensors,
    })
}
