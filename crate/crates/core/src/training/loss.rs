//! Masked cross-entropy losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Real};

/// Both objectives and their combination.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss_llm: f64,
    pub loss_group: f64,
    pub total: f64,
    pub n_llm_positions: usize,
    pub n_group_slots: usize,
}

impl LossBreakdown {
    pub fn new(
        loss_llm: f64,
        loss_group: f64,
        weights: LossWeights,
        n_llm_positions: usize,
        n_group_slots: usize,
    ) -> Self {
        Self {
            loss_llm,
            loss_group,
            total: weights.combine(loss_llm, loss_group),
            n_llm_positions,
            n_group_slots,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.loss_llm.is_finite() && self.loss_group.is_finite() && self.total.is_finite()
    }
}

/// Scales applied to the two objectives. The default sums them unweighted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub llm: f64,
    pub group: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { llm: 1.0, group: 1.0 }
    }
}

impl LossWeights {
    pub fn combine(self, loss_llm: f64, loss_group: f64) -> f64 {
        if self.llm == 1.0 && self.group == 1.0 {
            loss_llm + loss_group
        } else {
            self.llm * loss_llm + self.group * loss_group
        }
    }
}

/// Sum of cross-entropies of `logits` rows against `targets`, as `(row, target)` pairs.
///
/// With `grad = Some((g, scale))`, adds `scale * (softmax - onehot)` into the matching rows of `g`.
pub(crate) fn cross_entropy_sum<T: Real>(
    logits: &Matrix<T>,
    targets: impl IntoIterator<Item = (usize, u32)>,
    mut grad: Option<(&mut Matrix<T>, T)>,
) -> f64 {
    let mut total = 0.0f64;
    let mut probs = vec![0.0f64; logits.cols()];
    for (row, target) in targets {
        let x = logits.row(row);
        let (arg, max) = x.iter().enumerate().fold((0, f64::NEG_INFINITY), |(i, m), (j, &v)| {
            if v.as_f64() > m {
                (j, v.as_f64())
            } else {
                (i, m)
            }
        });
        // Sum of the non-max terms, so log-sum-exp keeps precision when one logit dominates.
        let mut rest = 0.0;
        for (j, (p, &v)) in probs.iter_mut().zip(x).enumerate() {
            *p = (v.as_f64() - max).exp();
            if j != arg {
                rest += *p;
            }
        }
        let sum = 1.0 + rest;
        total += rest.ln_1p() + max - x[target as usize].as_f64();
        if let Some((g, scale)) = grad.as_mut() {
            let gr = g.row_mut(row);
            for (j, (o, &p)) in gr.iter_mut().zip(&probs).enumerate() {
                let mut d = p / sum;
                if j == target as usize {
                    d -= 1.0;
                }
                *o = *o + *scale * T::of(d);
            }
        }
    }
    total
}

/// Mean over masked positions and the number of positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskedMean {
    pub value: f64,
    pub count: usize,
}

impl MaskedMean {
    fn from_sum(sum: f64, count: usize) -> Self {
        let value = if count == 0 { 0.0 } else { sum / count as f64 };
        Self { value, count }
    }
}

/// `(row, target)` pairs for next-token prediction: row `t` predicts token `t+1` where `llm_mask[t+1]`.
pub(crate) fn llm_targets<'a>(tokens: &'a [u32], llm_mask: &'a [bool]) -> impl Iterator<Item = (usize, u32)> + 'a {
    (1..tokens.len())
        .filter(move |&t| llm_mask[t])
        .map(move |t| (t - 1, tokens[t]))
}

/// `(row, target)` pairs for every unit of every unmasked slot.
pub(crate) fn group_targets<'a>(
    units: &'a [u32],
    group_mask: &'a [bool],
    group_size: usize,
) -> impl Iterator<Item = (usize, u32)> + 'a {
    group_mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .flat_map(move |(k, _)| (k * group_size..(k + 1) * group_size).map(move |i| (i, units[i])))
}

fn check_vocab(targets: &[u32], vocab: usize, what: &str) -> Result<()> {
    match targets.iter().find(|&&t| t as usize >= vocab) {
        Some(t) => Err(Error::ShapeMismatch(format!(
            "{what} target {t} outside {vocab} classes"
        ))),
        None => Ok(()),
    }
}

/// Next-token cross-entropy averaged over positions whose target is llm-masked in.
pub fn loss_llm<T: Real>(text_logits: &Matrix<T>, tokens: &[u32], llm_mask: &[bool]) -> Result<MaskedMean> {
    if text_logits.rows() != tokens.len() || llm_mask.len() != tokens.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows, {} tokens, {} mask entries",
            text_logits.rows(),
            tokens.len(),
            llm_mask.len()
        )));
    }
    check_vocab(tokens, text_logits.cols(), "token")?;
    let count = llm_targets(tokens, llm_mask).count();
    let sum = cross_entropy_sum(text_logits, llm_targets(tokens, llm_mask), None);
    Ok(MaskedMean::from_sum(sum, count))
}

/// Per-unit cross-entropy averaged over all units of unmasked slots.
///
/// `target_units` holds `G` units per slot in slot order.
pub fn loss_group<T: Real>(
    group_logits: &Matrix<T>,
    target_units: &[u32],
    group_mask: &[bool],
    group_size: usize,
) -> Result<MaskedMean> {
    if group_logits.rows() != target_units.len() || group_mask.len() * group_size != target_units.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows, {} target units, {} slots of {group_size}",
            group_logits.rows(),
            target_units.len(),
            group_mask.len()
        )));
    }
    check_vocab(target_units, group_logits.cols(), "unit")?;
    let count = group_mask.iter().filter(|&&m| m).count();
    let sum = cross_entropy_sum(group_logits, group_targets(target_units, group_mask, group_size), None);
    Ok(MaskedMean::from_sum(sum, count * group_size))
}
