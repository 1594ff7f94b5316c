//! AdamW and the warmup-cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::loss::LossWeights;
use crate::error::{Error, Result};
use crate::model::{decays, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub peak_lr: f64,
    /// Linear warmup length; `None` means 3% of `max_steps`.
    pub warmup_steps: Option<usize>,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Global gradient-norm clip.
    pub grad_clip: Option<f64>,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub loss_weights: LossWeights,
    /// Stop once the step's total loss falls below this value.
    pub target_loss: Option<f64>,
    /// Write a checkpoint every this many steps (harness only).
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            peak_lr: 1e-3,
            warmup_steps: None,
            batch_size: 16,
            max_steps: 2000,
            seed: 0,
            grad_clip: Some(1.0),
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.95,
            adam_eps: 1e-8,
            loss_weights: LossWeights::default(),
            target_loss: None,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    /// Peak learning rate of the reference large-scale run.
    pub const REFERENCE_PEAK_LR: f64 = 1.5e-4;

    pub fn warmup(&self) -> usize {
        self.warmup_steps
            .unwrap_or_else(|| (self.max_steps as f64 * 0.03).round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0) {
            return Err(Error::Config("peak_lr must be positive".into()));
        }
        if self.batch_size == 0 || self.max_steps == 0 {
            return Err(Error::Config("batch_size and max_steps must be positive".into()));
        }
        if self.warmup() >= self.max_steps {
            return Err(Error::Config(format!(
                "warmup {} must be shorter than max_steps {}",
                self.warmup(),
                self.max_steps
            )));
        }
        if self.loss_weights.llm < 0.0 || self.loss_weights.group < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }

    /// Learning rate at `step` (0-based): linear warmup from 0, then cosine decay to 0 at `max_steps`.
    pub fn lr_at(&self, step: usize) -> f64 {
        let warmup = self.warmup();
        if step < warmup {
            return self.peak_lr * step as f64 / warmup as f64;
        }
        let span = (self.max_steps - warmup) as f64;
        let progress = ((step - warmup) as f64 / span).min(1.0);
        self.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: usize,
    pub first: Parameters<f32>,
    pub second: Parameters<f32>,
}

impl OptimizerState {
    pub fn new(p: &Parameters<f32>) -> Self {
        Self {
            step: 0,
            first: p.zeros_like(),
            second: p.zeros_like(),
        }
    }
}

/// Global L2 norm of all gradient entries.
pub fn grad_norm(g: &Parameters<f32>) -> f64 {
    g.named()
        .iter()
        .flat_map(|(_, t)| t.as_slice().iter())
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

/// One AdamW update at learning rate `lr`. Weight decay is decoupled and
/// skipped for biases and norm gains.
pub fn adamw_update(
    p: &mut Parameters<f32>,
    g: &Parameters<f32>,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
    lr: f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let clip = match cfg.grad_clip {
        Some(max) => {
            let norm = grad_norm(g);
            if norm > max {
                max / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let params = p.named_mut();
    let grads = g.named();
    let firsts = state.first.named_mut();
    let seconds = state.second.named_mut();
    for (((name, w), (_, gt)), ((_, m), (_, v))) in params.into_iter().zip(grads).zip(firsts.into_iter().zip(seconds)) {
        let wd = if decays(&name) { cfg.weight_decay } else { 0.0 };
        let iter = w
            .as_mut_slice()
            .iter_mut()
            .zip(gt.as_slice())
            .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice().iter_mut()));
        for ((wi, &gi), (mi, vi)) in iter {
            let gi = gi as f64 * clip;
            let m_new = b1 * *mi as f64 + (1.0 - b1) * gi;
            let v_new = b2 * *vi as f64 + (1.0 - b2) * gi * gi;
            *mi = m_new as f32;
            *vi = v_new as f32;
            let update = (m_new / c1) / ((v_new / c2).sqrt() + cfg.adam_eps) + wd * *wi as f64;
            *wi = (*wi as f64 - lr * update) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn schedule_endpoints() {
        let cfg = TrainConfig {
            max_steps: 1000,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.warmup(), 30);
        assert_eq!(cfg.lr_at(0), 0.0);
        assert!((cfg.lr_at(15) - cfg.peak_lr / 2.0).abs() < 1e-15);
        assert_eq!(cfg.lr_at(30), cfg.peak_lr);
        assert!(cfg.lr_at(1000) < 1e-18);
        assert!((cfg.lr_at(515) - cfg.peak_lr / 2.0).abs() < 1e-12);
        for s in 30..1000 {
            assert!(cfg.lr_at(s + 1) <= cfg.lr_at(s));
        }
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            warmup_steps: Some(10),
            max_steps: 10,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig {
            peak_lr: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn first_step_moves_by_lr_in_gradient_sign() {
        let c = ModelConfig::tiny();
        let mut p = Parameters::<f32>::zeros(&c);
        let mut g = p.zeros_like();
        g.text_head.set(0, 0, 3.0);
        g.final_norm.bias.set(0, 1, -2.0);
        let mut st = OptimizerState::new(&p);
        let cfg = TrainConfig {
            grad_clip: None,
            ..TrainConfig::default()
        };
        adamw_update(&mut p, &g, &mut st, &cfg, 0.01);
        assert!((p.text_head.get(0, 0) + 0.01).abs() < 1e-6);
        assert!((p.final_norm.bias.get(0, 1) - 0.01).abs() < 1e-6);
        assert_eq!(p.text_head.get(1, 1), 0.0);
    }

    #[test]
    fn decay_skips_biases_and_gains() {
        let c = ModelConfig::tiny();
        let mut p = Parameters::<f32>::zeros(&c);
        p.text_head.fill(1.0);
        p.final_norm.gain.fill(1.0);
        p.final_norm.bias.fill(1.0);
        let g = p.zeros_like();
        let mut st = OptimizerState::new(&p);
        adamw_update(&mut p, &g, &mut st, &TrainConfig::default(), 0.1);
        assert!((p.text_head.get(0, 0) - (1.0 - 0.1 * 0.01)).abs() < 1e-7);
        assert_eq!(p.final_norm.gain.get(0, 0), 1.0);
        assert_eq!(p.final_norm.bias.get(0, 0), 1.0);
    }
}
