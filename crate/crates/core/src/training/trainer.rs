//! Optimization loop.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grad::{batch_loss, compute_gradients};
use super::loss::LossBreakdown;
use super::optim::{adamw_update, OptimizerState, TrainConfig};
use crate::dialogue::RenderedSequence;
use crate::error::Result;
use crate::model::Parameters;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss_llm: f64,
    pub loss_group: f64,
    pub total: f64,
    pub wall_ms: f64,
}

/// One optimizer update on `batch`. On any error the parameters are left untouched.
pub fn train_step(
    p: &mut Parameters<f32>,
    batch: &[RenderedSequence],
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, f64)> {
    let lr = cfg.lr_at(state.step);
    let (losses, grad) = compute_gradients(p, batch, cfg.loss_weights)?;
    adamw_update(p, &grad, state, cfg, lr);
    Ok((losses, lr))
}

/// Shuffled passes over the data, reshuffled every epoch.
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub steps: usize,
    pub history: Vec<StepRecord>,
    /// Loss over the whole training set when training stopped, if it was evaluated.
    pub final_loss: Option<LossBreakdown>,
    pub reached_target: bool,
}

/// Trains `p` on `data`. `observer` sees every step record and the updated parameters.
///
/// With a `target_loss`, whenever a batch loss falls below it the whole set is
/// evaluated, and training stops if that loss is below the target too.
pub fn train(
    p: &mut Parameters<f32>,
    data: &[RenderedSequence],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&StepRecord, &Parameters<f32>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut state = OptimizerState::new(p);
    let mut sampler = BatchSampler::new(data.len(), cfg.seed);
    let mut history = Vec::with_capacity(cfg.max_steps);
    let mut final_loss = None;
    let mut reached_target = false;
    for step in 0..cfg.max_steps {
        let start = Instant::now();
        let batch: Vec<RenderedSequence> = sampler
            .next_batch(cfg.batch_size)
            .into_iter()
            .map(|i| data[i].clone())
            .collect();
        let (losses, lr) = train_step(p, &batch, &mut state, cfg)?;
        let record = StepRecord {
            step,
            lr,
            loss_llm: losses.loss_llm,
            loss_group: losses.loss_group,
            total: losses.total,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        observer(&record, p)?;
        history.push(record);
        if let Some(target) = cfg.target_loss {
            if losses.total < target {
                let full = batch_loss(p, data, cfg.loss_weights)?;
                final_loss = Some(full);
                if full.total < target {
                    reached_target = true;
                    break;
                }
            }
        }
    }
    if !reached_target && !history.is_empty() {
        final_loss = Some(batch_loss(p, data, cfg.loss_weights)?);
    }
    Ok(TrainOutcome {
        steps: history.len(),
        history,
        final_loss,
        reached_target,
    })
}

/// Observer that writes each step record as a JSON line.
pub fn jsonl_logger<W: Write>(mut w: W) -> impl FnMut(&StepRecord, &Parameters<f32>) -> Result<()> {
    move |rec, _| {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}
