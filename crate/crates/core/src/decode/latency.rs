//! First-audio latency under a chunked vocoder.

use serde::{Deserialize, Serialize};

use super::stream::DecodeTrace;
use crate::error::{Error, Result};

/// Where per-step costs come from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum StepCost {
    /// Wall-clock times recorded in the trace.
    Measured,
    /// Machine-independent constants.
    Fixed { step_ms: f64, prefill_ms: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    /// Vocoder receptive field in units.
    pub receptive_field: usize,
    pub unit_frame_rate_hz: f64,
    pub synth_fixed_ms: f64,
    pub synth_ms_per_unit: f64,
    pub step_cost: StepCost,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            receptive_field: 11,
            unit_frame_rate_hz: 25.0,
            synth_fixed_ms: 0.0,
            synth_ms_per_unit: 0.0,
            step_cost: StepCost::Measured,
        }
    }
}

impl LatencyModel {
    /// Fixed per-step cost, no prefill or synthesis cost.
    pub fn fixed(receptive_field: usize, step_ms: f64) -> Self {
        Self {
            receptive_field,
            step_cost: StepCost::Fixed {
                step_ms,
                prefill_ms: 0.0,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.receptive_field == 0 {
            return Err(Error::Config("receptive_field must be at least 1".into()));
        }
        Ok(())
    }

    /// Units the vocoder needs before its first chunk: `floor(R/2) + 1`.
    pub fn n_offset(&self) -> usize {
        self.receptive_field / 2 + 1
    }

    pub fn synth_ms(&self) -> f64 {
        self.synth_fixed_ms + self.synth_ms_per_unit * self.n_offset() as f64
    }

    pub fn mode(&self) -> &'static str {
        match self.step_cost {
            StepCost::Measured => "measured",
            StepCost::Fixed { .. } => "fixed",
        }
    }
}

/// Decode steps before the first audio chunk when every step emits `units_per_step` units.
pub fn steps_for_units(n_offset: usize, units_per_step: usize) -> usize {
    n_offset.div_ceil(units_per_step)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub n_offset: usize,
    /// `None` if the turn produced fewer than `n_offset` units.
    pub steps_to_first_audio: Option<usize>,
    /// `None` stands for an infinite latency.
    pub latency_ms: Option<f64>,
    pub mode: String,
}

impl LatencyReport {
    pub fn latency_or_inf(&self) -> f64 {
        self.latency_ms.unwrap_or(f64::INFINITY)
    }
}

/// Prefill plus the cost of every step up to the one that completes
/// `n_offset` units, plus synthesis of the first chunk.
pub fn first_audio_latency(trace: &DecodeTrace, lm: &LatencyModel) -> LatencyReport {
    let n_offset = lm.n_offset();
    let mut cum = 0;
    let mut needed = None;
    for (k, s) in trace.steps.iter().enumerate() {
        cum += s.emitted.unit_count();
        if cum >= n_offset {
            needed = Some(k + 1);
            break;
        }
    }
    let latency_ms = needed.map(|k| {
        let decode = match lm.step_cost {
            StepCost::Measured => {
                trace.prefill_ms
                    + trace.steps[..k]
                        .iter()
                        .map(|s| s.llm_wall_ms + s.gm_wall_ms)
                        .sum::<f64>()
            }
            StepCost::Fixed { step_ms, prefill_ms } => prefill_ms + step_ms * k as f64,
        };
        decode + lm.synth_ms()
    });
    LatencyReport {
        n_offset,
        steps_to_first_audio: needed,
        latency_ms,
        mode: lm.mode().to_string(),
    }
}

/// Median of the finite values (infinite entries count as larger than all).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}
