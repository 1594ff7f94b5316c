//! Side-by-side report of the grouped and reduced speech strategies.

use serde::{Deserialize, Serialize};

use super::config::Strategy;
use super::corpus::CorpusStats;
use super::eval::EvalReport;
use crate::decode::{steps_for_units, LatencyModel};

/// Published speech-token rates (tokens per second) for the two strategies.
pub const REFERENCE_GROUP_TPS: f64 = 5.0;
pub const REFERENCE_REDUCE_TPS: f64 = 19.16;

/// Cost model used for the machine-independent latency column.
pub const FIXED_STEP_MS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub label: String,
    pub strategy: Option<Strategy>,
    pub units_per_step: Option<usize>,
    pub tps: f64,
    /// Steps until `n_offset` units exist when every step emits units.
    pub steps_to_first_audio: Option<usize>,
    /// `steps_to_first_audio` at the fixed per-step cost.
    pub fixed_latency_ms: Option<f64>,
    /// Median over real decodes (includes the text steps before the first group).
    pub decoded_median_steps_to_first_audio: Option<f64>,
    pub decoded_median_latency_ms: Option<f64>,
    pub token_accuracy: Option<f64>,
    pub unit_accuracy: Option<f64>,
    pub exact_match_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub receptive_field: usize,
    pub n_offset: usize,
    pub fixed_step_ms: f64,
    pub rows: Vec<StrategyRow>,
    /// Reduce over group, from the fixed-cost column.
    pub fixed_latency_ratio: Option<f64>,
    /// Total reduced length over total grouped length across the corpus.
    pub sequence_length_ratio: f64,
    /// The same ratio predicted as group size over mean run length.
    pub predicted_length_ratio: f64,
    pub corpus: CorpusStats,
}

fn measured_row(label: &str, r: &EvalReport, lm: &LatencyModel) -> StrategyRow {
    let steps = steps_for_units(lm.n_offset(), r.group_size);
    StrategyRow {
        label: label.to_string(),
        strategy: Some(r.strategy),
        units_per_step: Some(r.group_size),
        tps: r.tps,
        steps_to_first_audio: Some(steps),
        fixed_latency_ms: Some(steps as f64 * FIXED_STEP_MS),
        decoded_median_steps_to_first_audio: r.latency.median_steps_to_first_audio,
        decoded_median_latency_ms: r.latency.median_latency_ms,
        token_accuracy: r.token_accuracy,
        unit_accuracy: r.unit_accuracy,
        exact_match_rate: Some(r.exact_match.rate),
    }
}

fn reference_row(label: &str, tps: f64) -> StrategyRow {
    StrategyRow {
        label: label.to_string(),
        strategy: None,
        units_per_step: None,
        tps,
        steps_to_first_audio: None,
        fixed_latency_ms: None,
        decoded_median_steps_to_first_audio: None,
        decoded_median_latency_ms: None,
        token_accuracy: None,
        unit_accuracy: None,
        exact_match_rate: None,
    }
}

pub fn compare(group: &EvalReport, reduce: &EvalReport, corpus: &CorpusStats, lm: &LatencyModel) -> Comparison {
    let g = measured_row("group", group, lm);
    let r = measured_row("reduce", reduce, lm);
    let fixed_latency_ratio = match (g.fixed_latency_ms, r.fixed_latency_ms) {
        (Some(a), Some(b)) if a > 0.0 => Some(b / a),
        _ => None,
    };
    Comparison {
        receptive_field: lm.receptive_field,
        n_offset: lm.n_offset(),
        fixed_step_ms: FIXED_STEP_MS,
        rows: vec![
            g,
            r,
            reference_row("group (paper, not reproduced)", REFERENCE_GROUP_TPS),
            reference_row("reduce (paper, not reproduced)", REFERENCE_REDUCE_TPS),
        ],
        fixed_latency_ratio,
        sequence_length_ratio: corpus.total_reduced as f64 / corpus.total_groups as f64,
        predicted_length_ratio: corpus.group_size as f64 / corpus.mean_run_length,
        corpus: corpus.clone(),
    }
}
