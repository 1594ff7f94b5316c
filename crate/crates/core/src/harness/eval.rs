//! Teacher-forced accuracies, greedy replay of the training set, TPS and latency.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Strategy};
use super::corpus::CorpusStats;
use super::data::Sample;
use crate::decode::{
    argmax, decode_turn, first_audio_latency, median, DecodeOptions, DecodeOutput, LatencyModel, SamplingParams,
};
use crate::dialogue::{Modality, RenderedSequence, SpeechLayout, TaskKind, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{full_forward, Parameters};
use crate::training::{batch_loss, LossBreakdown};

/// Correct / total counts of argmax predictions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hits {
    pub correct: usize,
    pub total: usize,
}

impl Hits {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, other: Hits) {
        self.correct += other.correct;
        self.total += other.total;
    }
}

/// Teacher-forced next-token hits on llm positions and unit hits on group slots.
pub fn teacher_forced_hits(p: &Parameters<f32>, r: &RenderedSequence) -> Result<(Hits, Hits)> {
    let out = full_forward(r, p)?;
    let row = |m: &crate::tensor::Matrix<f32>, i: usize| -> Vec<f64> { m.row(i).iter().map(|&v| v as f64).collect() };
    let mut tokens = Hits::default();
    for t in 1..r.len() {
        if r.llm_mask[t] {
            tokens.total += 1;
            if argmax(&row(&out.text_logits, t - 1)) == Some(r.tokens[t] as usize) {
                tokens.correct += 1;
            }
        }
    }
    let g = out.group_size;
    let mut units = Hits::default();
    for k in 0..r.num_slots() {
        if !r.group_mask[k] {
            continue;
        }
        for (j, &u) in r.slot_units(k).iter().enumerate() {
            units.total += 1;
            if argmax(&row(&out.group_logits, k * g + j)) == Some(u as usize) {
                units.correct += 1;
            }
        }
    }
    Ok((tokens, units))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskAccuracy {
    pub task: TaskKind,
    pub n_samples: usize,
    pub tokens: Hits,
    pub units: Hits,
    pub token_accuracy: Option<f64>,
    /// `None` for tasks without speech slots.
    pub unit_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExactMatch {
    pub n_samples: usize,
    pub token_stream_matches: usize,
    pub unit_stream_matches: usize,
    /// Both streams equal to the reference.
    pub matches: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n_offset: usize,
    pub mode: String,
    /// Decodes of speech-response samples.
    pub n_turns: usize,
    /// Turns that never produced `n_offset` units.
    pub n_infinite: usize,
    /// `None` when there is no turn or the median is infinite.
    pub median_latency_ms: Option<f64>,
    pub median_steps_to_first_audio: Option<f64>,
}

/// Speech tokens per second of audio for a strategy: the step rate of the backbone.
pub fn strategy_tps(strategy: Strategy, stats: &CorpusStats) -> f64 {
    match strategy {
        Strategy::Group => stats.group_tps,
        Strategy::Reduce => stats.reduce_tps,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: Strategy,
    pub group_size: usize,
    pub n_samples: usize,
    pub per_task: Vec<TaskAccuracy>,
    pub token_accuracy: Option<f64>,
    pub unit_accuracy: Option<f64>,
    pub exact_match: ExactMatch,
    pub tps: f64,
    pub latency: LatencyStats,
    pub losses: LossBreakdown,
}

/// Greedy decode of one sample's last assistant turn.
pub fn replay(
    p: &Parameters<f32>,
    sample: &Sample,
    layout: SpeechLayout,
    max_steps: usize,
) -> Result<(DecodeOutput, bool, bool)> {
    let vocab = Vocabulary::default();
    let e = sample.expected(layout, &vocab)?;
    let opts = DecodeOptions {
        max_steps,
        ..DecodeOptions::default()
    };
    let out = decode_turn(p, &e.prompt, &SamplingParams::greedy(), &opts)?;
    let tokens_ok = out.tokens == e.tokens;
    let units_ok = out.groups == e.groups;
    Ok((out, tokens_ok, units_ok))
}

fn latency_stats(outs: &[&DecodeOutput], lm: &LatencyModel) -> LatencyStats {
    let reports: Vec<_> = outs.iter().map(|o| first_audio_latency(&o.trace, lm)).collect();
    let lat: Vec<f64> = reports.iter().map(|r| r.latency_or_inf()).collect();
    let steps: Vec<f64> = reports
        .iter()
        .map(|r| r.steps_to_first_audio.map_or(f64::INFINITY, |s| s as f64))
        .collect();
    let finite = |v: Option<f64>| v.filter(|x| x.is_finite());
    LatencyStats {
        n_offset: lm.n_offset(),
        mode: lm.mode().to_string(),
        n_turns: reports.len(),
        n_infinite: reports.iter().filter(|r| r.latency_ms.is_none()).count(),
        median_latency_ms: finite(median(&lat)),
        median_steps_to_first_audio: finite(median(&steps)),
    }
}

/// Full evaluation over `samples`, which should be the memorization split.
pub fn evaluate(
    p: &Parameters<f32>,
    samples: &[Sample],
    cfg: &ExperimentConfig,
    stats: &CorpusStats,
) -> Result<EvalReport> {
    if p.config != cfg.model_config() {
        return Err(Error::ShapeMismatch(
            "checkpoint config differs from the experiment's model config".into(),
        ));
    }
    let layout = cfg.layout();
    let mut per_task: BTreeMap<TaskKind, (usize, Hits, Hits)> = BTreeMap::new();
    let mut exact = ExactMatch {
        n_samples: samples.len(),
        ..ExactMatch::default()
    };
    let mut outs = Vec::with_capacity(samples.len());
    for s in samples {
        let (t, u) = teacher_forced_hits(p, &s.rendered)?;
        let e = per_task.entry(s.kind).or_default();
        e.0 += 1;
        e.1.add(t);
        e.2.add(u);
        let (out, tokens_ok, units_ok) = replay(p, s, layout, cfg.decode.options.max_steps)?;
        exact.token_stream_matches += tokens_ok as usize;
        exact.unit_stream_matches += units_ok as usize;
        exact.matches += (tokens_ok && units_ok) as usize;
        outs.push((s.kind, out));
    }
    exact.rate = if samples.is_empty() {
        0.0
    } else {
        exact.matches as f64 / samples.len() as f64
    };
    let (mut tokens, mut units) = (Hits::default(), Hits::default());
    let per_task = per_task
        .into_iter()
        .map(|(task, (n, t, u))| {
            tokens.add(t);
            units.add(u);
            TaskAccuracy {
                task,
                n_samples: n,
                tokens: t,
                units: u,
                token_accuracy: t.rate(),
                unit_accuracy: u.rate(),
            }
        })
        .collect();
    let speech_outs: Vec<&DecodeOutput> = outs
        .iter()
        .filter(|(k, _)| k.response_modality() == Modality::Speech)
        .map(|(_, o)| o)
        .collect();
    let data: Vec<RenderedSequence> = samples.iter().map(|s| s.rendered.clone()).collect();
    let losses = if data.is_empty() {
        LossBreakdown::default()
    } else {
        batch_loss(p, &data, cfg.train.loss_weights)?
    };
    Ok(EvalReport {
        strategy: cfg.strategy,
        group_size: layout.group_size(),
        n_samples: samples.len(),
        per_task,
        token_accuracy: tokens.rate(),
        unit_accuracy: units.rate(),
        exact_match: exact,
        tps: strategy_tps(cfg.strategy, stats),
        latency: latency_stats(&speech_outs, &cfg.decode.latency),
        losses,
    })
}

/// One named property of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Structural properties every report must satisfy, plus an optional exact-match floor.
pub fn check_report(r: &EvalReport, cfg: &ExperimentConfig, min_exact_match: Option<f64>) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut add = |name: &str, pass: bool, detail: String| {
        checks.push(Check {
            name: name.to_string(),
            pass,
            detail,
        })
    };
    let rates: Vec<f64> = r
        .per_task
        .iter()
        .flat_map(|t| [t.token_accuracy, t.unit_accuracy])
        .chain([r.token_accuracy, r.unit_accuracy, Some(r.exact_match.rate)])
        .flatten()
        .collect();
    add(
        "rates_in_unit_interval",
        rates.iter().all(|x| (0.0..=1.0).contains(x)),
        format!("{} rates", rates.len()),
    );
    add("tps_positive", r.tps > 0.0, format!("tps {}", r.tps));
    if r.strategy == Strategy::Group {
        let expected = cfg.decode.options.frame_rate_hz / cfg.model.group_size as f64;
        add(
            "group_tps",
            r.tps == expected,
            format!("tps {} expected {expected}", r.tps),
        );
    }
    let n_offset = cfg.decode.latency.receptive_field / 2 + 1;
    add(
        "latency_offset",
        r.latency.n_offset == n_offset,
        format!(
            "n_offset {} for R={}",
            r.latency.n_offset, cfg.decode.latency.receptive_field
        ),
    );
    add(
        "losses_finite",
        r.losses.is_finite(),
        format!("total {}", r.losses.total),
    );
    if let Some(min) = min_exact_match {
        add(
            "exact_match",
            r.exact_match.rate >= min,
            format!("{} of {} (need {min})", r.exact_match.matches, r.exact_match.n_samples),
        );
    }
    checks
}
