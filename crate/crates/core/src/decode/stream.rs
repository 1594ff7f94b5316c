//! Autoregressive decoding of one assistant turn.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{sample_token, SamplingParams};
use crate::dialogue::{RenderedSequence, Special, SpeechSlot, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{InputRow, Parameters, Session};
use crate::tensor::Real;
use crate::unit_codec::{expand, GroupedUnitSequence, ReducedSequence, UnitSequence};

pub const DEFAULT_MAX_STEPS: usize = 512;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emitted {
    Token(u32),
    Group(Vec<u32>),
}

impl Emitted {
    pub fn unit_count(&self) -> usize {
        match self {
            Emitted::Token(_) => 0,
            Emitted::Group(g) => g.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step_index: usize,
    pub emitted: Emitted,
    /// Backbone time spent producing this step's hidden state.
    pub llm_wall_ms: f64,
    pub gm_wall_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EospThenEnd,
    EndOfTurn,
    /// Step budget or context length exhausted.
    MaxSteps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub steps: Vec<TraceStep>,
    pub total_units_emitted: usize,
    pub stop_reason: StopReason,
    pub prefill_ms: f64,
}

impl DecodeTrace {
    /// Writes one JSON line per step.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeOptions {
    pub max_steps: usize,
    /// Place `<sosp>` right after the assistant header so the turn opens in speech.
    pub force_speech: bool,
    pub frame_rate_hz: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            force_speech: false,
            frame_rate_hz: crate::unit_codec::DEFAULT_FRAME_RATE_HZ,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutput {
    pub trace: DecodeTrace,
    /// Every emitted unit in order.
    pub units: UnitSequence,
    /// Response tokens (forced `<sosp>` included), `<speech>` marking each group.
    pub tokens: Vec<u32>,
    /// One group per `<speech>` token.
    pub groups: Vec<Vec<u32>>,
}

impl DecodeOutput {
    /// Text characters of the response, specials dropped.
    pub fn text(&self, vocab: &Vocabulary) -> String {
        vocab.decode_text(&self.tokens)
    }
}

/// Backbone input rows for a rendered sequence: groups at slots, tokens elsewhere.
pub fn input_rows(r: &RenderedSequence) -> Vec<InputRow<'_>> {
    let mut slot = 0;
    r.tokens
        .iter()
        .enumerate()
        .map(|(t, &tok)| {
            if slot < r.num_slots() && r.speech_slots[slot].position == t {
                slot += 1;
                InputRow::Group(r.slot_units(slot - 1))
            } else {
                InputRow::Token(tok)
            }
        })
        .collect()
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Generates one assistant turn after `context`, which must end with the assistant header.
///
/// Text tokens are sampled with `sp`; each `<speech>` token triggers the group
/// model, whose units are taken greedily per position and fed back as the next input.
/// Outside a speech segment `<speech>`, `<eosp>` and turn headers are disallowed;
/// inside one only `<speech>` and `<eosp>` are allowed.
pub fn decode_turn<T: Real>(
    params: &Parameters<T>,
    context: &RenderedSequence,
    sp: &SamplingParams,
    opts: &DecodeOptions,
) -> Result<DecodeOutput> {
    sp.validate()?;
    let vocab = Vocabulary::default();
    if params.config.text_vocab_size != vocab.size() {
        return Err(Error::ShapeMismatch(format!(
            "model vocabulary {} differs from the tokenizer's {}",
            params.config.text_vocab_size,
            vocab.size()
        )));
    }
    let id = |s| vocab.special(s);
    let (speech, sosp, eosp, end) = (
        id(Special::Speech),
        id(Special::SpeechStart),
        id(Special::SpeechEnd),
        id(Special::TurnEnd),
    );
    // Turn headers never appear inside an assistant response.
    let structural = [Special::TurnStart, Special::System, Special::User, Special::Assistant].map(id);
    let n = context.len();
    if n < 2 || context.tokens[n - 2] != id(Special::TurnStart) || context.tokens[n - 1] != id(Special::Assistant) {
        return Err(Error::InvalidContext(
            "context must end with the assistant turn header".into(),
        ));
    }
    if context.group_size != params.config.group_size {
        return Err(Error::ShapeMismatch(format!(
            "context rendered with group size {} for a model with group size {}",
            context.group_size, params.config.group_size
        )));
    }

    let mut session = Session::new(params);
    let mut rows = input_rows(context);
    let mut tokens = Vec::new();
    if opts.force_speech {
        rows.push(InputRow::Token(sosp));
        tokens.push(sosp);
    }
    let start = Instant::now();
    let z = session.feed(&rows)?;
    let prefill_ms = ms_since(start);
    let mut z_last: Vec<T> = z.row(z.rows() - 1).to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(sp.seed);
    let mut in_segment = opts.force_speech;
    let mut steps = Vec::new();
    let mut groups: Vec<Vec<u32>> = Vec::new();
    let mut pending_llm_ms = 0.0;
    let mut stop_reason = StopReason::MaxSteps;
    for step_index in 0..opts.max_steps {
        let mut logits: Vec<f64> = session.text_logits(&z_last).iter().map(|v| v.as_f64()).collect();
        for (tok, l) in logits.iter_mut().enumerate() {
            let tok = tok as u32;
            let allowed = if in_segment {
                tok == speech || tok == eosp
            } else {
                tok != speech && tok != eosp && !structural.contains(&tok)
            };
            if !allowed {
                *l = f64::NEG_INFINITY;
            }
        }
        let y = sample_token(&logits, sp, &mut rng)?;
        tokens.push(y);
        let llm_wall_ms = pending_llm_ms;
        let mut gm_wall_ms = 0.0;
        let emitted = if y == speech {
            let t0 = Instant::now();
            let gl = session.group_logits(&z_last);
            let units: Vec<u32> = (0..gl.rows())
                .map(|j| {
                    let row: Vec<f64> = gl.row(j).iter().map(|v| v.as_f64()).collect();
                    super::sampling::argmax(&row).expect("finite group logits") as u32
                })
                .collect();
            gm_wall_ms = ms_since(t0);
            groups.push(units.clone());
            Emitted::Group(units)
        } else {
            Emitted::Token(y)
        };
        steps.push(TraceStep {
            step_index,
            emitted: emitted.clone(),
            llm_wall_ms,
            gm_wall_ms,
        });
        if y == end {
            let prev = tokens.len().checked_sub(2).map(|i| tokens[i]);
            stop_reason = if prev == Some(eosp) {
                StopReason::EospThenEnd
            } else {
                StopReason::EndOfTurn
            };
            break;
        }
        if y == sosp {
            in_segment = true;
        } else if y == eosp {
            in_segment = false;
        }
        if step_index + 1 == opts.max_steps || session.len() >= params.config.max_len {
            break;
        }
        let t0 = Instant::now();
        let z = match &emitted {
            Emitted::Group(units) => session.feed(&[InputRow::Group(units)])?,
            Emitted::Token(t) => session.feed(&[InputRow::Token(*t)])?,
        };
        pending_llm_ms = ms_since(t0);
        z_last = z.row(0).to_vec();
    }
    let units: Vec<u32> = groups.iter().flatten().copied().collect();
    let trace = DecodeTrace {
        total_units_emitted: units.len(),
        steps,
        stop_reason,
        prefill_ms,
    };
    Ok(DecodeOutput {
        trace,
        units: UnitSequence::new(units, opts.frame_rate_hz),
        tokens,
        groups,
    })
}

/// Decoding for a model trained on reduced units (one unit per slot).
///
/// Each emitted unit expands to a run of length 1.
pub fn decode_turn_reduce<T: Real>(
    params: &Parameters<T>,
    context: &RenderedSequence,
    sp: &SamplingParams,
    opts: &DecodeOptions,
) -> Result<DecodeOutput> {
    if params.config.group_size != 1 {
        return Err(Error::Config(format!(
            "reduce decoding needs a group size of 1, model has {}",
            params.config.group_size
        )));
    }
    let mut out = decode_turn(params, context, sp, opts)?;
    let reduced = ReducedSequence {
        run_lengths: vec![1; out.units.len()],
        unique_units: out.units.units.clone(),
    };
    out.units = expand(&reduced, out.units.frame_rate_hz)?;
    Ok(out)
}

/// Appends a decoded response to its context as a completed assistant turn,
/// so the next turn sees the generated groups exactly as emitted.
///
/// An unclosed speech segment gets `<eosp>` and a missing turn end is added.
pub fn append_response(context: &RenderedSequence, out: &DecodeOutput, vocab: &Vocabulary) -> Result<RenderedSequence> {
    let g = context.group_size;
    let (speech, sosp, eosp, end) = (
        vocab.special(Special::Speech),
        vocab.special(Special::SpeechStart),
        vocab.special(Special::SpeechEnd),
        vocab.special(Special::TurnEnd),
    );
    let mut r = context.clone();
    let mut groups = out.groups.iter();
    let mut open: Option<Vec<u32>> = None;
    let close = |r: &mut RenderedSequence, units: Vec<u32>| -> Result<()> {
        r.segments.push(GroupedUnitSequence::from_groups(units, g)?);
        Ok(())
    };
    let push = |r: &mut RenderedSequence, t: u32| {
        r.tokens.push(t);
        r.llm_mask.push(true);
    };
    for &t in &out.tokens {
        if t == speech {
            let units = groups
                .next()
                .ok_or_else(|| Error::InvalidContext("more <speech> tokens than groups".into()))?;
            let seg = open
                .as_mut()
                .ok_or_else(|| Error::InvalidContext("<speech> outside a segment".into()))?;
            r.speech_slots.push(SpeechSlot {
                position: r.tokens.len(),
                group_index: seg.len() / g,
                segment_id: r.segments.len(),
            });
            r.group_mask.push(true);
            seg.extend_from_slice(units);
        } else if t == sosp {
            open = Some(Vec::new());
        } else if t == eosp {
            if let Some(units) = open.take() {
                close(&mut r, units)?;
            }
        }
        push(&mut r, t);
    }
    if let Some(units) = open.take() {
        close(&mut r, units)?;
        push(&mut r, eosp);
    }
    if r.tokens.last() != Some(&end) {
        push(&mut r, end);
    }
    Ok(r)
}
