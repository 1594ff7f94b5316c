//! Multi-turn voice chat that feeds generated speech groups straight back as context.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::decode::{
    append_response, decode_turn, first_audio_latency, input_rows, DecodeOptions, LatencyReport, SamplingParams,
    StopReason,
};
use crate::dialogue::{Payload, RenderedSequence, Renderer, TaskKind, Vocabulary};
use crate::error::Result;
use crate::model::{InputRow, Parameters};
use crate::unit_codec::{synth_units, SyntheticLexicon};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum TurnStatus {
    Ok,
    /// Context would not fit; the turn was skipped and the context left unchanged.
    Rejected(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub index: usize,
    pub user_text: String,
    pub user_units: Vec<u32>,
    #[serde(flatten)]
    pub status: TurnStatus,
    /// Context length including this user turn and the assistant header.
    pub context_len: usize,
    pub response_text: String,
    pub response_tokens: Vec<u32>,
    pub response_groups: Vec<Vec<u32>>,
    pub stop_reason: Option<StopReason>,
    pub latency: Option<LatencyReport>,
    /// Whether every earlier assistant group sits unchanged in this turn's context slots.
    /// `None` when no earlier assistant turn produced speech.
    pub earlier_groups_verbatim: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub task: TaskKind,
    pub group_size: usize,
    pub turns: Vec<ChatTurn>,
    pub final_context_len: usize,
}

/// Slot inputs of `context` that belong to assistant segments, in order.
fn assistant_slot_inputs(context: &RenderedSequence) -> Vec<Vec<u32>> {
    let rows = input_rows(context);
    context
        .speech_slots
        .iter()
        .filter(|s| context.llm_mask[s.position])
        .map(|s| match rows[s.position] {
            InputRow::Group(g) => g.to_vec(),
            InputRow::Token(_) => unreachable!("slot positions are group rows"),
        })
        .collect()
}

/// Runs a scripted conversation: each script line is user text, spoken through the lexicon.
///
/// `sampling` overrides the config's sampling parameters (e.g. greedy replay).
pub fn run_chat(
    p: &Parameters<f32>,
    script: &[String],
    lexicon: &SyntheticLexicon,
    cfg: &ExperimentConfig,
    sampling: Option<SamplingParams>,
) -> Result<Transcript> {
    let vocab = Vocabulary::default();
    let layout = cfg.layout();
    let task = TaskKind::SpeechToSpeech;
    let sp = sampling.unwrap_or(cfg.decode.sampling);
    let opts = DecodeOptions {
        force_speech: false,
        ..cfg.decode.options
    };
    let mut context = {
        let mut r = Renderer::new(&vocab, layout);
        r.system(task.system_prompt())?;
        r.finish()
    };
    let mut generated: Vec<Vec<u32>> = Vec::new();
    let mut turns = Vec::with_capacity(script.len());
    for (index, text) in script.iter().enumerate() {
        let units = synth_units(text, lexicon)?;
        let mut fragment = Renderer::new(&vocab, layout);
        fragment.user(&Payload::Speech(units.clone()), None)?;
        fragment.open_assistant();
        let mut candidate = context.clone();
        candidate.append(&fragment.finish())?;
        let mut turn = ChatTurn {
            index,
            user_text: text.clone(),
            user_units: units.units,
            status: TurnStatus::Ok,
            context_len: candidate.len(),
            response_text: String::new(),
            response_tokens: Vec::new(),
            response_groups: Vec::new(),
            stop_reason: None,
            latency: None,
            earlier_groups_verbatim: None,
        };
        if candidate.len() >= p.config.max_len {
            turn.status = TurnStatus::Rejected(format!(
                "context of {} tokens leaves no room under max_len {}",
                candidate.len(),
                p.config.max_len
            ));
            turns.push(turn);
            continue;
        }
        if !generated.is_empty() {
            turn.earlier_groups_verbatim = Some(assistant_slot_inputs(&candidate) == generated);
        }
        let out = decode_turn(p, &candidate, &sp, &opts)?;
        turn.latency = Some(first_audio_latency(&out.trace, &cfg.decode.latency));
        turn.stop_reason = Some(out.trace.stop_reason);
        turn.response_text = out.text(&vocab);
        turn.response_tokens = out.tokens.clone();
        turn.response_groups = out.groups.clone();
        context = append_response(&candidate, &out, &vocab)?;
        generated.extend(out.groups.iter().cloned());
        turns.push(turn);
    }
    Ok(Transcript {
        task,
        group_size: layout.group_size(),
        turns,
        final_context_len: context.len(),
    })
}
