//! Dialogue quadruples, cross-modal task construction and prompt rendering.

mod corpus_file;
mod render;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unit_codec::{GroupedUnitSequence, UnitSequence};

pub use corpus_file::{read_corpus, write_corpus, CorpusRecord};
pub use render::{
    render_dialogue, render_prompt, validate, RenderedSequence, Renderer, SpeechLayout, SpeechSlot, Violation,
};
pub use vocab::{Special, Vocabulary};

/// One dialogue turn: speech instruction, instruction text, speech response, response text.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadruple {
    pub speech_instruction: UnitSequence,
    pub instruction_text: String,
    pub speech_response: UnitSequence,
    pub response_text: String,
}

impl Quadruple {
    fn check_nonempty(&self) -> Result<()> {
        if self.speech_instruction.is_empty() {
            return Err(Error::EmptyField("speech_instruction"));
        }
        if self.instruction_text.is_empty() {
            return Err(Error::EmptyField("instruction_text"));
        }
        if self.speech_response.is_empty() {
            return Err(Error::EmptyField("speech_response"));
        }
        if self.response_text.is_empty() {
            return Err(Error::EmptyField("response_text"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "si_sr")]
    SpeechToSpeech,
    #[serde(rename = "si_rt")]
    SpeechToText,
    #[serde(rename = "it_sr")]
    TextToSpeech,
    #[serde(rename = "it_rt")]
    TextToText,
    #[serde(rename = "asr")]
    Asr,
    #[serde(rename = "tts")]
    Tts,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::SpeechToSpeech,
        TaskKind::SpeechToText,
        TaskKind::TextToSpeech,
        TaskKind::TextToText,
        TaskKind::Asr,
        TaskKind::Tts,
    ];

    pub fn instruction_modality(self) -> Modality {
        match self {
            TaskKind::SpeechToSpeech | TaskKind::SpeechToText | TaskKind::Asr => Modality::Speech,
            TaskKind::TextToSpeech | TaskKind::TextToText | TaskKind::Tts => Modality::Text,
        }
    }

    pub fn response_modality(self) -> Modality {
        match self {
            TaskKind::SpeechToSpeech | TaskKind::TextToSpeech | TaskKind::Tts => Modality::Speech,
            TaskKind::SpeechToText | TaskKind::TextToText | TaskKind::Asr => Modality::Text,
        }
    }

    /// System preamble; it also tells the model which response modality to use.
    pub fn system_prompt(self) -> &'static str {
        match self {
            TaskKind::SpeechToSpeech | TaskKind::TextToSpeech => "you are a helpful voice-chat assistant",
            TaskKind::SpeechToText | TaskKind::TextToText => "you are a helpful text-chat assistant",
            TaskKind::Asr => "transcribe the speech",
            TaskKind::Tts => "read the text aloud",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::SpeechToSpeech => "si_sr",
            TaskKind::SpeechToText => "si_rt",
            TaskKind::TextToSpeech => "it_sr",
            TaskKind::TextToText => "it_rt",
            TaskKind::Asr => "asr",
            TaskKind::Tts => "tts",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Text,
    Speech,
}

/// Modality-tagged turn content.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Text(String),
    /// Raw units; grouped or reduced at render time.
    Speech(UnitSequence),
    /// Already-grouped units rendered verbatim (e.g. generated assistant speech).
    Groups(GroupedUnitSequence),
}

impl Payload {
    pub fn modality(&self) -> Modality {
        match self {
            Payload::Text(_) => Modality::Text,
            Payload::Speech(_) | Payload::Groups(_) => Modality::Speech,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSample {
    pub kind: TaskKind,
    pub instruction: Payload,
    pub response: Payload,
    /// Optional text placed before the speech segment of the user turn.
    pub text_context: Option<String>,
}

impl TaskSample {
    pub fn new(kind: TaskKind, instruction: Payload, response: Payload) -> Result<Self> {
        let sample = Self {
            kind,
            instruction,
            response,
            text_context: None,
        };
        sample.check_modalities()?;
        Ok(sample)
    }

    pub fn check_modalities(&self) -> Result<()> {
        if self.instruction.modality() != self.kind.instruction_modality() {
            return Err(Error::ModalityMismatch(format!(
                "{} expects {:?} instruction, got {:?}",
                self.kind.name(),
                self.kind.instruction_modality(),
                self.instruction.modality()
            )));
        }
        if self.response.modality() != self.kind.response_modality() {
            return Err(Error::ModalityMismatch(format!(
                "{} expects {:?} response, got {:?}",
                self.kind.name(),
                self.kind.response_modality(),
                self.response.modality()
            )));
        }
        Ok(())
    }
}

fn speech(seq: &UnitSequence) -> Payload {
    Payload::Speech(seq.clone())
}

fn text(s: &str) -> Payload {
    Payload::Text(s.to_owned())
}

/// The four cross-modal tasks SI→SR, SI→RT, IT→SR and IT→RT.
pub fn make_tasks(q: &Quadruple) -> Result<Vec<TaskSample>> {
    q.check_nonempty()?;
    Ok(vec![
        TaskSample::new(
            TaskKind::SpeechToSpeech,
            speech(&q.speech_instruction),
            speech(&q.speech_response),
        )?,
        TaskSample::new(
            TaskKind::SpeechToText,
            speech(&q.speech_instruction),
            text(&q.response_text),
        )?,
        TaskSample::new(
            TaskKind::TextToSpeech,
            text(&q.instruction_text),
            speech(&q.speech_response),
        )?,
        TaskSample::new(TaskKind::TextToText, text(&q.instruction_text), text(&q.response_text))?,
    ])
}

/// ASR (SI→IT) and TTS (IT→SI), built from the instruction side.
pub fn make_asr_tts(q: &Quadruple) -> Result<Vec<TaskSample>> {
    q.check_nonempty()?;
    Ok(vec![
        TaskSample::new(TaskKind::Asr, speech(&q.speech_instruction), text(&q.instruction_text))?,
        TaskSample::new(TaskKind::Tts, text(&q.instruction_text), speech(&q.speech_instruction))?,
    ])
}

/// One task kind applied to every turn of a multi-turn dialogue.
pub fn task_for(q: &Quadruple, kind: TaskKind) -> Result<TaskSample> {
    q.check_nonempty()?;
    let (instruction, response) = match kind {
        TaskKind::SpeechToSpeech => (speech(&q.speech_instruction), speech(&q.speech_response)),
        TaskKind::SpeechToText => (speech(&q.speech_instruction), text(&q.response_text)),
        TaskKind::TextToSpeech => (text(&q.instruction_text), speech(&q.speech_response)),
        TaskKind::TextToText => (text(&q.instruction_text), text(&q.response_text)),
        TaskKind::Asr => (speech(&q.speech_instruction), text(&q.instruction_text)),
        TaskKind::Tts => (text(&q.instruction_text), speech(&q.speech_instruction)),
    };
    TaskSample::new(kind, instruction, response)
}
