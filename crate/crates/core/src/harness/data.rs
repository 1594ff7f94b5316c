//! Rendering corpus dialogues into training samples under a task mix.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TaskMix;
use crate::dialogue::{
    render_dialogue, render_prompt, task_for, Quadruple, RenderedSequence, SpeechLayout, TaskKind, TaskSample,
    Vocabulary,
};
use crate::error::{Error, Result};

/// One rendered training sequence and the turns it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub dialogue_id: String,
    pub kind: TaskKind,
    pub turns: Vec<TaskSample>,
    pub rendered: RenderedSequence,
}

/// What the last assistant turn of a sample should contain.
#[derive(Clone, Debug, PartialEq)]
pub struct Expected {
    pub prompt: RenderedSequence,
    pub tokens: Vec<u32>,
    pub groups: Vec<Vec<u32>>,
}

impl Sample {
    /// Context up to the last assistant header, and the reference response after it.
    pub fn expected(&self, layout: SpeechLayout, vocab: &Vocabulary) -> Result<Expected> {
        let prompt = render_prompt(&self.turns, layout, vocab)?;
        let start = prompt.len();
        let tokens = self.rendered.tokens[start..].to_vec();
        let groups = (0..self.rendered.num_slots())
            .filter(|&k| self.rendered.speech_slots[k].position >= start)
            .map(|k| self.rendered.slot_units(k).to_vec())
            .collect();
        Ok(Expected { prompt, tokens, groups })
    }
}

/// Turns of a dialogue under one task kind. Transcription and read-aloud tasks
/// use only the first turn: they do not depend on dialogue history.
pub fn sample_turns(turns: &[Quadruple], kind: TaskKind) -> Result<Vec<TaskSample>> {
    let used = match kind {
        TaskKind::Asr | TaskKind::Tts => &turns[..turns.len().min(1)],
        _ => turns,
    };
    if used.is_empty() {
        return Err(Error::EmptyDialogue);
    }
    used.iter().map(|q| task_for(q, kind)).collect()
}

/// One sample per dialogue, its task kind drawn from `mix` with `seed`.
pub fn build_samples(
    dialogues: &[(String, Vec<Quadruple>)],
    mix: &TaskMix,
    layout: SpeechLayout,
    seed: u64,
) -> Result<Vec<Sample>> {
    mix.validate()?;
    let vocab = Vocabulary::default();
    let weights = TaskKind::ALL.map(|k| mix.weight(k));
    let dist = WeightedIndex::new(weights).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dialogues
        .iter()
        .map(|(id, quads)| {
            let kind = TaskKind::ALL[dist.sample(&mut rng)];
            let turns = sample_turns(quads, kind)?;
            let rendered = render_dialogue(&turns, layout, &vocab)?;
            Ok(Sample {
                dialogue_id: id.clone(),
                kind,
                turns,
                rendered,
            })
        })
        .collect()
}

pub fn rendered(samples: &[Sample]) -> Vec<RenderedSequence> {
    samples.iter().map(|s| s.rendered.clone()).collect()
}
