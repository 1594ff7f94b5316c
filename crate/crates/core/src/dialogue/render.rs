use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Payload, Special, TaskSample, Vocabulary};
use crate::error::{Error, Result};
use crate::unit_codec::{group, reduce, GroupedUnitSequence, UnitSequence};

/// How speech payloads become slot groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "strategy", content = "group_size")]
pub enum SpeechLayout {
    /// Fixed groups of `G` units per slot.
    Grouped(usize),
    /// Adjacent duplicates collapsed, one unit per slot.
    Reduced,
}

impl SpeechLayout {
    pub fn group_size(self) -> usize {
        match self {
            SpeechLayout::Grouped(g) => g,
            SpeechLayout::Reduced => 1,
        }
    }

    pub fn to_groups(self, payload: &Payload) -> Result<GroupedUnitSequence> {
        match payload {
            Payload::Text(_) => Err(Error::ModalityMismatch("text payload in a speech segment".into())),
            Payload::Groups(gs) => {
                if gs.group_size() != self.group_size() {
                    return Err(Error::ShapeMismatch(format!(
                        "groups of {} units under a layout with group size {}",
                        gs.group_size(),
                        self.group_size()
                    )));
                }
                Ok(gs.clone())
            }
            Payload::Speech(seq) => self.group_units(seq),
        }
    }

    pub fn group_units(self, seq: &UnitSequence) -> Result<GroupedUnitSequence> {
        match self {
            SpeechLayout::Grouped(g) => group(seq, g),
            SpeechLayout::Reduced => GroupedUnitSequence::from_groups(reduce(seq).unique_units, 1),
        }
    }
}

/// A `<speech>` position and the group that fills it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpeechSlot {
    pub position: usize,
    pub group_index: usize,
    pub segment_id: usize,
}

/// A tokenized dialogue with its speech slots and loss masks.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedSequence {
    pub tokens: Vec<u32>,
    pub speech_slots: Vec<SpeechSlot>,
    pub segments: Vec<GroupedUnitSequence>,
    /// True where the token belongs to an assistant response.
    pub llm_mask: Vec<bool>,
    /// One entry per speech slot.
    pub group_mask: Vec<bool>,
    pub group_size: usize,
}

impl RenderedSequence {
    pub fn empty(group_size: usize) -> Self {
        Self {
            tokens: Vec::new(),
            speech_slots: Vec::new(),
            segments: Vec::new(),
            llm_mask: Vec::new(),
            group_mask: Vec::new(),
            group_size,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_slots(&self) -> usize {
        self.speech_slots.len()
    }

    /// Units of the group filling slot `k`.
    pub fn slot_units(&self, k: usize) -> &[u32] {
        let slot = self.speech_slots[k];
        self.segments[slot.segment_id].group(slot.group_index)
    }

    /// All slot units in slot order, `G` per slot.
    pub fn flat_slot_units(&self) -> Vec<u32> {
        (0..self.num_slots())
            .flat_map(|k| self.slot_units(k).iter().copied())
            .collect()
    }

    /// Total units across all speech segments (after clipping or padding).
    pub fn total_units(&self) -> usize {
        self.segments.iter().map(|s| s.flat_units().len()).sum()
    }

    /// Concatenates `other` after `self`, shifting its slot positions and segment ids.
    pub fn append(&mut self, other: &RenderedSequence) -> Result<()> {
        if other.group_size != self.group_size {
            return Err(Error::ShapeMismatch(format!(
                "appending group size {} to group size {}",
                other.group_size, self.group_size
            )));
        }
        let (offset, seg_offset) = (self.tokens.len(), self.segments.len());
        self.tokens.extend_from_slice(&other.tokens);
        self.llm_mask.extend_from_slice(&other.llm_mask);
        self.group_mask.extend_from_slice(&other.group_mask);
        self.segments.extend(other.segments.iter().cloned());
        self.speech_slots.extend(other.speech_slots.iter().map(|s| SpeechSlot {
            position: s.position + offset,
            group_index: s.group_index,
            segment_id: s.segment_id + seg_offset,
        }));
        Ok(())
    }
}

/// Incremental builder for the chat template.
pub struct Renderer<'v> {
    vocab: &'v Vocabulary,
    layout: SpeechLayout,
    seq: RenderedSequence,
}

impl<'v> Renderer<'v> {
    pub fn new(vocab: &'v Vocabulary, layout: SpeechLayout) -> Self {
        Self {
            vocab,
            layout,
            seq: RenderedSequence::empty(layout.group_size()),
        }
    }

    fn push(&mut self, id: u32, in_response: bool) {
        self.seq.tokens.push(id);
        self.seq.llm_mask.push(in_response);
    }

    fn push_special(&mut self, s: Special, in_response: bool) {
        self.push(self.vocab.special(s), in_response);
    }

    fn push_text(&mut self, text: &str, in_response: bool) -> Result<()> {
        for id in self.vocab.encode_text(text)? {
            self.push(id, in_response);
        }
        Ok(())
    }

    fn push_payload(&mut self, payload: &Payload, in_response: bool) -> Result<()> {
        match payload {
            Payload::Text(t) => self.push_text(t, in_response),
            _ => {
                let groups = self.layout.to_groups(payload)?;
                self.push_segment(groups, in_response);
                Ok(())
            }
        }
    }

    /// `<sosp>` + one `<speech>` per group + `<eosp>`.
    pub fn push_segment(&mut self, groups: GroupedUnitSequence, in_response: bool) {
        let segment_id = self.seq.segments.len();
        self.push_special(Special::SpeechStart, in_response);
        for group_index in 0..groups.num_groups() {
            self.seq.speech_slots.push(SpeechSlot {
                position: self.seq.tokens.len(),
                group_index,
                segment_id,
            });
            self.seq.group_mask.push(true);
            self.push_special(Special::Speech, in_response);
        }
        self.push_special(Special::SpeechEnd, in_response);
        self.seq.segments.push(groups);
    }

    pub fn system(&mut self, text: &str) -> Result<()> {
        self.push_special(Special::TurnStart, false);
        self.push_special(Special::System, false);
        self.push_text(text, false)?;
        self.push_special(Special::TurnEnd, false);
        Ok(())
    }

    pub fn user(&mut self, payload: &Payload, text_context: Option<&str>) -> Result<()> {
        self.push_special(Special::TurnStart, false);
        self.push_special(Special::User, false);
        if let Some(ctx) = text_context {
            self.push_text(ctx, false)?;
        }
        self.push_payload(payload, false)?;
        self.push_special(Special::TurnEnd, false);
        Ok(())
    }

    pub fn open_assistant(&mut self) {
        self.push_special(Special::TurnStart, false);
        self.push_special(Special::Assistant, false);
    }

    pub fn assistant(&mut self, payload: &Payload) -> Result<()> {
        self.open_assistant();
        self.push_payload(payload, true)?;
        self.push_special(Special::TurnEnd, true);
        Ok(())
    }

    pub fn finish(self) -> RenderedSequence {
        self.seq
    }
}

fn check_turns(turns: &[TaskSample]) -> Result<()> {
    let first = turns.first().ok_or(Error::EmptyDialogue)?;
    for t in turns {
        t.check_modalities()?;
        if t.kind != first.kind {
            return Err(Error::ModalityMismatch(format!(
                "dialogue mixes task kinds {} and {}",
                first.kind.name(),
                t.kind.name()
            )));
        }
    }
    Ok(())
}

/// Renders a full dialogue (all turns share one task kind).
pub fn render_dialogue(turns: &[TaskSample], layout: SpeechLayout, vocab: &Vocabulary) -> Result<RenderedSequence> {
    check_turns(turns)?;
    let mut r = Renderer::new(vocab, layout);
    r.system(turns[0].kind.system_prompt())?;
    for t in turns {
        r.user(&t.instruction, t.text_context.as_deref())?;
        r.assistant(&t.response)?;
    }
    Ok(r.finish())
}

/// Like [`render_dialogue`] but stops at the start of the last assistant turn.
pub fn render_prompt(turns: &[TaskSample], layout: SpeechLayout, vocab: &Vocabulary) -> Result<RenderedSequence> {
    check_turns(turns)?;
    let (last, history) = turns.split_last().expect("checked nonempty");
    let mut r = Renderer::new(vocab, layout);
    r.system(turns[0].kind.system_prompt())?;
    for t in history {
        r.user(&t.instruction, t.text_context.as_deref())?;
        r.assistant(&t.response)?;
    }
    r.user(&last.instruction, last.text_context.as_deref())?;
    r.open_assistant();
    Ok(r.finish())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Length(String),
    Slot(String),
    Bracket(String),
    LlmMask { position: usize },
    GroupMask { slot: usize },
}

/// Checks every structural invariant of a rendered sequence.
pub fn validate(r: &RenderedSequence, vocab: &Vocabulary) -> Vec<Violation> {
    let mut out = Vec::new();
    let speech = vocab.special(Special::Speech);
    let sosp = vocab.special(Special::SpeechStart);
    let eosp = vocab.special(Special::SpeechEnd);

    if r.llm_mask.len() != r.tokens.len() {
        out.push(Violation::Length(format!(
            "llm_mask has {} entries for {} tokens",
            r.llm_mask.len(),
            r.tokens.len()
        )));
    }
    if r.group_mask.len() != r.speech_slots.len() {
        out.push(Violation::Length(format!(
            "group_mask has {} entries for {} slots",
            r.group_mask.len(),
            r.speech_slots.len()
        )));
    }

    // Slots <-> <speech> tokens, one to one.
    let mut slot_at: HashMap<usize, usize> = HashMap::new();
    for (k, s) in r.speech_slots.iter().enumerate() {
        if slot_at.insert(s.position, k).is_some() {
            out.push(Violation::Slot(format!("two slots at position {}", s.position)));
        }
        if r.tokens.get(s.position) != Some(&speech) {
            out.push(Violation::Slot(format!(
                "slot {k} at position {} is not <speech>",
                s.position
            )));
        }
        match r.segments.get(s.segment_id) {
            None => out.push(Violation::Slot(format!(
                "slot {k} references missing segment {}",
                s.segment_id
            ))),
            Some(seg) if s.group_index >= seg.num_groups() => out.push(Violation::Slot(format!(
                "slot {k} references group {} of a {}-group segment",
                s.group_index,
                seg.num_groups()
            ))),
            Some(seg) if seg.group_size() != r.group_size => out.push(Violation::Slot(format!(
                "segment {} has group size {}, expected {}",
                s.segment_id,
                seg.group_size(),
                r.group_size
            ))),
            _ => {}
        }
    }
    for (pos, &tok) in r.tokens.iter().enumerate() {
        if tok == speech && !slot_at.contains_key(&pos) {
            out.push(Violation::Slot(format!("<speech> at position {pos} has no slot")));
        }
    }

    // Brackets: each segment is <sosp> <speech>* <eosp>, slots in group order.
    let mut open: Option<(usize, Vec<usize>)> = None;
    let mut regions = 0usize;
    for (pos, &tok) in r.tokens.iter().enumerate() {
        if tok == speech {
            match open.as_mut() {
                None => out.push(Violation::Bracket(format!(
                    "<speech> outside a segment at position {pos}"
                ))),
                Some((_, slots)) => {
                    if let Some(&k) = slot_at.get(&pos) {
                        slots.push(k);
                    }
                }
            }
            continue;
        }
        // Any other token ends an open segment; only <eosp> ends it properly.
        if let Some((start, slots)) = open.take() {
            if tok != eosp {
                out.push(Violation::Bracket(format!(
                    "<sosp> at position {start} is not closed by <eosp> (found token {tok} at {pos})"
                )));
            }
            check_region(r, start, &slots, regions, &mut out);
            regions += 1;
        } else if tok == eosp {
            out.push(Violation::Bracket(format!("<eosp> without <sosp> at position {pos}")));
        }
        if tok == sosp {
            open = Some((pos, Vec::new()));
        }
    }
    if let Some((start, slots)) = open {
        out.push(Violation::Bracket(format!(
            "<sosp> at position {start} is never closed"
        )));
        check_region(r, start, &slots, regions, &mut out);
        regions += 1;
    }
    if regions != r.segments.len() {
        out.push(Violation::Bracket(format!(
            "{regions} bracketed regions for {} segments",
            r.segments.len()
        )));
    }

    // Response mask follows turn roles.
    let expected = expected_llm_mask(&r.tokens, vocab);
    for (pos, (&want, &got)) in expected.iter().zip(&r.llm_mask).enumerate() {
        if want != got {
            out.push(Violation::LlmMask { position: pos });
        }
    }
    for (k, &m) in r.group_mask.iter().enumerate() {
        if !m {
            out.push(Violation::GroupMask { slot: k });
        }
    }
    out
}

fn check_region(r: &RenderedSequence, start: usize, slots: &[usize], region: usize, out: &mut Vec<Violation>) {
    for (i, &k) in slots.iter().enumerate() {
        let s = r.speech_slots[k];
        if s.segment_id != region || s.group_index != i {
            out.push(Violation::Slot(format!(
                "segment at {start}: slot {k} is (segment {}, group {}), expected ({region}, {i})",
                s.segment_id, s.group_index
            )));
        }
    }
    if let Some(seg) = r.segments.get(region) {
        if seg.num_groups() != slots.len() {
            out.push(Violation::Slot(format!(
                "segment {region} has {} groups but {} slots",
                seg.num_groups(),
                slots.len()
            )));
        }
    }
}

/// True on assistant content and its closing turn marker.
fn expected_llm_mask(tokens: &[u32], vocab: &Vocabulary) -> Vec<bool> {
    let start = vocab.special(Special::TurnStart);
    let end = vocab.special(Special::TurnEnd);
    let assistant = vocab.special(Special::Assistant);
    let mut mask = vec![false; tokens.len()];
    let mut in_assistant = false;
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        if tok == start {
            in_assistant = tokens.get(i + 1) == Some(&assistant);
            i += 2;
            continue;
        }
        mask[i] = in_assistant;
        if tok == end {
            in_assistant = false;
        }
        i += 1;
    }
    mask
}
