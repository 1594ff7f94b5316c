//! Synthetic question-answer dialogues over a small fixed world.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::{CorpusRecord, Quadruple};
use crate::error::{Error, Result};
use crate::unit_codec::{group, reduce, synth_units, SyntheticLexicon, UnitSequence};

const ENTITIES: [&str; 10] = ["fox", "owl", "cat", "dog", "bee", "cow", "ant", "elk", "hen", "pig"];
const COLORS: [&str; 8] = ["red", "blue", "green", "gray", "brown", "white", "black", "gold"];
const SIZES: [&str; 4] = ["tiny", "small", "big", "huge"];
const HOMES: [&str; 8] = ["barn", "den", "hive", "nest", "pond", "cave", "field", "tree"];
const FOODS: [&str; 8] = ["corn", "seeds", "fish", "grass", "honey", "bugs", "nuts", "berries"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Attribute {
    Color,
    Size,
    Home,
    Food,
}

const ATTRIBUTES: [Attribute; 4] = [Attribute::Color, Attribute::Size, Attribute::Home, Attribute::Food];

#[derive(Clone, Debug)]
struct Facts {
    color: &'static str,
    size: &'static str,
    home: &'static str,
    food: &'static str,
}

/// Entity facts fixed by the corpus seed.
#[derive(Clone, Debug)]
struct World {
    facts: BTreeMap<&'static str, Facts>,
}

impl World {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let facts = ENTITIES
            .iter()
            .map(|&e| {
                let f = Facts {
                    color: COLORS[rng.gen_range(0..COLORS.len())],
                    size: SIZES[rng.gen_range(0..SIZES.len())],
                    home: HOMES[rng.gen_range(0..HOMES.len())],
                    food: FOODS[rng.gen_range(0..FOODS.len())],
                };
                (e, f)
            })
            .collect();
        Self { facts }
    }

    /// Question and answer; follow-up turns refer to the entity as "it".
    fn qa(&self, entity: &str, attr: Attribute, follow_up: bool) -> (String, String) {
        let f = &self.facts[entity];
        let (q_subject, a_subject) = if follow_up {
            ("it".to_string(), "it".to_string())
        } else {
            (format!("the {entity}"), format!("the {entity}"))
        };
        match attr {
            Attribute::Color => (
                format!("what color is {q_subject}?"),
                format!("{a_subject} is {}.", f.color),
            ),
            Attribute::Size => (
                format!("how big is {q_subject}?"),
                format!("{a_subject} is {}.", f.size),
            ),
            Attribute::Home => (
                format!("where does {q_subject} live?"),
                format!("{a_subject} lives in the {}.", f.home),
            ),
            Attribute::Food => (
                format!("what does {q_subject} eat?"),
                format!("{a_subject} eats {}.", f.food),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub seed: u64,
    pub n_dialogues: usize,
    pub max_turns: usize,
    /// Dialogues whose longest rendering would exceed this many tokens are rejected.
    pub max_len: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            n_dialogues: 64,
            max_turns: 3,
            max_len: 1024,
        }
    }
}

/// Upper bound on the rendered length of a dialogue under any task kind and either
/// speech layout: every turn's speech in reduced form plus both texts and template tokens.
fn worst_case_len(turns: &[(String, String, UnitSequence, UnitSequence)]) -> usize {
    const SYSTEM_AND_HEADERS: usize = 48;
    turns
        .iter()
        .map(|(it, rt, si, sr)| {
            // Grouped and reduced segments are never longer than the raw units.
            it.len().max(si.len() + 2) + rt.len().max(sr.len() + 2) + 6
        })
        .sum::<usize>()
        + SYSTEM_AND_HEADERS
}

/// Deterministic synthetic dialogues. Each turn becomes one record; turns of one
/// dialogue share `dialogue_id` and have increasing `turn`.
pub fn build_corpus(spec: &CorpusSpec, lexicon: &SyntheticLexicon) -> Result<Vec<CorpusRecord>> {
    if spec.n_dialogues == 0 || spec.max_turns == 0 {
        return Err(Error::Config("n_dialogues and max_turns must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let world = World::new(&mut rng);
    let mut out = Vec::new();
    let mut kept = 0;
    let mut attempts = 0;
    while kept < spec.n_dialogues {
        attempts += 1;
        if attempts > spec.n_dialogues * 100 {
            return Err(Error::Config(format!(
                "could not fit {} dialogues under max_len {}",
                spec.n_dialogues, spec.max_len
            )));
        }
        let entity = *ENTITIES.choose(&mut rng).expect("nonempty");
        let n_turns = rng.gen_range(1..=spec.max_turns);
        let mut attrs = ATTRIBUTES.to_vec();
        attrs.shuffle(&mut rng);
        let mut turns = Vec::with_capacity(n_turns);
        for t in 0..n_turns {
            let (it, rt) = world.qa(entity, attrs[t % attrs.len()], t > 0);
            let si = synth_units(&it, lexicon)?;
            let sr = synth_units(&rt, lexicon)?;
            turns.push((it, rt, si, sr));
        }
        if worst_case_len(&turns) > spec.max_len {
            continue;
        }
        let dialogue_id = format!("d{kept:05}");
        for (t, (it, rt, si, sr)) in turns.into_iter().enumerate() {
            out.push(CorpusRecord {
                it,
                rt,
                si: si.units,
                sr: sr.units,
                dialogue_id: dialogue_id.clone(),
                turn: t as u32,
            });
        }
        kept += 1;
    }
    Ok(out)
}

/// Records grouped into dialogues, in file order, each sorted by turn.
pub fn dialogues(records: &[CorpusRecord], frame_rate_hz: f64) -> Vec<(String, Vec<Quadruple>)> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, Vec<&CorpusRecord>> = BTreeMap::new();
    for r in records {
        if !by_id.contains_key(&r.dialogue_id) {
            order.push(r.dialogue_id.clone());
        }
        by_id.entry(r.dialogue_id.clone()).or_default().push(r);
    }
    order
        .into_iter()
        .map(|id| {
            let mut turns = by_id.remove(&id).expect("present");
            turns.sort_by_key(|r| r.turn);
            let quads = turns.iter().map(|r| r.quadruple(frame_rate_hz)).collect();
            (id, quads)
        })
        .collect()
}

/// Checks every record against the lexicon: speech must equal the synthesized text.
pub fn check_corpus(records: &[CorpusRecord], lexicon: &SyntheticLexicon) -> Result<()> {
    for r in records {
        if synth_units(&r.it, lexicon)?.units != r.si || synth_units(&r.rt, lexicon)?.units != r.sr {
            return Err(Error::Config(format!(
                "record {} turn {} does not match the lexicon",
                r.dialogue_id, r.turn
            )));
        }
    }
    Ok(())
}

/// Length statistics of every speech sequence in a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_records: usize,
    pub n_dialogues: usize,
    pub n_sequences: usize,
    pub mean_run_length: f64,
    pub total_units: usize,
    pub total_reduced: usize,
    pub total_groups: usize,
    /// Mean over sequences of grouped length / reduced length.
    pub mean_length_ratio: f64,
    pub max_length_ratio: f64,
    /// True if the grouped sequence is no longer than the reduced one for every sequence.
    pub grouped_never_longer: bool,
    pub reduce_tps: f64,
    pub group_tps: f64,
    pub frame_rate_hz: f64,
    pub group_size: usize,
}

pub fn corpus_stats(records: &[CorpusRecord], frame_rate_hz: f64, group_size: usize) -> Result<CorpusStats> {
    let seqs: Vec<UnitSequence> = records
        .iter()
        .flat_map(|r| [r.si.clone(), r.sr.clone()])
        .map(|u| UnitSequence::new(u, frame_rate_hz))
        .collect();
    if seqs.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut total_units = 0;
    let mut total_reduced = 0;
    let mut total_groups = 0;
    let mut ratio_sum = 0.0;
    let mut max_ratio = 0.0f64;
    let mut never_longer = true;
    for s in &seqs {
        let reduced = reduce(s).len();
        let groups = group(s, group_size)?.num_groups();
        total_units += s.len();
        total_reduced += reduced;
        total_groups += groups;
        let ratio = groups as f64 / reduced as f64;
        ratio_sum += ratio;
        max_ratio = max_ratio.max(ratio);
        never_longer &= groups <= reduced;
    }
    let n_dialogues = dialogues(records, frame_rate_hz).len();
    Ok(CorpusStats {
        n_records: records.len(),
        n_dialogues,
        n_sequences: seqs.len(),
        // Runs never span two sequences.
        mean_run_length: total_units as f64 / total_reduced as f64,
        total_units,
        total_reduced,
        total_groups,
        mean_length_ratio: ratio_sum / seqs.len() as f64,
        max_length_ratio: max_ratio,
        grouped_never_longer: never_longer,
        reduce_tps: total_reduced as f64 / (total_units as f64 / frame_rate_hz),
        group_tps: frame_rate_hz / group_size as f64,
        frame_rate_hz,
        group_size,
    })
}
