//! Synthetic speech units and the two length-reduction strategies.
//!
//! A [`SyntheticLexicon`] maps each text character to a short run of unit ids,
//! standing in for a self-supervised speech tokenizer. Unit sequences can then
//! be shortened either by fixed-size grouping ([`group`]) or by collapsing
//! adjacent duplicates ([`reduce`]).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const DEFAULT_UNIT_VOCAB: usize = 500;
pub const DEFAULT_FRAME_RATE_HZ: f64 = 25.0;
pub const DEFAULT_GROUP_SIZE: usize = 5;

/// Characters covered by generated lexicons and by the text tokenizer.
pub const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789 .,?!'-:";

/// Fraction of characters whose unit sequence carries one internal repeat.
const REPEAT_FRACTION: f64 = 0.3;

/// Deterministic character → unit-sequence table.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticLexicon {
    entries: BTreeMap<char, Vec<u32>>,
    unit_vocab_size: usize,
    frame_rate_hz: f64,
    seed: u64,
}

impl SyntheticLexicon {
    /// Lexicon over [`ALPHABET`] with 500 units at 25 Hz.
    pub fn generate(seed: u64) -> Self {
        Self::generate_with(seed, ALPHABET, DEFAULT_UNIT_VOCAB, DEFAULT_FRAME_RATE_HZ)
    }

    pub fn generate_with(seed: u64, alphabet: &str, unit_vocab_size: usize, frame_rate_hz: f64) -> Self {
        assert!(unit_vocab_size >= 2, "need at least two units");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chars: Vec<char> = alphabet.chars().collect();
        chars.sort_unstable();
        chars.dedup();

        let mut entries = BTreeMap::new();
        let mut repeated = 0usize;
        for &c in &chars {
            let len: usize = rng.gen_range(1..=4);
            let force_repeat = rng.gen_bool(REPEAT_FRACTION);
            let units = draw_entry(&mut rng, len, force_repeat, unit_vocab_size);
            if has_adjacent_repeat(&units) {
                repeated += 1;
            }
            entries.insert(c, units);
        }
        // Guarantee that reduce has something to collapse.
        for &c in &chars {
            if repeated >= 2 {
                break;
            }
            let units = entries.get_mut(&c).expect("present");
            if !has_adjacent_repeat(units) {
                let len = units.len().max(2);
                *units = draw_entry(&mut rng, len, true, unit_vocab_size);
                repeated += 1;
            }
        }
        Self {
            entries,
            unit_vocab_size,
            frame_rate_hz,
            seed,
        }
    }

    pub fn from_entries(
        entries: BTreeMap<char, Vec<u32>>,
        unit_vocab_size: usize,
        frame_rate_hz: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(frame_rate_hz > 0.0) {
            return Err(Error::Config(format!(
                "frame rate must be positive, got {frame_rate_hz}"
            )));
        }
        for (c, units) in &entries {
            if units.is_empty() {
                return Err(Error::Config(format!("lexicon entry {c:?} is empty")));
            }
            if let Some(&u) = units.iter().find(|&&u| u as usize >= unit_vocab_size) {
                return Err(Error::UnitOutOfRange {
                    unit: u,
                    vocab: unit_vocab_size,
                });
            }
        }
        Ok(Self {
            entries,
            unit_vocab_size,
            frame_rate_hz,
            seed,
        })
    }

    pub fn get(&self, c: char) -> Option<&[u32]> {
        self.entries.get(&c).map(Vec::as_slice)
    }

    pub fn entries(&self) -> &BTreeMap<char, Vec<u32>> {
        &self.entries
    }

    pub fn unit_vocab_size(&self) -> usize {
        self.unit_vocab_size
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `{char: [units], ..., "unit_vocab_size": V, "frame_rate_hz": R, "seed": s}`
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for (c, units) in &self.entries {
            map.insert(c.to_string(), Value::from(units.clone()));
        }
        map.insert("unit_vocab_size".into(), Value::from(self.unit_vocab_size));
        map.insert("frame_rate_hz".into(), Value::from(self.frame_rate_hz));
        map.insert("seed".into(), Value::from(self.seed));
        Value::Object(map)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let map = value
            .as_object()
            .ok_or_else(|| Error::Config("lexicon must be a JSON object".into()))?;
        let meta_u64 = |key: &str| {
            map.get(key)
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Config(format!("lexicon is missing `{key}`")))
        };
        let unit_vocab_size = meta_u64("unit_vocab_size")? as usize;
        let seed = meta_u64("seed")?;
        let frame_rate_hz = map
            .get("frame_rate_hz")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Config("lexicon is missing `frame_rate_hz`".into()))?;

        let mut entries = BTreeMap::new();
        for (key, v) in map {
            let mut chars = key.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                continue;
            };
            let units: Vec<u32> = serde_json::from_value(v.clone())?;
            entries.insert(c, units);
        }
        Self::from_entries(entries, unit_vocab_size, frame_rate_hz, seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}

fn draw_entry(rng: &mut ChaCha8Rng, len: usize, force_repeat: bool, vocab: usize) -> Vec<u32> {
    let len = if force_repeat { len.max(2) } else { len };
    let mut units: Vec<u32> = Vec::with_capacity(len);
    for _ in 0..len {
        let mut u = rng.gen_range(0..vocab as u32);
        while units.last() == Some(&u) {
            u = rng.gen_range(0..vocab as u32);
        }
        units.push(u);
    }
    if force_repeat {
        let at = rng.gen_range(0..len - 1);
        units[at + 1] = units[at];
        // Keep exactly one internal repetition.
        if at + 2 < len && units[at + 2] == units[at] {
            units[at + 2] = (units[at] + 1) % vocab as u32;
        }
    }
    units
}

fn has_adjacent_repeat(units: &[u32]) -> bool {
    units.windows(2).any(|w| w[0] == w[1])
}

/// Discrete speech units at a fixed frame rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSequence {
    pub units: Vec<u32>,
    pub frame_rate_hz: f64,
}

impl UnitSequence {
    pub fn new(units: Vec<u32>, frame_rate_hz: f64) -> Self {
        Self { units, frame_rate_hz }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.units.len() as f64 / self.frame_rate_hz
    }
}

/// Units partitioned into fixed-size groups, after clipping or padding the start.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupedUnitSequence {
    units: Vec<u32>,
    group_size: usize,
    clipped_prefix_len: usize,
    pad_len: usize,
}

impl GroupedUnitSequence {
    /// Builds from already-grouped units; `units.len()` must be a multiple of `group_size`.
    pub fn from_groups(units: Vec<u32>, group_size: usize) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::InvalidGroupSize(0));
        }
        if !units.len().is_multiple_of(group_size) {
            return Err(Error::ShapeMismatch(format!(
                "{} units is not a multiple of group size {group_size}",
                units.len()
            )));
        }
        Ok(Self {
            units,
            group_size,
            clipped_prefix_len: 0,
            pad_len: 0,
        })
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn num_groups(&self) -> usize {
        self.units.len() / self.group_size
    }

    pub fn group(&self, i: usize) -> &[u32] {
        &self.units[i * self.group_size..(i + 1) * self.group_size]
    }

    pub fn groups(&self) -> impl Iterator<Item = &[u32]> {
        self.units.chunks_exact(self.group_size)
    }

    /// All units, group after group.
    pub fn flat_units(&self) -> &[u32] {
        &self.units
    }

    pub fn clipped_prefix_len(&self) -> usize {
        self.clipped_prefix_len
    }

    /// Units prepended to inputs shorter than one group.
    pub fn pad_len(&self) -> usize {
        self.pad_len
    }
}

/// Adjacent-duplicate collapse with the run lengths needed to undo it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducedSequence {
    pub unique_units: Vec<u32>,
    pub run_lengths: Vec<usize>,
}

impl ReducedSequence {
    pub fn len(&self) -> usize {
        self.unique_units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unique_units.is_empty()
    }
}

/// Sequence-length strategy used when measuring tokens per second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthStrategy {
    None,
    Group,
    Reduce,
}

pub fn synth_units(text: &str, lexicon: &SyntheticLexicon) -> Result<UnitSequence> {
    let mut units = Vec::with_capacity(text.len() * 3);
    for c in text.chars() {
        let entry = lexicon.get(c).ok_or(Error::UnknownCharacter(c))?;
        units.extend_from_slice(entry);
    }
    Ok(UnitSequence::new(units, lexicon.frame_rate_hz()))
}

/// Clips `len mod G` units from the start and splits the rest into groups.
///
/// Non-empty inputs shorter than `G` are instead left-padded by repeating
/// their first unit, yielding a single group.
pub fn group(seq: &UnitSequence, group_size: usize) -> Result<GroupedUnitSequence> {
    if group_size == 0 {
        return Err(Error::InvalidGroupSize(0));
    }
    let n = seq.units.len();
    if n > 0 && n < group_size {
        let pad_len = group_size - n;
        let mut units = vec![seq.units[0]; pad_len];
        units.extend_from_slice(&seq.units);
        return Ok(GroupedUnitSequence {
            units,
            group_size,
            clipped_prefix_len: 0,
            pad_len,
        });
    }
    let clip = n % group_size;
    Ok(GroupedUnitSequence {
        units: seq.units[clip..].to_vec(),
        group_size,
        clipped_prefix_len: clip,
        pad_len: 0,
    })
}

pub fn ungroup(grouped: &GroupedUnitSequence, frame_rate_hz: f64) -> UnitSequence {
    UnitSequence::new(grouped.units.clone(), frame_rate_hz)
}

pub fn reduce(seq: &UnitSequence) -> ReducedSequence {
    let mut unique_units = Vec::new();
    let mut run_lengths = Vec::new();
    for &u in &seq.units {
        match unique_units.last() {
            Some(&last) if last == u => *run_lengths.last_mut().expect("paired") += 1,
            _ => {
                unique_units.push(u);
                run_lengths.push(1);
            }
        }
    }
    ReducedSequence {
        unique_units,
        run_lengths,
    }
}

pub fn expand(reduced: &ReducedSequence, frame_rate_hz: f64) -> Result<UnitSequence> {
    if reduced.unique_units.len() != reduced.run_lengths.len() {
        return Err(Error::InvalidRunLengths(format!(
            "{} units but {} run lengths",
            reduced.unique_units.len(),
            reduced.run_lengths.len()
        )));
    }
    let total: usize = reduced.run_lengths.iter().sum();
    let mut units = Vec::with_capacity(total);
    for (i, (&u, &run)) in reduced.unique_units.iter().zip(&reduced.run_lengths).enumerate() {
        if run == 0 {
            return Err(Error::InvalidRunLengths(format!("run {i} has length 0")));
        }
        units.extend(std::iter::repeat_n(u, run));
    }
    Ok(UnitSequence::new(units, frame_rate_hz))
}

/// Sequence steps per second of audio under the given strategy.
pub fn tokens_per_second(strategy: LengthStrategy, seq: &UnitSequence, group_size: usize) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    match strategy {
        LengthStrategy::None => Ok(seq.frame_rate_hz),
        LengthStrategy::Group => {
            if group_size == 0 {
                return Err(Error::InvalidGroupSize(0));
            }
            Ok(seq.frame_rate_hz / group_size as f64)
        }
        LengthStrategy::Reduce => Ok(reduce(seq).len() as f64 / seq.duration_seconds()),
    }
}

/// Mean number of units per run; 1.0 means no adjacent duplicates.
pub fn mean_run_length(seq: &UnitSequence) -> f64 {
    let reduced = reduce(seq);
    if reduced.is_empty() {
        return 1.0;
    }
    seq.len() as f64 / reduced.len() as f64
}
