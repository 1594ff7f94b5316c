use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Quadruple;
use crate::error::Result;
use crate::unit_codec::UnitSequence;

/// One line of a corpus JSONL file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub it: String,
    pub rt: String,
    pub si: Vec<u32>,
    pub sr: Vec<u32>,
    pub dialogue_id: String,
    pub turn: u32,
}

impl CorpusRecord {
    pub fn quadruple(&self, frame_rate_hz: f64) -> Quadruple {
        Quadruple {
            speech_instruction: UnitSequence::new(self.si.clone(), frame_rate_hz),
            instruction_text: self.it.clone(),
            speech_response: UnitSequence::new(self.sr.clone(), frame_rate_hz),
            response_text: self.rt.clone(),
        }
    }
}

pub fn write_corpus(path: impl AsRef<Path>, records: &[CorpusRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
