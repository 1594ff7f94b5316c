//! Replays a memorized two-turn voice dialogue through the chat loop and checks that
//! the assistant's own speech groups come back unchanged as context for turn two.
//!
//! Usage: cargo run --release --example multi_turn_chat [checkpoint]
//! Without a checkpoint the overfit config is trained first (a few minutes).

use std::path::PathBuf;

use groupformer::decode::SamplingParams;
use groupformer::dialogue::{TaskKind, Vocabulary};
use groupformer::harness::{cmd_train, load_for, load_lexicon, prepare, run_chat, ExperimentConfig};

fn main() -> groupformer::Result<()> {
    let cfg_path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/overfit.json");
    let cfg = ExperimentConfig::load(cfg_path)?;
    let p = match std::env::args().nth(1) {
        Some(path) => load_for(&cfg, &PathBuf::from(path))?,
        None => cmd_train(&cfg, &std::env::temp_dir().join("groupformer-chat-example"))?.0,
    };
    let (samples, _) = prepare(&cfg)?;
    let sample = samples
        .iter()
        .find(|s| s.kind == TaskKind::SpeechToSpeech && s.turns.len() == 2)
        .expect("the overfit corpus has a two-turn voice dialogue");
    let lexicon = load_lexicon(&cfg)?;
    let records = groupformer::harness::load_records(&cfg, &lexicon)?;
    let script: Vec<String> = records
        .iter()
        .filter(|r| r.dialogue_id == sample.dialogue_id)
        .map(|r| r.it.clone())
        .collect();
    let t = run_chat(&p, &script, &lexicon, &cfg, Some(SamplingParams::greedy()))?;

    let vocab = Vocabulary::default();
    let reference = groupformer::dialogue::render_dialogue(&sample.turns, cfg.layout(), &vocab)?;
    let expected: Vec<&[u32]> = reference
        .speech_slots
        .iter()
        .enumerate()
        .filter(|(_, s)| reference.llm_mask[s.position])
        .map(|(k, _)| reference.slot_units(k))
        .collect();
    let generated: Vec<&[u32]> = t
        .turns
        .iter()
        .flat_map(|x| x.response_groups.iter().map(|g| g.as_slice()))
        .collect();
    for turn in &t.turns {
        println!(
            "user: {:30} context {:4} tokens, {} groups, first audio {:?} ms",
            turn.user_text,
            turn.context_len,
            turn.response_groups.len(),
            turn.latency.as_ref().and_then(|l| l.latency_ms)
        );
    }
    println!(
        "turn-1 groups re-entered verbatim: {:?}",
        t.turns[1].earlier_groups_verbatim
    );
    println!("both memorized responses reproduced: {}", generated == expected);
    Ok(())
}
