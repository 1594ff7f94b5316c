//! Renders one corpus dialogue under every task kind and shows the loss masks.

use groupformer::dialogue::{render_dialogue, validate, SpeechLayout, TaskKind, Vocabulary};
use groupformer::harness::{build_corpus, dialogues, sample_turns, CorpusSpec};
use groupformer::unit_codec::SyntheticLexicon;

fn main() -> groupformer::Result<()> {
    let lex = SyntheticLexicon::generate(0);
    let spec = CorpusSpec {
        n_dialogues: 4,
        max_turns: 2,
        ..CorpusSpec::default()
    };
    let records = build_corpus(&spec, &lex)?;
    let (id, turns) = dialogues(&records, 25.0)
        .into_iter()
        .find(|(_, t)| t.len() == 2)
        .expect("a two-turn dialogue");
    println!(
        "dialogue {id}: {:?} / {:?}",
        turns[0].instruction_text, turns[1].instruction_text
    );
    let vocab = Vocabulary::default();
    for kind in TaskKind::ALL {
        let r = render_dialogue(&sample_turns(&turns, kind)?, SpeechLayout::Grouped(5), &vocab)?;
        assert!(validate(&r, &vocab).is_empty());
        let trained = r.llm_mask.iter().filter(|&&m| m).count();
        println!(
            "{:6} {:4} tokens, {:3} speech slots, {:3} llm targets",
            kind.name(),
            r.len(),
            r.num_slots(),
            trained
        );
    }
    let r = render_dialogue(
        &sample_turns(&turns, TaskKind::SpeechToSpeech)?,
        SpeechLayout::Grouped(5),
        &vocab,
    )?;
    let text = vocab.decode(&r.tokens);
    println!("\n{}", text.chars().take(400).collect::<String>());
    Ok(())
}
