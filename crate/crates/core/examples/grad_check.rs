//! Finite-difference check of the hand-written backward pass in 64-bit.

use groupformer::dialogue::{render_dialogue, Payload, SpeechLayout, TaskKind, TaskSample, Vocabulary};
use groupformer::model::{ModelConfig, Parameters};
use groupformer::training::grad_check;
use groupformer::unit_codec::UnitSequence;

fn main() -> groupformer::Result<()> {
    let p = Parameters::<f64>::init(&ModelConfig {
        init_std: 0.3,
        ..ModelConfig::tiny()
    });
    let speech = |units: Vec<u32>| Payload::Speech(UnitSequence::new(units, 25.0));
    let turn = TaskSample::new(
        TaskKind::SpeechToSpeech,
        speech((0..23).map(|i| (i * 37) % 500).collect()),
        speech((0..17).map(|i| (i * 91 + 5) % 500).collect()),
    )?;
    let text = TaskSample::new(
        TaskKind::TextToText,
        Payload::Text("how big is the owl?".into()),
        Payload::Text("the owl is tiny.".into()),
    )?;
    let vocab = Vocabulary::default();
    let batch = vec![
        render_dialogue(&[turn], SpeechLayout::Grouped(5), &vocab)?,
        render_dialogue(&[text], SpeechLayout::Grouped(5), &vocab)?,
    ];
    let report = grad_check(&p, &batch, 1e-5, 10, 0)?;
    for t in &report.tensors {
        println!(
            "{:28} {:4} entries  max rel err {:.2e}",
            t.name, t.checked, t.max_rel_error
        );
    }
    println!("worst {:.2e} in {}", report.max_rel_error, report.worst_tensor);
    Ok(())
}
