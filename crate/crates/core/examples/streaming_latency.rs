//! Streams one assistant turn from an untrained model and reports first-audio latency
//! under both step-cost modes. An untrained model closes its speech segment at random,
//! so this samples until a turn gets far enough to play audio.

use groupformer::decode::{decode_turn, first_audio_latency, DecodeOptions, LatencyModel, SamplingParams};
use groupformer::dialogue::{render_prompt, Payload, SpeechLayout, TaskKind, TaskSample, Vocabulary};
use groupformer::model::{ModelConfig, Parameters};
use groupformer::unit_codec::{synth_units, SyntheticLexicon};

fn main() -> groupformer::Result<()> {
    let lex = SyntheticLexicon::generate(0);
    let vocab = Vocabulary::default();
    let turn = TaskSample::new(
        TaskKind::SpeechToSpeech,
        Payload::Speech(synth_units("what does the cow eat?", &lex)?),
        Payload::Speech(synth_units("the cow eats grass.", &lex)?),
    )?;
    let p = Parameters::<f32>::init(&ModelConfig::default());
    let prompt = render_prompt(&[turn], SpeechLayout::Grouped(5), &vocab)?;
    let opts = DecodeOptions {
        max_steps: 20,
        force_speech: true,
        ..DecodeOptions::default()
    };
    let fixed = LatencyModel::fixed(11, 10.0);
    let mut seed = 0;
    let out = loop {
        let sp = SamplingParams {
            temperature: 1.0,
            top_k: 0,
            top_p: 1.0,
            seed,
        };
        let out = decode_turn(&p, &prompt, &sp, &opts)?;
        if first_audio_latency(&out.trace, &fixed).latency_ms.is_some() || seed == 63 {
            break out;
        }
        seed += 1;
    };
    println!("sampling seed {seed}");
    println!(
        "{} steps, {} units, stop {:?}, prefill {:.2} ms",
        out.trace.steps.len(),
        out.trace.total_units_emitted,
        out.trace.stop_reason,
        out.trace.prefill_ms
    );
    out.trace.write_jsonl(std::io::stdout().lock())?;
    for lm in [LatencyModel::default(), fixed] {
        let r = first_audio_latency(&out.trace, &lm);
        println!(
            "{:8} n_offset {} steps {:?} latency {:?} ms",
            r.mode, r.n_offset, r.steps_to_first_audio, r.latency_ms
        );
    }
    Ok(())
}
