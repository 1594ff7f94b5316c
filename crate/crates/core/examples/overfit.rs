//! Memorize a 32-dialogue corpus with the default model, then replay it greedily.
//!
//! Usage: cargo run --release --example overfit [max_steps] [target_loss]
//!
//! Without a target the schedule runs to the end and decays to zero, which is what makes
//! the replay exact. Stopping early on a loss target leaves the last steps at a high rate.

use groupformer::decode::{decode_turn, DecodeOptions, SamplingParams};
use groupformer::dialogue::{SpeechLayout, Vocabulary};
use groupformer::harness::{build_corpus, build_samples, dialogues, rendered, CorpusSpec, TaskMix};
use groupformer::model::{ModelConfig, Parameters};
use groupformer::training::{train, TrainConfig};
use groupformer::unit_codec::SyntheticLexicon;

fn main() -> groupformer::Result<()> {
    let mut args = std::env::args().skip(1);
    let max_steps = args.next().map_or(1000, |s| s.parse().expect("max_steps"));
    let target_loss = args.next().map(|s| s.parse().expect("target_loss"));
    let lex = SyntheticLexicon::generate(0);
    let spec = CorpusSpec {
        n_dialogues: 32,
        max_turns: 2,
        ..CorpusSpec::default()
    };
    let d = dialogues(&build_corpus(&spec, &lex)?, 25.0);
    let layout = SpeechLayout::Grouped(5);
    let samples = build_samples(&d, &TaskMix::default(), layout, 0)?;
    let data = rendered(&samples);
    let tokens: usize = data.iter().map(|r| r.len()).sum();
    println!("{} samples, {} tokens", data.len(), tokens);

    let mut p = Parameters::<f32>::init(&ModelConfig::default());
    let cfg = TrainConfig {
        max_steps,
        target_loss,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let out = train(&mut p, &data, &cfg, |r, _| {
        if r.step % 50 == 0 {
            println!(
                "step {:5} lr {:.2e} llm {:.4} group {:.4} total {:.4} ({:.1}s)",
                r.step,
                r.lr,
                r.loss_llm,
                r.loss_group,
                r.total,
                start.elapsed().as_secs_f64()
            );
        }
        Ok(())
    })?;
    let fl = out.final_loss.expect("trained");
    println!("stopped after {} steps, full-data total {:.4}", out.steps, fl.total);

    let vocab = Vocabulary::default();
    let mut exact = 0;
    for s in &samples {
        let e = s.expected(layout, &vocab)?;
        let o = decode_turn(&p, &e.prompt, &SamplingParams::greedy(), &DecodeOptions::default())?;
        if o.tokens == e.tokens && o.groups == e.groups {
            exact += 1;
        }
    }
    println!("exact replay {exact}/{}", samples.len());
    Ok(())
}
