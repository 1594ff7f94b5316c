//! Grouped versus reduced speech on the default corpus: sequence lengths, tokens per
//! second and the first-audio arithmetic, with briefly trained models of each kind.
//!
//! Usage: cargo run --release --example compare_strategies [train_steps]

use groupformer::harness::{compare, evaluate, prepare, ExperimentConfig, Strategy};
use groupformer::model::Parameters;
use groupformer::training::train;

fn main() -> groupformer::Result<()> {
    let steps = std::env::args().nth(1).map_or(30, |s| s.parse().expect("train_steps"));
    let mut reports = Vec::new();
    let mut stats = None;
    for strategy in [Strategy::Group, Strategy::Reduce] {
        let mut cfg = ExperimentConfig::default();
        cfg.strategy = strategy;
        cfg.data.generator.n_dialogues = 12;
        cfg.train.max_steps = steps;
        cfg.train.batch_size = 4;
        cfg.decode.options.max_steps = 40;
        let (samples, s) = prepare(&cfg)?;
        let data: Vec<_> = samples.iter().map(|x| x.rendered.clone()).collect();
        let slots: usize = data.iter().map(|r| r.num_slots()).sum();
        println!("{strategy:?}: {} samples, {slots} speech slots", data.len());
        let mut p = Parameters::<f32>::init(&cfg.model_config());
        train(&mut p, &data, &cfg.train, |_, _| Ok(()))?;
        reports.push(evaluate(&p, &samples, &cfg, &s)?);
        stats.get_or_insert(s);
    }
    let lm = groupformer::decode::LatencyModel::fixed(11, 10.0);
    let c = compare(&reports[0], &reports[1], stats.as_ref().expect("stats"), &lm);
    println!("{}", serde_json::to_string_pretty(&c.rows)?);
    println!(
        "fixed-cost latency ratio {:?}, reduce/group length ratio {:.2} (predicted {:.2})",
        c.fixed_latency_ratio, c.sequence_length_ratio, c.predicted_length_ratio
    );
    Ok(())
}
