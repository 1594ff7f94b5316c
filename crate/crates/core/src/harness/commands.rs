//! File-level commands behind the CLI. Each one reads a config, writes JSON artifacts
//! and returns what it wrote.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::chat::{run_chat, Transcript};
use super::compare::{compare, Comparison};
use super::config::ExperimentConfig;
use super::corpus::{build_corpus, check_corpus, corpus_stats, dialogues, CorpusStats};
use super::data::{build_samples, rendered, Sample};
use super::eval::{evaluate, replay, EvalReport};
use crate::decode::{first_audio_latency, median, LatencyReport, SamplingParams};
use crate::dialogue::{read_corpus, write_corpus, CorpusRecord, Modality};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, Parameters};
use crate::training::{jsonl_logger, train, LossBreakdown, StepRecord};
use crate::unit_codec::SyntheticLexicon;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    create_parent(path)?;
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, value)?;
    Ok(())
}

pub fn load_lexicon(cfg: &ExperimentConfig) -> Result<SyntheticLexicon> {
    match &cfg.data.lexicon {
        Some(path) => SyntheticLexicon::load(path),
        None => Ok(SyntheticLexicon::generate(cfg.data.lexicon_seed)),
    }
}

/// Corpus records from the configured file, or generated from the config.
pub fn load_records(cfg: &ExperimentConfig, lexicon: &SyntheticLexicon) -> Result<Vec<CorpusRecord>> {
    let records = match &cfg.data.corpus {
        Some(path) => read_corpus(path)?,
        None => build_corpus(&cfg.data.generator, lexicon)?,
    };
    check_corpus(&records, lexicon)?;
    Ok(records)
}

/// Training samples and corpus statistics for an experiment.
pub fn prepare(cfg: &ExperimentConfig) -> Result<(Vec<Sample>, CorpusStats)> {
    cfg.validate()?;
    let lexicon = load_lexicon(cfg)?;
    let records = load_records(cfg, &lexicon)?;
    let rate = lexicon.frame_rate_hz();
    let stats = corpus_stats(&records, rate, cfg.model.group_size)?;
    let samples = build_samples(
        &dialogues(&records, rate),
        &cfg.data.task_mix,
        cfg.layout(),
        cfg.data.mix_seed,
    )?;
    let max_len = cfg.model_config().max_len;
    if let Some(s) = samples.iter().find(|s| s.rendered.len() > max_len) {
        return Err(Error::SequenceTooLong {
            len: s.rendered.len(),
            max: max_len,
        });
    }
    Ok((samples, stats))
}

/// Writes the corpus JSONL (and the lexicon if `lexicon_out` is given).
pub fn cmd_build_corpus(cfg: &ExperimentConfig, out: &Path, lexicon_out: Option<&Path>) -> Result<CorpusStats> {
    let lexicon = load_lexicon(cfg)?;
    let records = build_corpus(&cfg.data.generator, &lexicon)?;
    create_parent(out)?;
    write_corpus(out, &records)?;
    if let Some(path) = lexicon_out {
        create_parent(path)?;
        lexicon.save(path)?;
    }
    corpus_stats(&records, lexicon.frame_rate_hz(), cfg.model.group_size)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub reached_target: bool,
    pub final_loss: Option<LossBreakdown>,
    pub n_samples: usize,
    pub n_parameters: usize,
    pub checkpoint: PathBuf,
    pub wall_seconds: f64,
}

/// Trains from scratch and writes the step log, checkpoint and summary into `out_dir`.
///
/// On a non-finite loss or gradient the last good parameters are saved before the error returns.
pub fn cmd_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Parameters<f32>, TrainSummary)> {
    let (samples, _) = prepare(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let data = rendered(&samples);
    let mut p = Parameters::<f32>::init(&cfg.model_config());
    let ckpt = out_dir.join(CHECKPOINT_FILE);
    let mut log = jsonl_logger(BufWriter::new(File::create(out_dir.join(TRAIN_LOG_FILE))?));
    let every = cfg.train.checkpoint_every;
    let start = std::time::Instant::now();
    let result = train(&mut p, &data, &cfg.train, |r: &StepRecord, params| {
        log(r, params)?;
        if every.is_some_and(|n| n > 0 && (r.step + 1).is_multiple_of(n)) {
            save_checkpoint(&ckpt, params)?;
        }
        Ok(())
    });
    drop(log);
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            save_checkpoint(&ckpt, &p)?;
            return Err(e);
        }
    };
    save_checkpoint(&ckpt, &p)?;
    let summary = TrainSummary {
        steps: outcome.steps,
        reached_target: outcome.reached_target,
        final_loss: outcome.final_loss,
        n_samples: samples.len(),
        n_parameters: p.num_parameters(),
        checkpoint: ckpt,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out_dir.join(TRAIN_SUMMARY_FILE), &summary)?;
    Ok((p, summary))
}

/// Loads a checkpoint and rejects it unless its shapes match the experiment.
pub fn load_for(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<Parameters<f32>> {
    let p = load_checkpoint(checkpoint)?;
    if p.config != cfg.model_config() {
        return Err(Error::ShapeMismatch(format!(
            "{} was trained with a different model config",
            checkpoint.display()
        )));
    }
    Ok(p)
}

pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path, out: Option<&Path>) -> Result<EvalReport> {
    let p = load_for(cfg, checkpoint)?;
    let (samples, stats) = prepare(cfg)?;
    let report = evaluate(&p, &samples, cfg, &stats)?;
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(report)
}

/// Reads a chat script: a JSON array of user utterances.
pub fn read_script(path: &Path) -> Result<Vec<String>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("chat script {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn cmd_chat(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    script: &Path,
    out: &Path,
    greedy: bool,
) -> Result<Transcript> {
    cfg.validate()?;
    let p = load_for(cfg, checkpoint)?;
    let lexicon = load_lexicon(cfg)?;
    let script = read_script(script)?;
    let t = run_chat(&p, &script, &lexicon, cfg, greedy.then(SamplingParams::greedy))?;
    write_json(out, &t)?;
    Ok(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleLatency {
    pub dialogue_id: String,
    pub report: LatencyReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub receptive_field: usize,
    pub n_offset: usize,
    pub mode: String,
    pub samples: Vec<SampleLatency>,
    /// `None` when there are no samples or the median is infinite.
    pub median_latency_ms: Option<f64>,
}

/// Greedy decodes of every speech-response sample, one latency report each.
/// With `traces`, each decode trace is written there as `<dialogue_id>.jsonl`.
pub fn cmd_latency(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    out: &Path,
    traces: Option<&Path>,
) -> Result<LatencySummary> {
    let p = load_for(cfg, checkpoint)?;
    let (samples, _) = prepare(cfg)?;
    if let Some(dir) = traces {
        std::fs::create_dir_all(dir)?;
    }
    let lm = cfg.decode.latency;
    let mut rows = Vec::new();
    for s in samples
        .iter()
        .filter(|s| s.kind.response_modality() == Modality::Speech)
    {
        let (o, _, _) = replay(&p, s, cfg.layout(), cfg.decode.options.max_steps)?;
        if let Some(dir) = traces {
            o.trace.write_jsonl(BufWriter::new(File::create(
                dir.join(format!("{}.jsonl", s.dialogue_id)),
            )?))?;
        }
        rows.push(SampleLatency {
            dialogue_id: s.dialogue_id.clone(),
            report: first_audio_latency(&o.trace, &lm),
        });
    }
    let values: Vec<f64> = rows.iter().map(|r| r.report.latency_or_inf()).collect();
    let summary = LatencySummary {
        receptive_field: lm.receptive_field,
        n_offset: lm.n_offset(),
        mode: lm.mode().to_string(),
        samples: rows,
        median_latency_ms: median(&values).filter(|v| v.is_finite()),
    };
    write_json(out, &summary)?;
    Ok(summary)
}

/// Evaluates both checkpoints and writes the comparison.
pub fn cmd_compare(
    group: (&ExperimentConfig, &Path),
    reduce: (&ExperimentConfig, &Path),
    out: &Path,
) -> Result<Comparison> {
    let g = cmd_eval(group.0, group.1, None)?;
    let r = cmd_eval(reduce.0, reduce.1, None)?;
    let (_, stats) = prepare(group.0)?;
    let c = compare(&g, &r, &stats, &group.0.decode.latency);
    write_json(out, &c)?;
    Ok(c)
}
