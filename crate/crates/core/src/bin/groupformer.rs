use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use groupformer::harness::{self, check_report, ExperimentConfig, Strategy};

#[derive(Parser)]
#[command(name = "groupformer", about = "Grouped speech-unit language model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus overrides for the most common fields.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config JSON; defaults apply for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    n_dialogues: Option<usize>,
    #[arg(long)]
    max_turns: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    peak_lr: Option<f64>,
    #[arg(long)]
    target_loss: Option<f64>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown strategy {s:?}"))
}

impl ConfigArgs {
    fn resolve(&self) -> groupformer::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(s) = self.strategy {
            cfg.strategy = s;
        }
        if let Some(p) = &self.corpus {
            cfg.data.corpus = Some(p.clone());
        }
        if let Some(p) = &self.lexicon {
            cfg.data.lexicon = Some(p.clone());
        }
        if let Some(n) = self.n_dialogues {
            cfg.data.generator.n_dialogues = n;
        }
        if let Some(n) = self.max_turns {
            cfg.data.generator.max_turns = n;
        }
        if let Some(n) = self.max_steps {
            cfg.train.max_steps = n;
        }
        if let Some(n) = self.batch_size {
            cfg.train.batch_size = n;
        }
        if let Some(lr) = self.peak_lr {
            cfg.train.peak_lr = lr;
        }
        if let Some(t) = self.target_loss {
            cfg.train.target_loss = Some(t);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved experiment config as JSON.
    Config {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate the synthetic dialogue corpus.
    BuildCorpus {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lexicon_out: Option<PathBuf>,
    },
    /// Train from scratch; writes checkpoint.bin, train_log.jsonl and train_summary.json.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on the training set.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit nonzero if any report property fails.
        #[arg(long)]
        check: bool,
        /// Exact-match floor used by --check.
        #[arg(long)]
        min_exact_match: Option<f64>,
    },
    /// Run a scripted multi-turn voice chat.
    Chat {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON array of user utterances.
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        greedy: bool,
    },
    /// First-audio latency of every speech response.
    Latency {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-sample decode traces.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Compare a grouped and a reduced checkpoint.
    Compare {
        #[arg(long)]
        group_config: Option<PathBuf>,
        #[arg(long)]
        group_checkpoint: PathBuf,
        #[arg(long)]
        reduce_config: Option<PathBuf>,
        #[arg(long)]
        reduce_checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json(v: &impl serde::Serialize) -> groupformer::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> groupformer::Result<bool> {
    match cli.command {
        Command::Config { cfg } => print_json(&cfg.resolve()?)?,
        Command::BuildCorpus { cfg, out, lexicon_out } => {
            let stats = harness::cmd_build_corpus(&cfg.resolve()?, &out, lexicon_out.as_deref())?;
            print_json(&stats)?;
        }
        Command::Train { cfg, out_dir } => {
            let (_, summary) = harness::cmd_train(&cfg.resolve()?, &out_dir)?;
            print_json(&summary)?;
        }
        Command::Eval {
            cfg,
            checkpoint,
            out,
            check,
            min_exact_match,
        } => {
            let cfg = cfg.resolve()?;
            let report = harness::cmd_eval(&cfg, &checkpoint, out.as_deref())?;
            print_json(&report)?;
            if check {
                let checks = check_report(&report, &cfg, min_exact_match);
                for c in &checks {
                    eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                return Ok(checks.iter().all(|c| c.pass));
            }
        }
        Command::Chat {
            cfg,
            checkpoint,
            script,
            out,
            greedy,
        } => {
            let t = harness::cmd_chat(&cfg.resolve()?, &checkpoint, &script, &out, greedy)?;
            for turn in &t.turns {
                println!("user: {}\nassistant: {}", turn.user_text, turn.response_text);
            }
        }
        Command::Latency {
            cfg,
            checkpoint,
            out,
            traces,
        } => {
            let s = harness::cmd_latency(&cfg.resolve()?, &checkpoint, &out, traces.as_deref())?;
            println!(
                "{} speech turns, n_offset {}, median first-audio latency {} ({})",
                s.samples.len(),
                s.n_offset,
                s.median_latency_ms.map_or("inf".to_string(), |v| format!("{v:.2} ms")),
                s.mode
            );
        }
        Command::Compare {
            group_config,
            group_checkpoint,
            reduce_config,
            reduce_checkpoint,
            seed,
            out,
        } => {
            let load = |path: Option<PathBuf>, strategy| {
                ConfigArgs {
                    config: path,
                    seed,
                    strategy: Some(strategy),
                    corpus: None,
                    lexicon: None,
                    n_dialogues: None,
                    max_turns: None,
                    max_steps: None,
                    batch_size: None,
                    peak_lr: None,
                    target_loss: None,
                }
                .resolve()
            };
            let g = load(group_config, Strategy::Group)?;
            let r = load(reduce_config, Strategy::Reduce)?;
            let c = harness::cmd_compare((&g, &group_checkpoint), (&r, &reduce_checkpoint), &out)?;
            print_json(&c)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
