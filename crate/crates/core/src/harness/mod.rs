//! Corpus generation, experiment configuration and the command implementations.

pub mod chat;
pub mod commands;
pub mod compare;
pub mod config;
pub mod corpus;
pub mod data;
pub mod eval;

pub use chat::{run_chat, ChatTurn, Transcript, TurnStatus};
pub use commands::{
    cmd_build_corpus, cmd_chat, cmd_compare, cmd_eval, cmd_latency, cmd_train, load_for, load_lexicon, load_records,
    prepare, read_script, LatencySummary, SampleLatency, TrainSummary,
};
pub use compare::{compare, Comparison, StrategyRow, REFERENCE_GROUP_TPS, REFERENCE_REDUCE_TPS};
pub use config::{DataConfig, DecodeConfig, ExperimentConfig, Strategy, TaskMix};
pub use corpus::{build_corpus, check_corpus, corpus_stats, dialogues, CorpusSpec, CorpusStats};
pub use data::{build_samples, rendered, sample_turns, Expected, Sample};
pub use eval::{check_report, evaluate, replay, strategy_tps, teacher_forced_hits, Check, EvalReport, Hits};
