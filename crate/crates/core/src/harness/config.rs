use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::CorpusSpec;
use crate::decode::{DecodeOptions, LatencyModel, SamplingParams};
use crate::dialogue::{SpeechLayout, TaskKind};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// How speech enters the backbone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Fixed groups of `model.group_size` units per step.
    #[default]
    Group,
    /// Duplicate runs collapsed, one unit per step.
    Reduce,
}

/// Relative weights of the six task kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskMix {
    pub si_sr: f64,
    pub si_rt: f64,
    pub it_sr: f64,
    pub it_rt: f64,
    pub asr: f64,
    pub tts: f64,
}

impl Default for TaskMix {
    fn default() -> Self {
        Self {
            si_sr: 2.0,
            si_rt: 1.0,
            it_sr: 1.0,
            it_rt: 1.0,
            asr: 0.5,
            tts: 0.5,
        }
    }
}

impl TaskMix {
    pub fn only(kind: TaskKind) -> Self {
        let mut m = Self {
            si_sr: 0.0,
            si_rt: 0.0,
            it_sr: 0.0,
            it_rt: 0.0,
            asr: 0.0,
            tts: 0.0,
        };
        *m.weight_mut(kind) = 1.0;
        m
    }

    pub fn weight(&self, kind: TaskKind) -> f64 {
        match kind {
            TaskKind::SpeechToSpeech => self.si_sr,
            TaskKind::SpeechToText => self.si_rt,
            TaskKind::TextToSpeech => self.it_sr,
            TaskKind::TextToText => self.it_rt,
            TaskKind::Asr => self.asr,
            TaskKind::Tts => self.tts,
        }
    }

    fn weight_mut(&mut self, kind: TaskKind) -> &mut f64 {
        match kind {
            TaskKind::SpeechToSpeech => &mut self.si_sr,
            TaskKind::SpeechToText => &mut self.si_rt,
            TaskKind::TextToSpeech => &mut self.it_sr,
            TaskKind::TextToText => &mut self.it_rt,
            TaskKind::Asr => &mut self.asr,
            TaskKind::Tts => &mut self.tts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = TaskKind::ALL.map(|k| self.weight(k));
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("task mix weights must be finite and nonnegative".into()));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::Config("task mix weights are all zero".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct DataConfig {
    /// Corpus JSONL; built from `generator` when absent.
    pub corpus: Option<PathBuf>,
    /// Lexicon JSON; generated from `lexicon_seed` when absent.
    pub lexicon: Option<PathBuf>,
    pub lexicon_seed: u64,
    pub generator: CorpusSpec,
    pub task_mix: TaskMix,
    /// Seed for assigning task kinds to dialogues.
    pub mix_seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub sampling: SamplingParams,
    pub latency: LatencyModel,
    pub options: DecodeOptions,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub decode: DecodeConfig,
    pub strategy: Strategy,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Overrides every seed in the config.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.model.seed = seed;
        self.train.seed = seed;
        self.data.generator.seed = seed;
        self.data.mix_seed = seed;
        self.decode.sampling.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        self.train.validate()?;
        self.data.task_mix.validate()?;
        self.decode.sampling.validate()?;
        self.decode.latency.validate()?;
        if self.data.generator.max_len > self.model.max_len {
            return Err(Error::Config(format!(
                "corpus max_len {} exceeds model max_len {}",
                self.data.generator.max_len, self.model.max_len
            )));
        }
        for p in [&self.data.corpus, &self.data.lexicon].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Model shapes after applying the strategy: reduce always uses one unit per step.
    pub fn model_config(&self) -> ModelConfig {
        match self.strategy {
            Strategy::Group => self.model.clone(),
            Strategy::Reduce => ModelConfig {
                group_size: 1,
                ..self.model.clone()
            },
        }
    }

    pub fn layout(&self) -> SpeechLayout {
        match self.strategy {
            Strategy::Group => SpeechLayout::Grouped(self.model.group_size),
            Strategy::Reduce => SpeechLayout::Reduced,
        }
    }
}
