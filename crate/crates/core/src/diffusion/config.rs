//! Training configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! steps = 2000
//! batch_size = 4
//! lr = 1e-3
//! pool = 2                  # encoder factor p
//! prompt_dropout = 0.1
//! heatmap_source = "oracle" # or "estimated"
//!
//! [data.render]
//! frames = 8
//! height = 32
//! width = 32
//!
//! [schedule]
//! timesteps = 1000
//!
//! [loss]
//! lambda = 1.0
//! mode = "motif"            # motif | inverse | none
//!
//! [model]
//! width = 32
//! conditioning = "x_cat"    # x_cat | global_feat | both
//!
//! [sampling]
//! steps = 50
//! guidance = 7.5
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::LossSpec;
use super::precond::SkipKind;
use super::schedule::ScheduleConfig;
use crate::error::{Error, Result};
use crate::motionmap::{FlowParams, HeatmapParams};
use crate::numcore::{ConditioningMode, DenoiserConfig, OptimizerKind};
use crate::synthvid::{DatasetConfig, PromptVocab, RenderConfig, Verb};

/// How prompt indices become embedding vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptEncoder {
    /// One learned row per prompt.
    Table,
    /// Sum of learned rows for the prompt's words.
    #[default]
    Words,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapSource {
    #[default]
    Oracle,
    Estimated,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    pub render: RenderConfig,
    /// Empty means every verb.
    pub verbs: Vec<Verb>,
    /// Empty means every scenario.
    pub scenarios: Vec<String>,
}

impl DataSpec {
    pub fn stream(&self) -> DatasetConfig {
        DatasetConfig {
            render: self.render.clone(),
            size: None,
            verbs: self.verbs.clone(),
            scenarios: self.scenarios.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub width: usize,
    pub blocks: usize,
    pub time_dim: usize,
    pub prompt_dim: usize,
    pub conditioning: ConditioningMode,
    /// Feed each frame's position as an extra input channel.
    pub frame_position: bool,
    pub prompt_encoder: PromptEncoder,
    /// Analytic skip added to the network output.
    pub skip: SkipKind,
    /// Prior spread of changed elements around the condition latent.
    pub skip_std: f64,
    /// Prior probability that an element differs from the condition.
    pub skip_moving: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            width: 32,
            blocks: 2,
            time_dim: 16,
            prompt_dim: 16,
            conditioning: ConditioningMode::XCat,
            frame_position: true,
            prompt_encoder: PromptEncoder::Words,
            skip: SkipKind::Mixture,
            skip_std: 1.0,
            skip_moving: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSpec {
    pub steps: usize,
    pub guidance: f64,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            steps: 50,
            guidance: 7.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "defaults::pool")]
    pub pool: usize,
    #[serde(default = "defaults::prompt_dropout")]
    pub prompt_dropout: f64,
    #[serde(default)]
    pub heatmap_source: HeatmapSource,
    #[serde(default)]
    pub heatmap: HeatmapParams,
    #[serde(default)]
    pub flow: FlowParams,
    /// Steps between heartbeat lines.
    #[serde(default = "defaults::log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub loss: LossSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub sampling: SamplingSpec,
}

mod defaults {
    pub fn batch_size() -> usize {
        4
    }
    pub fn lr() -> f64 {
        1e-3
    }
    pub fn pool() -> usize {
        2
    }
    pub fn prompt_dropout() -> f64 {
        0.1
    }
    pub fn log_every() -> usize {
        50
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 2000,
            batch_size: defaults::batch_size(),
            lr: defaults::lr(),
            optimizer: OptimizerKind::default(),
            pool: defaults::pool(),
            prompt_dropout: defaults::prompt_dropout(),
            heatmap_source: HeatmapSource::Oracle,
            heatmap: HeatmapParams::default(),
            flow: FlowParams::default(),
            log_every: defaults::log_every(),
            data: DataSpec::default(),
            schedule: ScheduleConfig::default(),
            loss: LossSpec::default(),
            model: ModelSpec::default(),
            sampling: SamplingSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.prompt_dropout) {
            return bad(format!("prompt_dropout must lie in [0, 1], got {}", self.prompt_dropout));
        }
        let r = &self.data.render;
        if self.pool == 0 || r.height % self.pool != 0 || r.width % self.pool != 0 {
            return bad(format!("pool {} must divide {}x{}", self.pool, r.height, r.width));
        }
        if self.sampling.steps == 0 || self.sampling.steps > self.schedule.timesteps {
            return bad(format!("sampling steps must lie in [1, {}]", self.schedule.timesteps));
        }
        if !(self.model.skip_std >= 0.0 && self.model.skip_std.is_finite()) {
            return bad(format!("skip_std must be >= 0, got {}", self.model.skip_std));
        }
        if !(self.model.skip_moving > 0.0 && self.model.skip_moving < 1.0) {
            return bad(format!("skip_moving must lie in (0, 1), got {}", self.model.skip_moving));
        }
        r.validate()?;
        self.loss.validate()?;
        Ok(())
    }

    pub fn denoiser_config(&self, vocab: &PromptVocab) -> DenoiserConfig {
        let prompt_tokens = match self.model.prompt_encoder {
            PromptEncoder::Table => Vec::new(),
            PromptEncoder::Words => vocab.word_tokens().1,
        };
        DenoiserConfig {
            latent_channels: 3 * self.pool * self.pool,
            width: self.model.width,
            blocks: self.model.blocks,
            time_dim: self.model.time_dim,
            prompt_dim: self.model.prompt_dim,
            vocab_size: vocab.len(),
            prompt_tokens,
            conditioning: self.model.conditioning,
            frame_position: self.model.frame_position,
            timesteps: self.schedule.timesteps,
        }
    }
}
