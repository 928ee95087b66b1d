use serde::{Deserialize, Serialize};

use crate::decode::DecodeOptions;
use crate::error::{Error, Result};
use crate::loss::JeitWeights;
use crate::model::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Transducer losses on paired audio only.
    PairedOnly,
    /// Paired losses plus internal-LM losses on text-only data.
    Jeit,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::PairedOnly => "paired_only",
            Regime::Jeit => "jeit",
        }
    }
}

/// Model sizes apart from the vocabulary and feature width, which come
/// from the corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub encoder_window: usize,
    pub encoder_width: usize,
    pub encoder_dim: usize,
    pub context: usize,
    pub embed_dim: usize,
    pub pred_dim: usize,
    pub joint_dim: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        let c = ModelConfig::new(2, 1);
        Self {
            encoder_window: c.encoder_window,
            encoder_width: c.encoder_width,
            encoder_dim: c.encoder_dim,
            context: c.context,
            embed_dim: c.embed_dim,
            pred_dim: c.pred_dim,
            joint_dim: c.joint_dim,
        }
    }
}

impl ModelShape {
    pub fn config(&self, vocab_size: usize, feature_dim: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            feature_dim,
            encoder_window: self.encoder_window,
            encoder_width: self.encoder_width,
            encoder_dim: self.encoder_dim,
            context: self.context,
            embed_dim: self.embed_dim,
            pred_dim: self.pred_dim,
            joint_dim: self.joint_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub regime: Regime,
    pub weights: JeitWeights,
    pub learning_rate: f64,
    pub momentum: f64,
    pub steps: usize,
    pub paired_batch: usize,
    pub unpaired_batch: usize,
    pub seed: u64,
    /// Steps between checkpoints written during training; 0 writes only the final one.
    pub checkpoint_interval: usize,
    /// Global gradient-norm bound.
    pub clip_norm: f64,
    pub model: ModelShape,
    pub decode: DecodeOptions,
    /// Reference-token tolerance when matching ⟨eos⟩.
    pub eos_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Jeit,
            weights: JeitWeights::default(),
            learning_rate: 0.01,
            momentum: 0.9,
            steps: 1500,
            paired_batch: 8,
            unpaired_batch: 8,
            seed: 1,
            checkpoint_interval: 0,
            clip_norm: 5.0,
            model: ModelShape::default(),
            decode: DecodeOptions::default(),
            eos_window: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.decode.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.paired_batch == 0 || (self.regime == Regime::Jeit && self.unpaired_batch == 0) {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm < 0.0 {
            return Err(Error::Config(format!(
                "clip_norm {} must be non-negative",
                self.clip_norm
            )));
        }
        self.model.config(2, 1).validate()
    }

    /// Loss weights actually applied; the paired-only regime drops every ILM term.
    pub fn effective_weights(&self) -> JeitWeights {
        match self.regime {
            Regime::PairedOnly => JeitWeights {
                beta: 0.0,
                ..self.weights
            },
            Regime::Jeit => self.weights,
        }
    }
}
