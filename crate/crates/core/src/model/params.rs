use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Asr,
    Cap,
    Pause,
}

impl Head {
    pub const ALL: [Head; 3] = [Head::Asr, Head::Cap, Head::Pause];

    pub fn index(self) -> usize {
        match self {
            Head::Asr => 0,
            Head::Cap => 1,
            Head::Pause => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Asr => "asr",
            Head::Cap => "cap",
            Head::Pause => "pause",
        }
    }
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asr" => Ok(Head::Asr),
            "cap" => Ok(Head::Cap),
            "pause" => Ok(Head::Pause),
            other => Err(Error::Contract(format!("unknown head {other:?}"))),
        }
    }
}

/// Pause head outputs: blank, ⟨non-pause⟩, ⟨pause⟩, ⟨eos⟩.
pub const PAUSE_OUTPUTS: usize = 4;
/// Capitalization head outputs: ⟨cap⟩, ⟨non-cap⟩. Its blank comes from the ASR head.
pub const CAP_OUTPUTS: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Real wordpieces `V`; the ASR head has `V + 1` logits.
    pub vocab_size: usize,
    pub feature_dim: usize,
    pub encoder_window: usize,
    pub encoder_width: usize,
    /// `D_a`
    pub encoder_dim: usize,
    /// Previous tokens seen by the prediction network.
    pub context: usize,
    pub embed_dim: usize,
    /// `D_p`
    pub pred_dim: usize,
    /// `D_h`
    pub joint_dim: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, feature_dim: usize) -> Self {
        Self {
            vocab_size,
            feature_dim,
            encoder_window: 2,
            encoder_width: 32,
            encoder_dim: 16,
            context: 2,
            embed_dim: 32,
            pred_dim: 32,
            joint_dim: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config(format!("vocab_size {} < 2", self.vocab_size)));
        }
        let dims = [
            ("feature_dim", self.feature_dim),
            ("encoder_window", self.encoder_window),
            ("encoder_width", self.encoder_width),
            ("encoder_dim", self.encoder_dim),
            ("context", self.context),
            ("embed_dim", self.embed_dim),
            ("pred_dim", self.pred_dim),
            ("joint_dim", self.joint_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        Ok(())
    }

    pub fn head_outputs(&self, head: Head) -> usize {
        match head {
            Head::Asr => self.vocab_size + 1,
            Head::Cap => CAP_OUTPUTS,
            Head::Pause => PAUSE_OUTPUTS,
        }
    }

    /// Embedding row used for a missing history slot.
    pub fn sentinel(&self) -> usize {
        self.vocab_size
    }
}

/// One joint network: `s = A·tanh(P·f + Q·g + b_h) + b_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointParams {
    /// `P`, `D_h × D_a`
    pub enc_proj: Tensor,
    /// `Q`, `D_h × D_p`
    pub pred_proj: Tensor,
    /// `b_h`
    pub hidden_bias: Tensor,
    /// `A`, `out × D_h`
    pub out: Tensor,
    /// `b_s`
    pub out_bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub enc_hidden: Tensor,
    pub enc_hidden_bias: Tensor,
    pub enc_out: Tensor,
    pub enc_out_bias: Tensor,
    /// One `(V + 1) × E` table per history slot; slot 0 is the most recent token.
    pub embeddings: Vec<Tensor>,
    pub pred: Tensor,
    pub pred_bias: Tensor,
    /// Indexed by [`Head::index`].
    pub heads: [JointParams; 3],
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        Self::build(config, &mut |_, shape| Tensor::zeros(shape))
    }

    /// Gaussian weights scaled by `1/√fan_in`; biases start at zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(config, &mut |kind, shape| {
            let std = match kind {
                Init::Bias => return Tensor::zeros(shape),
                Init::Embedding => 1.0,
                Init::Weight => 1.0 / (shape[1] as f64).sqrt(),
            };
            let normal = Normal::new(0.0, std).expect("valid std");
            let n = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| normal.sample(&mut rng)).collect()).expect("shape")
        })
    }

    fn build(config: &ModelConfig, make: &mut dyn FnMut(Init, &[usize]) -> Tensor) -> Result<Self> {
        config.validate()?;
        let c = config;
        let enc_hidden = make(Init::Weight, &[c.encoder_width, c.feature_dim * c.encoder_window]);
        let enc_hidden_bias = make(Init::Bias, &[c.encoder_width]);
        let enc_out = make(Init::Weight, &[c.encoder_dim, c.encoder_width]);
        let enc_out_bias = make(Init::Bias, &[c.encoder_dim]);
        let embeddings = (0..c.context)
            .map(|_| make(Init::Embedding, &[c.vocab_size + 1, c.embed_dim]))
            .collect();
        let pred = make(Init::Weight, &[c.pred_dim, c.embed_dim * c.context]);
        let pred_bias = make(Init::Bias, &[c.pred_dim]);
        let mut head = |h: Head| JointParams {
            enc_proj: make(Init::Weight, &[c.joint_dim, c.encoder_dim]),
            pred_proj: make(Init::Weight, &[c.joint_dim, c.pred_dim]),
            hidden_bias: make(Init::Bias, &[c.joint_dim]),
            out: make(Init::Weight, &[c.head_outputs(h), c.joint_dim]),
            out_bias: make(Init::Bias, &[c.head_outputs(h)]),
        };
        let heads = [head(Head::Asr), head(Head::Cap), head(Head::Pause)];
        Ok(Self {
            config: config.clone(),
            enc_hidden,
            enc_hidden_bias,
            enc_out,
            enc_out_bias,
            embeddings,
            pred,
            pred_bias,
            heads,
        })
    }

    pub fn head(&self, head: Head) -> &JointParams {
        &self.heads[head.index()]
    }

    /// Stable tensor names, in [`ParamSet::tensors`] order.
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = [
            "encoder.hidden.weight",
            "encoder.hidden.bias",
            "encoder.out.weight",
            "encoder.out.bias",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for slot in 0..self.embeddings.len() {
            names.push(format!("prediction.embedding.{slot}"));
        }
        names.push("prediction.weight".into());
        names.push("prediction.bias".into());
        for h in Head::ALL {
            for part in ["enc_proj", "pred_proj", "hidden_bias", "out", "out_bias"] {
                names.push(format!("joint.{}.{part}", h.name()));
            }
        }
        names
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            tensors: self
                .names()
                .into_iter()
                .zip(self.tensors())
                .map(|(name, t)| NamedTensor {
                    name,
                    tensor: t.clone(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let mut params = Self::zeros(&ckpt.config)?;
        let names = params.names();
        if names.len() != ckpt.tensors.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} tensors, config expects {}",
                ckpt.tensors.len(),
                names.len()
            )));
        }
        for ((slot, name), nt) in params.tensors_mut().into_iter().zip(&names).zip(ckpt.tensors) {
            if &nt.name != name || nt.tensor.shape() != slot.shape() {
                return Err(Error::Config(format!(
                    "checkpoint tensor {} {:?} does not match expected {} {:?}",
                    nt.name,
                    nt.tensor.shape(),
                    name,
                    slot.shape()
                )));
            }
            *slot = nt.tensor;
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint()).map_err(|e| Error::load(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint, failing when its config differs from `expected`.
    pub fn load(path: &Path, expected: Option<&ModelConfig>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::load(path, e))?;
        if let Some(expected) = expected {
            if &ckpt.config != expected {
                return Err(Error::load(
                    path,
                    format!(
                        "checkpoint config {:?} does not match expected {:?}",
                        ckpt.config, expected
                    ),
                ));
            }
        }
        Self::from_checkpoint(ckpt).map_err(|e| Error::load(path, e))
    }
}

#[derive(Clone, Copy)]
enum Init {
    Weight,
    Bias,
    Embedding,
}

impl ParamSet for ModelParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![
            &self.enc_hidden,
            &self.enc_hidden_bias,
            &self.enc_out,
            &self.enc_out_bias,
        ];
        v.extend(self.embeddings.iter());
        v.push(&self.pred);
        v.push(&self.pred_bias);
        for h in &self.heads {
            v.extend([&h.enc_proj, &h.pred_proj, &h.hidden_bias, &h.out, &h.out_bias]);
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![
            &mut self.enc_hidden,
            &mut self.enc_hidden_bias,
            &mut self.enc_out,
            &mut self.enc_out_bias,
        ];
        v.extend(self.embeddings.iter_mut());
        v.push(&mut self.pred);
        v.push(&mut self.pred_bias);
        for h in &mut self.heads {
            v.extend([
                &mut h.enc_proj,
                &mut h.pred_proj,
                &mut h.hidden_bias,
                &mut h.out,
                &mut h.out_bias,
            ]);
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    #[serde(flatten)]
    pub tensor: Tensor,
}

/// Self-describing checkpoint: config plus named tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
}
