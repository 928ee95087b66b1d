use serde::{Deserialize, Serialize};

use super::params::{Head, JointParams, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::{affine, log_sigmoid, sigmoid, softmax, ParamSet, Tape, Tensor, Var};

/// Embedding rows for the history preceding position `u` of `labels`.
///
/// Slot 0 holds `labels[u-1]`, slot 1 `labels[u-2]`, and so on; missing
/// slots use the sentinel row. Label ids are 1-based.
pub(crate) fn context_rows(config: &ModelConfig, labels: &[usize], u: usize) -> Result<Vec<usize>> {
    (0..config.context)
        .map(|slot| {
            if u > slot {
                let id = labels[u - 1 - slot];
                if id == 0 || id > config.vocab_size {
                    return Err(Error::Contract(format!(
                        "token id {id} outside 1..={}",
                        config.vocab_size
                    )));
                }
                Ok(id - 1)
            } else {
                Ok(config.sentinel())
            }
        })
        .collect()
}

impl ModelParams {
    /// Causal encoder: frame `t` sees features `t - window + 1 ..= t`.
    pub fn encode(&self, features: &Tensor) -> Result<Tensor> {
        let c = &self.config;
        let (frames, dim) = features.dims();
        if features.shape().len() != 2 || frames == 0 {
            return Err(Error::Contract(format!(
                "encoder needs a non-empty T×F matrix, got shape {:?}",
                features.shape()
            )));
        }
        if dim != c.feature_dim {
            return Err(Error::Dimension {
                op: "encode",
                left: features.shape().to_vec(),
                right: vec![c.feature_dim],
            });
        }
        let mut window = Vec::with_capacity(frames * dim * c.encoder_window);
        for t in 0..frames {
            for k in 0..c.encoder_window {
                if t >= k {
                    window.extend_from_slice(features.row(t - k));
                } else {
                    window.extend(std::iter::repeat_n(0.0, dim));
                }
            }
        }
        let window = Tensor::matrix(frames, dim * c.encoder_window, window)?;
        let hidden = affine(&window, &self.enc_hidden, &self.enc_hidden_bias)?;
        let hidden = map(&hidden, f64::tanh);
        affine(&hidden, &self.enc_out, &self.enc_out_bias)
    }

    /// Prediction-network output `g_u` for the given label history (only the
    /// last `context` tokens matter).
    pub fn predict(&self, history: &[usize]) -> Result<Tensor> {
        let rows = context_rows(&self.config, history, history.len())?;
        let mut x = Vec::with_capacity(self.config.embed_dim * rows.len());
        for (slot, &r) in rows.iter().enumerate() {
            x.extend_from_slice(self.embeddings[slot].row(r));
        }
        affine(&Tensor::vector(x), &self.pred, &self.pred_bias)
    }

    /// Head logits `s = A·tanh(P·f + Q·g + b_h) + b_s`.
    pub fn joint(&self, f_t: &Tensor, g_u: &Tensor, head: Head) -> Result<Tensor> {
        joint_with(self.head(head), f_t, g_u)
    }

    /// Next-symbol distribution of the internal LM: encoder output replaced by
    /// zeros and the blank slot dropped.
    pub fn ilm_next_token_distribution(&self, history: &[usize], head: Head) -> Result<Vec<f64>> {
        let f = Tensor::zeros(&[self.config.encoder_dim]);
        let g = self.predict(history)?;
        let s = self.joint(&f, &g, head)?;
        Ok(match head {
            Head::Cap => softmax(s.data()),
            Head::Asr | Head::Pause => softmax(&s.data()[1..]),
        })
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect()).expect("same shape")
}

fn joint_with(p: &JointParams, f_t: &Tensor, g_u: &Tensor) -> Result<Tensor> {
    let pf = affine(f_t, &p.enc_proj, &p.hidden_bias)?;
    let qg = affine(g_u, &p.pred_proj, &Tensor::zeros(&[p.pred_proj.rows()]))?;
    if pf.shape() != qg.shape() {
        return Err(Error::Dimension {
            op: "joint",
            left: pf.shape().to_vec(),
            right: qg.shape().to_vec(),
        });
    }
    let h = Tensor::new(
        pf.shape().to_vec(),
        pf.data().iter().zip(qg.data()).map(|(a, b)| (a + b).tanh()).collect(),
    )?;
    affine(&h, &p.out, &p.out_bias)
}

/// HAT-factored output distributions of the three heads at one lattice node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSlice {
    /// `[b, (1-b)·softmax(s_asr[1..])]`
    pub asr: Vec<f64>,
    /// `[b, (1-b)·softmax(s_cap)]` with `b` borrowed from the ASR head.
    pub cap: Vec<f64>,
    /// `[b_p, (1-b_p)·softmax(s_pause[1..])]` with its own blank.
    pub pause: Vec<f64>,
    pub logits: [Vec<f64>; 3],
}

fn hat(blank_logit: f64, token_logits: &[f64]) -> (f64, Vec<f64>) {
    let b = sigmoid(blank_logit);
    let emit = sigmoid(-blank_logit);
    (b, softmax(token_logits).into_iter().map(|p| emit * p).collect())
}

pub fn posterior(s_asr: &[f64], s_cap: &[f64], s_pause: &[f64]) -> Result<PosteriorSlice> {
    if s_asr.len() < 2 || s_cap.len() != 2 || s_pause.len() != 4 {
        return Err(Error::Dimension {
            op: "posterior",
            left: vec![s_asr.len(), s_cap.len(), s_pause.len()],
            right: vec![0, 2, 4],
        });
    }
    let (b, tokens) = hat(s_asr[0], &s_asr[1..]);
    let asr = std::iter::once(b).chain(tokens).collect();
    let emit = sigmoid(-s_asr[0]);
    let cap = std::iter::once(b)
        .chain(softmax(s_cap).into_iter().map(|p| emit * p))
        .collect();
    let (bp, ptoks) = hat(s_pause[0], &s_pause[1..]);
    let pause = std::iter::once(bp).chain(ptoks).collect();
    Ok(PosteriorSlice {
        asr,
        cap,
        pause,
        logits: [s_asr.to_vec(), s_cap.to_vec(), s_pause.to_vec()],
    })
}

/// Log-probabilities `[log b, log((1-b)·p_k)...]` of one HAT output row.
pub fn hat_log_probs(blank_logit: f64, token_logits: &[f64]) -> Vec<f64> {
    let lse = crate::numerics::log_sum_exp(token_logits);
    let log_emit = log_sigmoid(-blank_logit);
    std::iter::once(log_sigmoid(blank_logit))
        .chain(token_logits.iter().map(|z| log_emit + z - lse))
        .collect()
}

/// The model's parameters registered on a tape, mirroring [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub enc_hidden: Var,
    pub enc_hidden_bias: Var,
    pub enc_out: Var,
    pub enc_out_bias: Var,
    pub embeddings: Vec<Var>,
    pub pred: Var,
    pub pred_bias: Var,
    pub heads: [JointVars; 3],
    /// Every var above, in [`ParamSet::tensors`] order.
    pub all: Vec<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct JointVars {
    pub enc_proj: Var,
    pub pred_proj: Var,
    pub hidden_bias: Var,
    pub out: Var,
    pub out_bias: Var,
}

impl ModelVars {
    pub fn register(params: &ModelParams, tape: &mut Tape) -> Result<Self> {
        let all: Vec<Var> = params
            .tensors()
            .into_iter()
            .map(|t| tape.param(t.clone()))
            .collect::<Result<_>>()?;
        let n_embed = params.embeddings.len();
        let mut it = all.iter().copied();
        let mut next = || it.next().expect("param count");
        let enc_hidden = next();
        let enc_hidden_bias = next();
        let enc_out = next();
        let enc_out_bias = next();
        let embeddings = (0..n_embed).map(|_| next()).collect();
        let pred = next();
        let pred_bias = next();
        let mut head = || JointVars {
            enc_proj: next(),
            pred_proj: next(),
            hidden_bias: next(),
            out: next(),
            out_bias: next(),
        };
        let heads = [head(), head(), head()];
        Ok(Self {
            enc_hidden,
            enc_hidden_bias,
            enc_out,
            enc_out_bias,
            embeddings,
            pred,
            pred_bias,
            heads,
            all,
        })
    }

    pub fn head(&self, head: Head) -> JointVars {
        self.heads[head.index()]
    }
}

/// Encoder on the tape; `features` is `T×F`.
pub fn encode_graph(tape: &mut Tape, vars: &ModelVars, config: &ModelConfig, features: Var) -> Result<Var> {
    let mut window = vec![features];
    for k in 1..config.encoder_window {
        window.push(tape.shift_rows(features, k)?);
    }
    let x = if window.len() == 1 {
        features
    } else {
        tape.concat_cols(&window)?
    };
    let h = tape.linear(x, vars.enc_hidden, Some(vars.enc_hidden_bias))?;
    let h = tape.tanh(h)?;
    tape.linear(h, vars.enc_out, Some(vars.enc_out_bias))
}

/// Prediction-network rows `g_0 .. g_{rows-1}` for teacher-forced `labels`.
pub fn predict_graph(
    tape: &mut Tape,
    vars: &ModelVars,
    config: &ModelConfig,
    labels: &[usize],
    rows: usize,
) -> Result<Var> {
    let mut per_slot = vec![Vec::with_capacity(rows); config.context];
    for u in 0..rows {
        for (slot, r) in context_rows(config, labels, u)?.into_iter().enumerate() {
            per_slot[slot].push(r);
        }
    }
    let gathered: Vec<Var> = per_slot
        .iter()
        .zip(&vars.embeddings)
        .map(|(idx, &table)| tape.gather_rows(table, idx))
        .collect::<Result<_>>()?;
    let x = if gathered.len() == 1 {
        gathered[0]
    } else {
        tape.concat_cols(&gathered)?
    };
    tape.linear(x, vars.pred, Some(vars.pred_bias))
}

/// Joint logits for every `(t, u)` pair; row `t * U + u`.
pub fn joint_graph(tape: &mut Tape, head: JointVars, enc: Var, pred: Var) -> Result<Var> {
    let pf = tape.linear(enc, head.enc_proj, None)?;
    let qg = tape.linear(pred, head.pred_proj, Some(head.hidden_bias))?;
    let h = tape.outer_sum(pf, qg)?;
    let h = tape.tanh(h)?;
    tape.linear(h, head.out, Some(head.out_bias))
}
