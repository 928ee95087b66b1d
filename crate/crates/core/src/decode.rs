//! Greedy frame-synchronous decoding of all three heads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelkit::{render, CapTag, PauseKind, PauseTag, Vocab};
use crate::model::{posterior, Head, ModelParams, PosteriorSlice};
use crate::numerics::{softmax, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeOptions {
    pub cap_threshold: f64,
    pub max_emissions: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            cap_threshold: 0.5,
            max_emissions: 8,
        }
    }
}

impl DecodeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cap_threshold) {
            return Err(Error::Config(format!(
                "cap_threshold {} outside [0, 1]",
                self.cap_threshold
            )));
        }
        if self.max_emissions == 0 {
            return Err(Error::Config("max_emissions must be at least 1".into()));
        }
        Ok(())
    }
}

/// A ⟨pause⟩ or ⟨eos⟩ read from the pause head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauseEvent {
    pub frame: usize,
    pub kind: PauseKind,
    /// Index of the ASR token the event follows.
    pub token: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub tokens: Vec<usize>,
    /// Emission frame of each token.
    pub frames: Vec<usize>,
    pub cap: Vec<bool>,
    /// Pause tag per token, read off `events`.
    pub pause: Vec<PauseTag>,
    pub events: Vec<PauseEvent>,
    pub text: String,
}

impl DecodeResult {
    pub fn cap_tags(&self) -> Vec<CapTag> {
        self.cap
            .iter()
            .map(|&c| if c { CapTag::Cap } else { CapTag::NonCap })
            .collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// The greedy rule over an arbitrary posterior provider.
///
/// `score(t, history)` returns the posterior slice at frame `t` after the
/// given ASR history. Within a frame, ASR tokens are emitted while the ASR
/// argmax is non-blank; each emission takes a cap flag from
/// `P(⟨cap⟩ | emission) > threshold`. The pause head is then read once for
/// the token that was latest when the frame began and for every token
/// emitted in it, each conditioned on the history before that token; a
/// ⟨pause⟩ or ⟨eos⟩ argmax records at most one event per token.
pub fn greedy_search<F>(frames: usize, options: &DecodeOptions, mut score: F) -> Result<DecodeResult>
where
    F: FnMut(usize, &[usize]) -> Result<PosteriorSlice>,
{
    options.validate()?;
    let mut out = DecodeResult::default();
    for t in 0..frames {
        let open = out.tokens.len().saturating_sub(1);
        for _ in 0..options.max_emissions {
            let slice = score(t, &out.tokens)?;
            let k = argmax(&slice.asr);
            if k == 0 {
                break;
            }
            let p_cap = softmax(&slice.logits[Head::Cap.index()])[0];
            out.tokens.push(k);
            out.frames.push(t);
            out.cap.push(p_cap > options.cap_threshold);
        }
        for k in open..out.tokens.len() {
            if out.events.last().is_some_and(|e| e.token == k) {
                continue;
            }
            let slice = score(t, &out.tokens[..k])?;
            let kind = match PauseTag::from_index(argmax(&slice.pause).wrapping_sub(1)) {
                Some(PauseTag::Pause) => PauseKind::Pause,
                Some(PauseTag::Eos) => PauseKind::Eos,
                _ => continue,
            };
            out.events.push(PauseEvent {
                frame: t,
                kind,
                token: k,
            });
        }
    }
    out.pause = vec![PauseTag::NonPause; out.tokens.len()];
    for e in &out.events {
        out.pause[e.token] = match e.kind {
            PauseKind::Pause => PauseTag::Pause,
            PauseKind::Eos => PauseTag::Eos,
        };
    }
    Ok(out)
}

/// Decodes one utterance and renders the cased hypothesis.
pub fn greedy_decode(
    features: &Tensor,
    params: &ModelParams,
    vocab: &Vocab,
    options: &DecodeOptions,
) -> Result<DecodeResult> {
    if vocab.num_pieces() != params.config.vocab_size {
        return Err(Error::Config(format!(
            "vocabulary has {} pieces but the model expects {}",
            vocab.num_pieces(),
            params.config.vocab_size
        )));
    }
    let enc = params.encode(features)?;
    let mut pred_cache: Vec<Tensor> = Vec::new();
    let mut result = greedy_search(enc.rows(), options, |t, history| {
        while pred_cache.len() <= history.len() {
            let n = pred_cache.len();
            pred_cache.push(params.predict(&history[..n])?);
        }
        let f = Tensor::vector(enc.row(t).to_vec());
        let g = &pred_cache[history.len()];
        let s: Vec<Tensor> = Head::ALL
            .iter()
            .map(|&h| params.joint(&f, g, h))
            .collect::<Result<_>>()?;
        posterior(s[0].data(), s[1].data(), s[2].data())
    })?;
    result.text = render(&result.tokens, &result.cap_tags(), vocab)?;
    Ok(result)
}

/// One decoded utterance as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub id: String,
    pub text: String,
    pub events: Vec<PauseEvent>,
}
