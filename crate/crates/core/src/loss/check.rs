use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objective::{objective, JeitWeights};
use crate::error::Result;
use crate::labelkit::{CapTag, LabelBundle, PauseTag};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::{grad_check_coords, GradCheckReport, Tensor};

/// Vocabulary size of the toy model used by [`jeit_grad_check`].
pub const GRAD_CHECK_VOCAB: usize = 16;
/// Frames of the toy utterance.
pub const GRAD_CHECK_FRAMES: usize = 3;
/// Labels of the toy utterance and the toy text.
pub const GRAD_CHECK_LABELS: usize = 2;

fn random_bundle(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> LabelBundle {
    let asr = (0..len).map(|_| rng.random_range(1..=vocab)).collect();
    let cap = (0..len)
        .map(|_| {
            if rng.random_bool(0.5) {
                CapTag::Cap
            } else {
                CapTag::NonCap
            }
        })
        .collect();
    let mut pause: Vec<PauseTag> = (0..len)
        .map(|_| {
            if rng.random_bool(0.5) {
                PauseTag::Pause
            } else {
                PauseTag::NonPause
            }
        })
        .collect();
    if let Some(last) = pause.last_mut() {
        *last = PauseTag::Eos;
    }
    LabelBundle {
        transcript: String::new(),
        asr,
        cap,
        pause,
    }
}

/// Finite-difference check of the full JEIT objective, over every parameter of
/// a toy model, with one paired utterance and one text-only utterance.
pub fn jeit_grad_check(seed: u64) -> Result<GradCheckReport> {
    let mut config = ModelConfig::new(GRAD_CHECK_VOCAB, 3);
    config.encoder_width = 4;
    config.encoder_dim = 3;
    config.embed_dim = 3;
    config.pred_dim = 3;
    config.joint_dim = 4;
    let params = ModelParams::init(&config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = Tensor::matrix(
        GRAD_CHECK_FRAMES,
        config.feature_dim,
        (0..GRAD_CHECK_FRAMES * config.feature_dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )?;
    let paired = random_bundle(&mut rng, GRAD_CHECK_VOCAB, GRAD_CHECK_LABELS);
    let text = random_bundle(&mut rng, GRAD_CHECK_VOCAB, GRAD_CHECK_LABELS);
    let weights = JeitWeights::default();
    let f = |q: &ModelParams| {
        let v = objective(q, &[(&features, &paired)], Some(&[&text]), &weights)?;
        Ok((v.report.total, v.grads))
    };
    grad_check_coords(f, &params, 1e-5, seed, usize::MAX)
}
