use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::spec::CorpusSpec;
use crate::labelkit::{LabelBundle, PauseTag};
use crate::numerics::Tensor;

const SIGNATURE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Fixed acoustic signature per wordpiece id; the last channel marks onsets
/// and is zero in every signature.
#[derive(Clone, Debug, PartialEq)]
pub struct Signatures {
    dim: usize,
    table: Vec<Vec<f64>>,
}

impl Signatures {
    pub fn new(spec: &CorpusSpec, vocab_size: usize) -> Self {
        let dim = spec.feature_dim;
        let table = (0..=vocab_size)
            .map(|id| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ SIGNATURE_SALT);
                rng.set_stream(id as u64);
                let mut v: Vec<f64> = (0..dim - 1).map(|_| StandardNormal.sample(&mut rng)).collect();
                v.push(0.0);
                v
            })
            .collect();
        Self { dim, table }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, id: usize) -> &[f64] {
        &self.table[id]
    }
}

/// Frame counts behind one synthesized utterance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameLayout {
    pub piece_frames: Vec<usize>,
    pub silence_frames: usize,
}

impl FrameLayout {
    pub fn total(&self) -> usize {
        self.piece_frames.iter().sum::<usize>() + self.silence_frames
    }
}

/// Renders a label bundle as `T × F` frames.
///
/// Every piece repeats its signature for `k` frames, with the onset channel
/// set on the first. ⟨pause⟩ inserts silence after its piece, ⟨eos⟩ appends
/// trailing silence, and at least one trailing silent frame always closes
/// the utterance. Gaussian noise of amplitude `spec.noise` is added last.
pub fn synthesize_features(
    bundle: &LabelBundle,
    spec: &CorpusSpec,
    signatures: &Signatures,
    rng: &mut ChaCha8Rng,
) -> (Tensor, FrameLayout) {
    let dim = signatures.dim();
    let mut frames: Vec<f64> = Vec::new();
    let mut layout = FrameLayout {
        piece_frames: Vec::with_capacity(bundle.len()),
        silence_frames: 0,
    };
    let silence = |frames: &mut Vec<f64>, n: usize, layout: &mut FrameLayout| {
        frames.extend(std::iter::repeat_n(0.0, n * dim));
        layout.silence_frames += n;
    };
    let mut trailing = 0;
    for (&id, &tag) in bundle.asr.iter().zip(&bundle.pause) {
        let k = rng.random_range(spec.frames_per_piece.min..=spec.frames_per_piece.max);
        for f in 0..k {
            frames.extend_from_slice(signatures.get(id));
            if f == 0 {
                *frames.last_mut().expect("non-empty frame") = 1.0;
            }
        }
        layout.piece_frames.push(k);
        let gap = match tag {
            PauseTag::NonPause => 0,
            PauseTag::Pause => rng.random_range(spec.pause_frames.min..=spec.pause_frames.max),
            PauseTag::Eos => rng.random_range(spec.eos_frames.min..=spec.eos_frames.max),
        };
        silence(&mut frames, gap, &mut layout);
        trailing = gap;
    }
    if trailing == 0 {
        silence(&mut frames, 1, &mut layout);
    }
    if spec.noise > 0.0 {
        for v in &mut frames {
            let z: f64 = StandardNormal.sample(rng);
            *v += spec.noise * z;
        }
    }
    let t = layout.total();
    (Tensor::matrix(t, dim, frames).expect("frame accounting"), layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelkit::CapTag;

    fn bundle(asr: &[usize], pause: &[PauseTag]) -> LabelBundle {
        LabelBundle {
            transcript: String::new(),
            asr: asr.to_vec(),
            cap: vec![CapTag::NonCap; asr.len()],
            pause: pause.to_vec(),
        }
    }

    fn quiet() -> CorpusSpec {
        CorpusSpec {
            noise: 0.0,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn frame_accounting_and_silence() {
        let spec = quiet();
        let sig = Signatures::new(&spec, 5);
        let b = bundle(&[1, 2, 3], &[PauseTag::Pause, PauseTag::NonPause, PauseTag::Eos]);
        let (x, layout) = synthesize_features(&b, &spec, &sig, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(x.rows(), layout.total());
        assert!(x.rows() > b.len());
        let k0 = layout.piece_frames[0];
        // The gap after the first piece is silent.
        assert!(x.row(k0).iter().all(|&v| v == 0.0));
        assert_eq!(x.row(0)[spec.feature_dim - 1], 1.0);
        assert_eq!(x.row(1)[spec.feature_dim - 1], 0.0);
        assert_eq!(&x.row(1)[..spec.feature_dim - 1], &sig.get(1)[..spec.feature_dim - 1]);
        assert!(x.row(x.rows() - 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noiseless_features_repeat() {
        let spec = quiet();
        let sig = Signatures::new(&spec, 5);
        let b = bundle(&[4, 2], &[PauseTag::NonPause, PauseTag::Eos]);
        let a = synthesize_features(&b, &spec, &sig, &mut ChaCha8Rng::seed_from_u64(9));
        let c = synthesize_features(&b, &spec, &sig, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, c);
    }

    #[test]
    fn empty_bundle_is_one_silent_frame() {
        let spec = quiet();
        let sig = Signatures::new(&spec, 3);
        let (x, _) = synthesize_features(&bundle(&[], &[]), &spec, &sig, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(x.rows(), 1);
    }

    #[test]
    fn missing_eos_still_gets_a_trailing_frame() {
        let spec = quiet();
        let sig = Signatures::new(&spec, 3);
        let b = bundle(&[1], &[PauseTag::NonPause]);
        let (x, layout) = synthesize_features(&b, &spec, &sig, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(layout.silence_frames, 1);
        assert!(x.row(x.rows() - 1).iter().all(|&v| v == 0.0));
    }
}
