//! Transducer lattice losses, internal-LM losses and the combined objective.

mod check;
mod lattice;
mod objective;

pub use check::{jeit_grad_check, GRAD_CHECK_FRAMES, GRAD_CHECK_LABELS, GRAD_CHECK_VOCAB};

pub use lattice::{brute_force_nll, forward_lattice, oracle_check, rnnt_nll, Lattice, LatticeFn, OracleReport};
pub use objective::{
    e2e_graph, e2e_losses, ilm_graph, ilm_losses, ilm_nll_sums, jeit_total, objective, objective_graph, JeitWeights,
    LossReport, ObjectiveValue, ObjectiveVars, TaskLosses,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelkit::{CapTag, LabelBundle, PauseTag};
    use crate::model::{posterior, Head, ModelConfig, ModelParams};
    use crate::numerics::{grad_check, ParamSet, Tensor};

    fn tiny(vocab: usize) -> ModelConfig {
        let mut c = ModelConfig::new(vocab, 3);
        c.encoder_width = 4;
        c.encoder_dim = 3;
        c.embed_dim = 3;
        c.pred_dim = 3;
        c.joint_dim = 4;
        c
    }

    fn bundle(asr: &[usize], cap: &[CapTag], pause: &[PauseTag]) -> LabelBundle {
        LabelBundle {
            transcript: String::new(),
            asr: asr.to_vec(),
            cap: cap.to_vec(),
            pause: pause.to_vec(),
        }
    }

    fn example() -> LabelBundle {
        bundle(
            &[3, 1],
            &[CapTag::Cap, CapTag::NonCap],
            &[PauseTag::Pause, PauseTag::Eos],
        )
    }

    fn features(t: usize, f: usize, phase: f64) -> Tensor {
        Tensor::matrix(t, f, (0..t * f).map(|i| (i as f64 * 1.3 + phase).cos()).collect()).unwrap()
    }

    /// Posterior rows recomputed through the direct forward pass.
    fn direct_posteriors(p: &ModelParams, x: &Tensor, b: &LabelBundle) -> [Vec<Vec<f64>>; 3] {
        let enc = p.encode(x).unwrap();
        let mut out: [Vec<Vec<f64>>; 3] = Default::default();
        for t in 0..x.rows() {
            let f = Tensor::vector(enc.row(t).to_vec());
            for u in 0..=b.len() {
                let g = p.predict(&b.asr[..u]).unwrap();
                let s: Vec<Tensor> = Head::ALL.iter().map(|&h| p.joint(&f, &g, h).unwrap()).collect();
                let post = posterior(s[0].data(), s[1].data(), s[2].data()).unwrap();
                out[0].push(post.asr);
                out[1].push(post.cap);
                out[2].push(post.pause);
            }
        }
        out
    }

    #[test]
    fn tape_losses_match_lattice_over_posteriors() {
        let p = ModelParams::init(&tiny(5), 3).unwrap();
        let x = features(4, 3, 0.2);
        let b = example();
        let l = e2e_losses(&p, &[(&x, &b)]).unwrap();
        let [asr, cap, pause] = direct_posteriors(&p, &x, &b);
        let cap_labels: Vec<usize> = b.cap.iter().map(|c| c.index() + 1).collect();
        let pause_labels: Vec<usize> = b.pause.iter().map(|t| t.index() + 1).collect();
        assert!((l.asr - rnnt_nll(&asr, &b.asr, 4).unwrap()).abs() < 1e-10);
        assert!((l.cap - rnnt_nll(&cap, &cap_labels, 4).unwrap()).abs() < 1e-10);
        assert!((l.pause - rnnt_nll(&pause, &pause_labels, 4).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn empty_label_sequence_is_blank_only() {
        let p = ModelParams::init(&tiny(5), 4).unwrap();
        let x = features(3, 3, 0.0);
        let b = bundle(&[], &[], &[]);
        let l = e2e_losses(&p, &[(&x, &b)]).unwrap();
        let [asr, _, pause] = direct_posteriors(&p, &x, &b);
        let blank_only = |rows: &[Vec<f64>]| -rows.iter().map(|r| r[0].ln()).sum::<f64>();
        assert!((l.asr - blank_only(&asr)).abs() < 1e-10);
        assert!((l.cap - l.asr).abs() < 1e-12);
        assert!((l.pause - blank_only(&pause)).abs() < 1e-10);
    }

    #[test]
    fn saturated_cap_head_follows_blank_mass() {
        let mut p = ModelParams::init(&tiny(5), 5).unwrap();
        let cap = &mut p.heads[Head::Cap.index()];
        cap.out = Tensor::zeros(cap.out.shape());
        cap.out_bias = Tensor::vector(vec![-800.0, 800.0]);
        let x = features(3, 3, 0.4);
        let b = bundle(&[2, 4], &[CapTag::NonCap; 2], &[PauseTag::NonPause, PauseTag::Eos]);
        let l = e2e_losses(&p, &[(&x, &b)]).unwrap();
        let [asr, _, _] = direct_posteriors(&p, &x, &b);
        let two_way: Vec<Vec<f64>> = asr.iter().map(|r| vec![r[0], 1.0 - r[0]]).collect();
        assert!((l.cap - rnnt_nll(&two_way, &[1, 1], 3).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn duplicated_batch_keeps_mean() {
        let p = ModelParams::init(&tiny(5), 6).unwrap();
        let x = features(3, 3, 0.1);
        let b = example();
        let one = e2e_losses(&p, &[(&x, &b)]).unwrap();
        let two = e2e_losses(&p, &[(&x, &b), (&x, &b)]).unwrap();
        assert!((one.asr - two.asr).abs() < 1e-12);
        assert!((one.cap - two.cap).abs() < 1e-12);
        assert!((one.pause - two.pause).abs() < 1e-12);
    }

    #[test]
    fn zero_model_ilm_is_uniform() {
        let v = 7;
        let p = ModelParams::zeros(&tiny(v)).unwrap();
        let b = bundle(
            &[1, 5, 2],
            &[CapTag::Cap, CapTag::NonCap, CapTag::NonCap],
            &[PauseTag::NonPause; 3],
        );
        let (sums, tokens) = ilm_nll_sums(&p, &[&b]).unwrap();
        assert_eq!(tokens, 3);
        assert!((sums.asr - 3.0 * (v as f64).ln()).abs() < 1e-12);
        assert!((sums.pause - 3.0 * 3f64.ln()).abs() < 1e-12);
        assert!((sums.cap - 3.0 * 2f64.ln()).abs() < 1e-12);
        let mean = ilm_losses(&p, &[&b]).unwrap();
        assert!((mean.asr - (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_ilm_bundle_contributes_nothing() {
        let p = ModelParams::init(&tiny(4), 1).unwrap();
        let e = bundle(&[], &[], &[]);
        assert_eq!(ilm_losses(&p, &[&e]).unwrap(), TaskLosses::default());
        let b = bundle(&[2], &[CapTag::Cap], &[PauseTag::Eos]);
        assert_eq!(ilm_losses(&p, &[&b, &e]).unwrap(), ilm_losses(&p, &[&b]).unwrap());
    }

    #[test]
    fn combination_examples() {
        let ones = TaskLosses {
            asr: 1.0,
            cap: 1.0,
            pause: 1.0,
        };
        let r = jeit_total(ones, ones, JeitWeights::default()).unwrap();
        assert!((r.total - 1.68).abs() < 1e-12);
        assert!((r.jeit.asr - 1.2).abs() < 1e-12);
        let e2e = TaskLosses {
            asr: 2.0,
            cap: 3.0,
            pause: 5.0,
        };
        let no_ilm = JeitWeights {
            beta: 0.0,
            ..JeitWeights::default()
        };
        let r = jeit_total(e2e, ones, no_ilm).unwrap();
        assert!((r.total - (2.0 + 0.1 * 3.0 + 0.3 * 5.0)).abs() < 1e-12);
        assert!(jeit_total(
            e2e,
            ones,
            JeitWeights {
                alpha_cap: -0.1,
                ..JeitWeights::default()
            }
        )
        .is_err());
    }

    #[test]
    fn total_grows_with_beta() {
        let e2e = TaskLosses {
            asr: 2.0,
            cap: 0.5,
            pause: 0.7,
        };
        let ilm = TaskLosses {
            asr: 0.3,
            cap: 0.2,
            pause: 0.1,
        };
        let mut prev = f64::NEG_INFINITY;
        for beta in [0.0, 0.1, 0.2, 0.5, 1.0] {
            let t = jeit_total(
                e2e,
                ilm,
                JeitWeights {
                    beta,
                    ..JeitWeights::default()
                },
            )
            .unwrap()
            .total;
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn objective_total_matches_components() {
        let p = ModelParams::init(&tiny(5), 8).unwrap();
        let x = features(4, 3, 0.3);
        let b = example();
        let u = bundle(
            &[4, 2, 5],
            &[CapTag::NonCap, CapTag::Cap, CapTag::NonCap],
            &[PauseTag::NonPause, PauseTag::NonPause, PauseTag::Eos],
        );
        let v = objective(&p, &[(&x, &b)], Some(&[&u]), &JeitWeights::default()).unwrap();
        assert!((v.report.total - v.report.recombine()).abs() < 1e-12);
        let close = |a: TaskLosses, b: TaskLosses| {
            (a.asr - b.asr).abs() < 1e-12 && (a.cap - b.cap).abs() < 1e-12 && (a.pause - b.pause).abs() < 1e-12
        };
        assert!(close(v.report.e2e, e2e_losses(&p, &[(&x, &b)]).unwrap()));
        assert!(close(v.report.ilm, ilm_losses(&p, &[&u]).unwrap()));
    }

    #[test]
    fn ilm_ignores_paired_audio() {
        let p = ModelParams::init(&tiny(5), 9).unwrap();
        let b = example();
        let u = bundle(
            &[1, 3],
            &[CapTag::Cap, CapTag::Cap],
            &[PauseTag::NonPause, PauseTag::Eos],
        );
        let w = JeitWeights::default();
        let a = objective(&p, &[(&features(3, 3, 0.0), &b)], Some(&[&u]), &w).unwrap();
        let c = objective(&p, &[(&features(5, 3, 2.0), &b)], Some(&[&u]), &w).unwrap();
        assert_eq!(a.report.ilm, c.report.ilm);
    }

    #[test]
    fn shared_blank_coupling() {
        let p = ModelParams::init(&tiny(5), 10).unwrap();
        let x = features(3, 3, 0.5);
        let b = example();
        let base = e2e_losses(&p, &[(&x, &b)]).unwrap();

        let mut cap_only = p.clone();
        cap_only.heads[Head::Cap.index()].out_bias = Tensor::vector(vec![0.7, -0.4]);
        let l = e2e_losses(&cap_only, &[(&x, &b)]).unwrap();
        assert_eq!(l.asr, base.asr);
        assert_ne!(l.cap, base.cap);

        let mut blank = p.clone();
        let mut bias = blank.heads[Head::Asr.index()].out_bias.clone();
        bias.data_mut()[0] += 0.5;
        blank.heads[Head::Asr.index()].out_bias = bias;
        let l = e2e_losses(&blank, &[(&x, &b)]).unwrap();
        assert!((l.asr - base.asr).abs() > 1e-6);
        assert!((l.cap - base.cap).abs() > 1e-6);
        assert_eq!(l.pause, base.pause);
    }

    #[test]
    fn jeit_gradient_matches_finite_differences() {
        let p = ModelParams::init(&tiny(16), 12).unwrap();
        let x = features(3, 3, 0.9);
        let b = bundle(
            &[7, 12],
            &[CapTag::Cap, CapTag::NonCap],
            &[PauseTag::Pause, PauseTag::Eos],
        );
        let u = bundle(
            &[3, 16],
            &[CapTag::NonCap, CapTag::Cap],
            &[PauseTag::NonPause, PauseTag::Eos],
        );
        let w = JeitWeights::default();
        let f = |q: &ModelParams| {
            let v = objective(q, &[(&x, &b)], Some(&[&u]), &w)?;
            Ok((v.report.total, v.grads))
        };
        let r = grad_check(f, &p, 1e-5, 2).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert_eq!(f(&p).unwrap().1.len(), p.tensors().len());
    }

    #[test]
    fn seeded_toy_grad_check_passes() {
        for seed in 0..3 {
            let r = jeit_grad_check(seed).unwrap();
            assert_eq!(
                r.checked,
                ModelParams::init(&tiny(GRAD_CHECK_VOCAB), 0).unwrap().num_values()
            );
            assert!(r.max_rel_error < 1e-4, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn zero_beta_gradient_equals_paired_only() {
        let p = ModelParams::init(&tiny(5), 13).unwrap();
        let x = features(3, 3, 0.9);
        let b = example();
        let u = bundle(&[2], &[CapTag::Cap], &[PauseTag::Eos]);
        let w0 = JeitWeights {
            beta: 0.0,
            ..JeitWeights::default()
        };
        let a = objective(&p, &[(&x, &b)], Some(&[&u]), &w0).unwrap();
        let c = objective(&p, &[(&x, &b)], None, &JeitWeights::default()).unwrap();
        assert_eq!(a.report.total.to_bits(), c.report.total.to_bits());
        assert_eq!(a.grads, c.grads);
    }
}
