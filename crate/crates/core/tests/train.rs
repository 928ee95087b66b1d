use std::fs;

use jeit::data::{Corpus, CorpusSpec, SplitSizes};
use jeit::decode::greedy_decode;
use jeit::labelkit::LabelBundle;
use jeit::model::ModelParams;
use jeit::numerics::Tensor;
use jeit::train::{
    init_params, run_experiment, train, train_step, Regime, RunReport, Sgd, TrainConfig, CHECKPOINT_FILE, LOG_FILE,
    REPORT_FILE,
};
use jeit::Error;

fn corpus(paired: usize) -> Corpus {
    let spec = CorpusSpec {
        sizes: SplitSizes {
            paired_train: paired,
            unpaired_train: 60,
            head_eval: 12,
            tail_eval: 12,
            pause_eval: 12,
        },
        ..CorpusSpec::default()
    };
    Corpus::generate(&spec).unwrap()
}

fn config(regime: Regime, steps: usize) -> TrainConfig {
    TrainConfig {
        regime,
        steps,
        paired_batch: 4,
        unpaired_batch: 4,
        ..TrainConfig::default()
    }
}

fn batch(c: &Corpus, n: usize) -> (Vec<(&Tensor, &LabelBundle)>, Vec<&LabelBundle>) {
    let paired = c.paired_train[..n].iter().map(|e| (&e.features, &e.bundle)).collect();
    let text = c.unpaired_train[..n].iter().map(|e| &e.bundle).collect();
    (paired, text)
}

#[test]
fn fixed_batch_loss_falls() {
    let c = corpus(40);
    let cfg = config(Regime::Jeit, 50);
    let (paired, text) = batch(&c, 4);
    let mut params = init_params(&c, &cfg).unwrap();
    let mut opt = Sgd::new(&params, cfg.learning_rate, cfg.momentum, cfg.clip_norm);
    let mut totals = Vec::new();
    for _ in 0..50 {
        totals.push(
            train_step(&mut params, &mut opt, &paired, Some(&text), &cfg)
                .unwrap()
                .report
                .total,
        );
    }
    assert!(totals[49] < 0.5 * totals[0], "{} -> {}", totals[0], totals[49]);
}

#[test]
fn zero_beta_jeit_step_matches_paired_only() {
    let c = corpus(40);
    let base = config(Regime::PairedOnly, 1);
    let mut jeit = config(Regime::Jeit, 1);
    jeit.weights.beta = 0.0;
    let (paired, text) = batch(&c, 4);
    let mut a = init_params(&c, &base).unwrap();
    let mut b = a.clone();
    let mut opt_a = Sgd::new(&a, base.learning_rate, base.momentum, base.clip_norm);
    let mut opt_b = Sgd::new(&b, jeit.learning_rate, jeit.momentum, jeit.clip_norm);
    for _ in 0..3 {
        let ra = train_step(&mut a, &mut opt_a, &paired, None, &base).unwrap();
        let rb = train_step(&mut b, &mut opt_b, &paired, Some(&text), &jeit).unwrap();
        assert_eq!(ra.report.total.to_bits(), rb.report.total.to_bits());
    }
    assert_eq!(a, b);
}

#[test]
fn zero_clip_leaves_params_unchanged() {
    let c = corpus(40);
    let cfg = TrainConfig {
        clip_norm: 0.0,
        ..config(Regime::Jeit, 1)
    };
    let (paired, text) = batch(&c, 4);
    let before = init_params(&c, &cfg).unwrap();
    let mut params = before.clone();
    let mut opt = Sgd::new(&params, cfg.learning_rate, cfg.momentum, cfg.clip_norm);
    let out = train_step(&mut params, &mut opt, &paired, Some(&text), &cfg).unwrap();
    assert!(out.grad_norm > 0.0);
    assert_eq!(params, before);
}

#[test]
fn regime_and_batch_must_agree() {
    let c = corpus(40);
    let (paired, text) = batch(&c, 2);
    for (regime, unpaired) in [(Regime::Jeit, None), (Regime::PairedOnly, Some(text.as_slice()))] {
        let cfg = config(regime, 1);
        let mut params = init_params(&c, &cfg).unwrap();
        let mut opt = Sgd::new(&params, cfg.learning_rate, cfg.momentum, cfg.clip_norm);
        let r = train_step(&mut params, &mut opt, &paired, unpaired, &cfg);
        assert!(matches!(r, Err(Error::Contract(_))), "{regime:?}");
    }
}

#[test]
fn initialization_ignores_regime() {
    let c = corpus(40);
    let a = init_params(&c, &config(Regime::PairedOnly, 0)).unwrap();
    let b = init_params(&c, &config(Regime::Jeit, 0)).unwrap();
    assert_eq!(a, b);
    let other = init_params(
        &c,
        &TrainConfig {
            seed: 2,
            ..config(Regime::Jeit, 0)
        },
    )
    .unwrap();
    assert_ne!(a, other);
}

#[test]
fn log_lines_recombine() {
    let c = corpus(40);
    for regime in [Regime::PairedOnly, Regime::Jeit] {
        let out = train(&c, &config(regime, 8), |_, _| Ok(())).unwrap();
        assert_eq!(out.log.len(), 8);
        for line in &out.log {
            assert!((line.recombine() - line.total).abs() < 1e-12);
            if regime == Regime::PairedOnly {
                assert_eq!(line.weights.beta, 0.0);
                assert_eq!(line.ilm.asr, 0.0);
            }
        }
    }
}

#[test]
fn zero_steps_still_evaluates_and_writes() {
    let c = corpus(20);
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&c, &config(Regime::Jeit, 0), Some(dir.path())).unwrap();
    assert!(r.log.is_empty() && r.report.final_loss.is_none());
    assert_eq!(fs::read_to_string(dir.path().join(LOG_FILE)).unwrap(), "");
    let loaded = RunReport::load(&dir.path().join(REPORT_FILE)).unwrap();
    assert_eq!(loaded, r.report);
    let params = ModelParams::load(&dir.path().join(CHECKPOINT_FILE), None).unwrap();
    assert_eq!(params, init_params(&c, &config(Regime::Jeit, 0)).unwrap());
}

#[test]
fn runs_are_reproducible() {
    let c = corpus(30);
    let cfg = TrainConfig {
        checkpoint_interval: 3,
        ..config(Regime::Jeit, 6)
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&c, &cfg, Some(a.path())).unwrap();
    run_experiment(&c, &cfg, Some(b.path())).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n == "checkpoint-000003.json"));
    assert!(names.iter().any(|n| n == "checkpoint-000006.json"));
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn invalid_config_is_rejected() {
    let c = corpus(20);
    for cfg in [
        TrainConfig {
            learning_rate: -1.0,
            ..config(Regime::Jeit, 1)
        },
        TrainConfig {
            paired_batch: 0,
            ..config(Regime::Jeit, 1)
        },
    ] {
        assert!(matches!(train(&c, &cfg, |_, _| Ok(())), Err(Error::Config(_))));
    }
}

#[test]
fn trained_model_reproduces_training_bundles() {
    let c = Corpus::generate(&CorpusSpec::default()).unwrap();
    let cfg = TrainConfig {
        regime: Regime::PairedOnly,
        ..TrainConfig::default()
    };
    let out = train(&c, &cfg, |_, _| Ok(())).unwrap();
    let hits = c.paired_train[..50]
        .iter()
        .filter(|e| {
            let d = greedy_decode(&e.features, &out.params, &c.vocab, &cfg.decode).unwrap();
            d.tokens == e.bundle.asr && d.cap_tags() == e.bundle.cap && d.pause == e.bundle.pause
        })
        .count();
    assert!(hits >= 45, "{hits} of 50 reproduced");
}
