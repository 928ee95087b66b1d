use std::fs;

use jeit::data::{capitalized_words, generate_corpus, Corpus, CorpusSpec, Split, SplitSizes};
use jeit::labelkit::PauseTag;
use jeit::Error;

fn small_spec() -> CorpusSpec {
    CorpusSpec {
        sizes: SplitSizes {
            paired_train: 300,
            unpaired_train: 200,
            head_eval: 40,
            tail_eval: 40,
            pause_eval: 40,
        },
        ..CorpusSpec::default()
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_corpus(&small_spec(), a.path()).unwrap();
    generate_corpus(&small_spec(), b.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name:?} differs");
    }
}

#[test]
fn load_round_trips_generation() {
    let dir = tempfile::tempdir().unwrap();
    let generated = generate_corpus(&small_spec(), dir.path()).unwrap();
    let loaded = Corpus::load(dir.path()).unwrap();
    assert_eq!(generated, loaded);
}

#[test]
fn tail_entities_stay_out_of_paired_audio() {
    let c = Corpus::generate(&small_spec()).unwrap();
    let paired = c.paired_entities();
    let tail: Vec<String> = c
        .spec
        .tail_entities
        .iter()
        .flat_map(|e| e.split_whitespace())
        .map(str::to_lowercase)
        .collect();
    assert!(paired.iter().all(|e| !tail.contains(e)));
    for e in &c.tail_eval {
        let caps = capitalized_words([e.transcript.cased.as_str()]);
        assert!(
            caps.iter().any(|w| tail.contains(w) && !paired.contains(w)),
            "{}",
            e.transcript.cased
        );
    }
    let unpaired_tail = c
        .unpaired_train
        .iter()
        .filter(|u| {
            capitalized_words([u.transcript.cased.as_str()])
                .iter()
                .any(|w| tail.contains(w))
        })
        .count();
    assert!(unpaired_tail * 2 > c.unpaired_train.len());
}

#[test]
fn unpaired_pause_channel_is_eos_appended() {
    let c = Corpus::generate(&small_spec()).unwrap();
    for u in &c.unpaired_train {
        let (last, rest) = u.bundle.pause.split_last().unwrap();
        assert_eq!(*last, PauseTag::Eos);
        assert!(rest.iter().all(|&t| t == PauseTag::NonPause));
    }
}

#[test]
fn every_utterance_fits_its_lattice() {
    let c = Corpus::generate(&small_spec()).unwrap();
    for split in Split::EVAL.iter().chain([&Split::PairedTrain]) {
        for e in c.paired(*split).unwrap() {
            assert!(e.features.rows() > e.bundle.len(), "{}", e.id);
            assert_eq!(e.features.cols(), c.spec.feature_dim);
        }
    }
    assert!(c.paired_train.iter().any(|e| e.bundle.pause.contains(&PauseTag::Pause)));
}

#[test]
fn every_eval_piece_occurs_in_paired_audio() {
    let c = Corpus::generate(&CorpusSpec::default()).unwrap();
    let seen: std::collections::BTreeSet<usize> = c
        .paired_train
        .iter()
        .flat_map(|e| e.bundle.asr.iter().copied())
        .collect();
    for e in c.tail_eval.iter().chain(&c.head_eval).chain(&c.pause_eval) {
        assert!(
            e.bundle.asr.iter().all(|id| seen.contains(id)),
            "{}",
            e.transcript.cased
        );
    }
}

#[test]
fn missing_split_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    generate_corpus(&small_spec(), dir.path()).unwrap();
    let gone = dir.path().join(Split::TailEval.file_name());
    fs::remove_file(&gone).unwrap();
    match Corpus::load(dir.path()) {
        Err(Error::Io { path, .. }) => assert_eq!(path, gone),
        other => panic!("expected io error, got {other:?}"),
    }
}

#[test]
fn spec_validation() {
    let mut s = small_spec();
    s.tail_entities.push(s.head_entities[0].clone());
    assert!(matches!(Corpus::generate(&s), Err(Error::Config(_))));
    let mut s = small_spec();
    s.pause_prob = 1.5;
    assert!(s.validate().is_err());
    let text = small_spec().to_toml();
    assert_eq!(CorpusSpec::from_toml(&text).unwrap(), small_spec());
    assert!(CorpusSpec::from_toml(&format!("{text}\nbogus = 1\n")).is_err());
}

#[test]
fn different_seeds_differ() {
    let a = Corpus::generate(&small_spec()).unwrap();
    let b = Corpus::generate(&CorpusSpec {
        seed: 99,
        ..small_spec()
    })
    .unwrap();
    assert_ne!(a.paired_train[0].features, b.paired_train[0].features);
}
