use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{synthesize_features, Signatures};
use super::spec::CorpusSpec;
use crate::error::{Error, Result};
use crate::labelkit::{build_vocab, factorize, AnnotatedTranscript, LabelBundle, PauseKind, PauseMark, Vocab};
use crate::numerics::Tensor;

const FEATURE_SALT: u64 = 0x2545_f491_4f6c_dd1d;

pub const SPEC_FILE: &str = "corpus.toml";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    PairedTrain,
    UnpairedTrain,
    HeadEval,
    TailEval,
    PauseEval,
}

impl Split {
    pub const ALL: [Split; 5] = [
        Split::PairedTrain,
        Split::UnpairedTrain,
        Split::HeadEval,
        Split::TailEval,
        Split::PauseEval,
    ];
    pub const EVAL: [Split; 3] = [Split::HeadEval, Split::TailEval, Split::PauseEval];

    pub fn name(self) -> &'static str {
        match self {
            Split::PairedTrain => "paired_train",
            Split::UnpairedTrain => "unpaired_train",
            Split::HeadEval => "head_eval",
            Split::TailEval => "tail_eval",
            Split::PauseEval => "pause_eval",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.name())
    }

    fn code(self) -> u64 {
        self as u64
    }

    pub fn has_audio(self) -> bool {
        self != Split::UnpairedTrain
    }
}

/// One line of a split file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub cased_text: String,
    pub pause_marks: Vec<PauseMark>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedExample {
    pub id: String,
    pub transcript: AnnotatedTranscript,
    pub bundle: LabelBundle,
    pub features: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnpairedExample {
    pub id: String,
    pub transcript: AnnotatedTranscript,
    pub bundle: LabelBundle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub vocab: Vocab,
    pub paired_train: Vec<PairedExample>,
    pub unpaired_train: Vec<UnpairedExample>,
    pub head_eval: Vec<PairedExample>,
    pub tail_eval: Vec<PairedExample>,
    pub pause_eval: Vec<PairedExample>,
}

struct Sampler<'a> {
    spec: &'a CorpusSpec,
    rng: ChaCha8Rng,
}

impl Sampler<'_> {
    fn pick<'b>(&mut self, items: &'b [String]) -> &'b str {
        items.choose(&mut self.rng).expect("validated non-empty")
    }

    /// Fills one template; pause marks are word indices within the clause.
    fn clause(&mut self, templates: &[String], entities: &[String], hesitate: bool) -> (Vec<String>, Vec<usize>) {
        let template = self.pick(templates);
        let mut words: Vec<String> = Vec::new();
        let mut pauses = Vec::new();
        for slot in template.split_whitespace() {
            match slot {
                "{E}" => {
                    if hesitate && !words.is_empty() && self.rng.random_bool(self.spec.hesitation_prob) {
                        pauses.push(words.len() - 1);
                    }
                    words.extend(self.pick(entities).split_whitespace().map(str::to_string));
                }
                "{N}" => words.push(self.pick(&self.spec.nouns).to_string()),
                w => words.push(w.to_string()),
            }
        }
        (words, pauses)
    }

    /// Joins clauses with "and", optionally pausing before it, and closes with ⟨eos⟩.
    fn utterance(&mut self, clauses: Vec<(Vec<String>, Vec<usize>)>) -> AnnotatedTranscript {
        let mut words: Vec<String> = Vec::new();
        let mut marks = Vec::new();
        for (i, (clause, pauses)) in clauses.into_iter().enumerate() {
            if i > 0 {
                if self.rng.random_bool(self.spec.pause_prob) {
                    marks.push(PauseMark {
                        after_word: words.len() - 1,
                        kind: PauseKind::Pause,
                    });
                }
                words.push("and".into());
            }
            let offset = words.len();
            marks.extend(pauses.into_iter().map(|p| PauseMark {
                after_word: offset + p,
                kind: PauseKind::Pause,
            }));
            words.extend(clause);
        }
        marks.push(PauseMark {
            after_word: words.len() - 1,
            kind: PauseKind::Eos,
        });
        AnnotatedTranscript::new(words.join(" "), marks)
    }

    fn transcript(&mut self, split: Split) -> AnnotatedTranscript {
        let s = self.spec;
        match split {
            Split::PairedTrain | Split::HeadEval => {
                let mut clauses = vec![self.clause(&s.head_templates, &s.head_entities, true)];
                if self.rng.random_bool(s.continuation_prob) {
                    clauses.push(self.clause(&s.head_templates, &s.head_entities, true));
                }
                self.utterance(clauses)
            }
            Split::UnpairedTrain => {
                let (words, _) = if self.rng.random_bool(s.unpaired_tail_share) {
                    self.clause(&s.tail_templates, &s.tail_entities, false)
                } else {
                    self.clause(&s.head_templates, &s.head_entities, false)
                };
                AnnotatedTranscript::unpaired(words.join(" "))
            }
            Split::TailEval => {
                let clause = self.clause(&s.tail_templates, &s.tail_entities, false);
                self.utterance(vec![clause])
            }
            Split::PauseEval => {
                let clauses = (0..2)
                    .map(|_| {
                        if self.rng.random_bool(s.pause_eval_tail_share) {
                            self.clause(&s.tail_templates, &s.tail_entities, true)
                        } else {
                            self.clause(&s.head_templates, &s.head_entities, true)
                        }
                    })
                    .collect();
                self.utterance(clauses)
            }
        }
    }
}

fn split_size(spec: &CorpusSpec, split: Split) -> usize {
    match split {
        Split::PairedTrain => spec.sizes.paired_train,
        Split::UnpairedTrain => spec.sizes.unpaired_train,
        Split::HeadEval => spec.sizes.head_eval,
        Split::TailEval => spec.sizes.tail_eval,
        Split::PauseEval => spec.sizes.pause_eval,
    }
}

/// Cased transcripts of one split; each split draws from its own stream.
pub fn generate_transcripts(spec: &CorpusSpec, split: Split) -> Vec<AnnotatedTranscript> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(split.code());
    let mut sampler = Sampler { spec, rng };
    (0..split_size(spec, split))
        .map(|_| sampler.transcript(split))
        .collect()
}

fn utterance_id(split: Split, i: usize) -> String {
    format!("{}-{i:05}", split.name())
}

fn feature_rng(spec: &CorpusSpec, split: Split, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ FEATURE_SALT);
    rng.set_stream((split.code() << 32) | i as u64);
    rng
}

impl Corpus {
    /// Builds every split in memory. The vocabulary comes from the paired
    /// training transcripts.
    pub fn generate(spec: &CorpusSpec) -> Result<Self> {
        spec.validate()?;
        let mut texts: Vec<Vec<AnnotatedTranscript>> =
            Split::ALL.iter().map(|&s| generate_transcripts(spec, s)).collect();
        let paired_text: Vec<String> = texts[0].iter().map(|t| t.cased.to_lowercase()).collect();
        let vocab = build_vocab(&paired_text, spec.vocab_size)?;
        let signatures = Signatures::new(spec, vocab.num_pieces());
        let audio = |split: Split, ts: Vec<AnnotatedTranscript>| -> Result<Vec<PairedExample>> {
            ts.into_iter()
                .enumerate()
                .map(|(i, transcript)| {
                    let bundle = factorize(&transcript, &vocab)?;
                    let (features, _) =
                        synthesize_features(&bundle, spec, &signatures, &mut feature_rng(spec, split, i));
                    Ok(PairedExample {
                        id: utterance_id(split, i),
                        transcript,
                        bundle,
                        features,
                    })
                })
                .collect()
        };
        let pause_eval = audio(Split::PauseEval, texts.pop().expect("five splits"))?;
        let tail_eval = audio(Split::TailEval, texts.pop().expect("five splits"))?;
        let head_eval = audio(Split::HeadEval, texts.pop().expect("five splits"))?;
        let unpaired_train = texts
            .pop()
            .expect("five splits")
            .into_iter()
            .enumerate()
            .map(|(i, transcript)| {
                Ok(UnpairedExample {
                    id: utterance_id(Split::UnpairedTrain, i),
                    bundle: factorize(&transcript, &vocab)?,
                    transcript,
                })
            })
            .collect::<Result<_>>()?;
        let paired_train = audio(Split::PairedTrain, texts.pop().expect("five splits"))?;
        Ok(Self {
            spec: spec.clone(),
            vocab,
            paired_train,
            unpaired_train,
            head_eval,
            tail_eval,
            pause_eval,
        })
    }

    pub fn paired(&self, split: Split) -> Option<&[PairedExample]> {
        match split {
            Split::PairedTrain => Some(&self.paired_train),
            Split::UnpairedTrain => None,
            Split::HeadEval => Some(&self.head_eval),
            Split::TailEval => Some(&self.tail_eval),
            Split::PauseEval => Some(&self.pause_eval),
        }
    }

    pub fn len(&self, split: Split) -> usize {
        match self.paired(split) {
            Some(p) => p.len(),
            None => self.unpaired_train.len(),
        }
    }

    /// Lowercased capitalized words of the paired training transcripts.
    pub fn paired_entities(&self) -> BTreeSet<String> {
        capitalized_words(self.paired_train.iter().map(|e| e.transcript.cased.as_str()))
    }

    fn records(&self, split: Split) -> Vec<Record> {
        match self.paired(split) {
            Some(examples) => examples
                .iter()
                .map(|e| Record {
                    id: e.id.clone(),
                    cased_text: e.transcript.cased.clone(),
                    pause_marks: e.transcript.marks.clone(),
                    features: Some(e.features.clone()),
                })
                .collect(),
            None => self
                .unpaired_train
                .iter()
                .map(|e| Record {
                    id: e.id.clone(),
                    cased_text: e.transcript.cased.clone(),
                    pause_marks: e.transcript.marks.clone(),
                    features: None,
                })
                .collect(),
        }
    }

    /// Writes the spec, the vocabulary and one line-record file per split.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let spec_path = dir.join(SPEC_FILE);
        fs::write(&spec_path, self.spec.to_toml()).map_err(|e| Error::io(&spec_path, e))?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        for split in Split::ALL {
            write_records(&dir.join(split.file_name()), &self.records(split))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let spec = CorpusSpec::load(&dir.join(SPEC_FILE))?;
        let vocab = Vocab::load(&dir.join(VOCAB_FILE))?;
        let mut paired: Vec<Vec<PairedExample>> = Vec::new();
        let mut unpaired = Vec::new();
        for split in Split::ALL {
            let path = dir.join(split.file_name());
            let records = read_records(&path)?;
            if split.has_audio() {
                paired.push(
                    records
                        .into_iter()
                        .map(|r| paired_from_record(r, &vocab, &spec, &path))
                        .collect::<Result<_>>()?,
                );
            } else {
                unpaired = records
                    .into_iter()
                    .map(|r| {
                        if r.features.is_some() {
                            return Err(Error::load(
                                &path,
                                format!("{}: unpaired record carries features", r.id),
                            ));
                        }
                        let transcript = AnnotatedTranscript::new(r.cased_text, r.pause_marks);
                        let bundle =
                            factorize(&transcript, &vocab).map_err(|e| Error::load(&path, format!("{}: {e}", r.id)))?;
                        Ok(UnpairedExample {
                            id: r.id,
                            transcript,
                            bundle,
                        })
                    })
                    .collect::<Result<_>>()?;
            }
        }
        let mut paired = paired.into_iter();
        let mut next = || paired.next().expect("four audio splits");
        Ok(Self {
            paired_train: next(),
            head_eval: next(),
            tail_eval: next(),
            pause_eval: next(),
            unpaired_train: unpaired,
            spec,
            vocab,
        })
    }
}

fn paired_from_record(r: Record, vocab: &Vocab, spec: &CorpusSpec, path: &Path) -> Result<PairedExample> {
    let features = r
        .features
        .ok_or_else(|| Error::load(path, format!("{}: paired record without features", r.id)))?;
    let transcript = AnnotatedTranscript::new(r.cased_text, r.pause_marks);
    let bundle = factorize(&transcript, vocab).map_err(|e| Error::load(path, format!("{}: {e}", r.id)))?;
    if features.shape().len() != 2 || features.cols() != spec.feature_dim {
        return Err(Error::load(
            path,
            format!(
                "{}: features of shape {:?}, expected T×{}",
                r.id,
                features.shape(),
                spec.feature_dim
            ),
        ));
    }
    if features.rows() < bundle.len() + 1 {
        return Err(Error::load(
            path,
            format!(
                "{}: {} frames cannot carry {} tokens",
                r.id,
                features.rows(),
                bundle.len()
            ),
        ));
    }
    Ok(PairedExample {
        id: r.id,
        transcript,
        bundle,
        features,
    })
}

pub fn capitalized_words<'a>(texts: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
    texts
        .into_iter()
        .flat_map(str::split_whitespace)
        .filter(|w| w.chars().next().is_some_and(char::is_uppercase))
        .map(str::to_lowercase)
        .collect()
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::load(path, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::load(path, format!("line {}: {e}", n + 1))))
        .collect()
}

/// Generates the corpus and writes it under `dir`.
pub fn generate_corpus(spec: &CorpusSpec, dir: &Path) -> Result<Corpus> {
    let corpus = Corpus::generate(spec)?;
    corpus.save(dir)?;
    Ok(corpus)
}

pub fn split_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(split.file_name())
}
