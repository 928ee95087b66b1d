use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Regime, TrainConfig};
use super::optim::Sgd;
use crate::data::{Batcher, Corpus, PairedExample, Split};
use crate::decode::{greedy_decode, DecodeRecord};
use crate::error::{Error, Result};
use crate::labelkit::{LabelBundle, PauseKind, PauseTag};
use crate::loss::{objective, JeitWeights, LossReport, TaskLosses};
use crate::metrics::{evaluate, EvalItem, EvalSummary};
use crate::model::ModelParams;
use crate::numerics::Tensor;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const REPORT_FILE: &str = "report.json";

/// One training-log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub step: usize,
    pub e2e: TaskLosses,
    pub ilm: TaskLosses,
    pub weights: JeitWeights,
    pub total: f64,
    pub grad_norm: f64,
}

impl LogLine {
    fn new(step: usize, report: &LossReport, grad_norm: f64) -> Self {
        Self {
            step,
            e2e: report.e2e,
            ilm: report.ilm,
            weights: report.weights,
            total: report.total,
            grad_norm,
        }
    }

    /// The total rebuilt from the six logged components.
    pub fn recombine(&self) -> f64 {
        let w = &self.weights;
        self.e2e.asr
            + w.beta * self.ilm.asr
            + w.alpha_cap * (self.e2e.cap + w.beta * self.ilm.cap)
            + w.alpha_pause * (self.e2e.pause + w.beta * self.ilm.pause)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub report: LossReport,
    pub grad_norm: f64,
}

/// One optimizer update on a paired batch and, in the JEIT regime, a
/// text-only batch.
pub fn train_step(
    params: &mut ModelParams,
    optimizer: &mut Sgd,
    paired: &[(&Tensor, &LabelBundle)],
    unpaired: Option<&[&LabelBundle]>,
    config: &TrainConfig,
) -> Result<StepOutcome> {
    match (config.regime, unpaired.is_some()) {
        (Regime::Jeit, false) => return Err(Error::Contract("the jeit regime needs an unpaired batch".into())),
        (Regime::PairedOnly, true) => {
            return Err(Error::Contract("the paired_only regime takes no unpaired batch".into()))
        }
        _ => {}
    }
    let value = objective(params, paired, unpaired, &config.effective_weights())?;
    let grad_norm = optimizer.step(params, &value.grads)?;
    if !params.is_finite() {
        return Err(Error::Numeric("parameters became non-finite".into()));
    }
    Ok(StepOutcome {
        report: value.report,
        grad_norm,
    })
}

fn stream_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt
}

const PAIRED_SALT: u64 = 0x7061_6972;
const UNPAIRED_SALT: u64 = 0x756e_7061;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<LogLine>,
}

/// Initial parameters; independent of the regime.
pub fn init_params(corpus: &Corpus, config: &TrainConfig) -> Result<ModelParams> {
    let mc = config.model.config(corpus.vocab.num_pieces(), corpus.spec.feature_dim);
    ModelParams::init(&mc, config.seed)
}

/// Runs `config.steps` updates. `on_step` sees every log line together with
/// the updated parameters.
pub fn train<F>(corpus: &Corpus, config: &TrainConfig, mut on_step: F) -> Result<TrainOutcome>
where
    F: FnMut(&LogLine, &ModelParams) -> Result<()>,
{
    config.validate()?;
    let mut params = init_params(corpus, config)?;
    let mut optimizer = Sgd::new(&params, config.learning_rate, config.momentum, config.clip_norm);
    let mut paired_stream = Batcher::new(
        corpus.paired_train.len(),
        config.paired_batch,
        stream_seed(config.seed, PAIRED_SALT),
    )?;
    let mut unpaired_stream = match config.regime {
        Regime::Jeit => Some(Batcher::new(
            corpus.unpaired_train.len(),
            config.unpaired_batch,
            stream_seed(config.seed, UNPAIRED_SALT),
        )?),
        Regime::PairedOnly => None,
    };
    let mut log = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let idx = paired_stream.next().expect("endless stream");
        let paired: Vec<(&Tensor, &LabelBundle)> = idx
            .iter()
            .map(|&i| (&corpus.paired_train[i].features, &corpus.paired_train[i].bundle))
            .collect();
        let text_idx = unpaired_stream.as_mut().map(|s| s.next().expect("endless stream"));
        let text: Option<Vec<&LabelBundle>> = text_idx
            .as_ref()
            .map(|idx| idx.iter().map(|&i| &corpus.unpaired_train[i].bundle).collect());
        let outcome =
            train_step(&mut params, &mut optimizer, &paired, text.as_deref(), config).map_err(|e| match e {
                Error::Numeric(msg) => {
                    let mut ids: Vec<&str> = idx.iter().map(|&i| corpus.paired_train[i].id.as_str()).collect();
                    if let Some(t) = &text_idx {
                        ids.extend(t.iter().map(|&i| corpus.unpaired_train[i].id.as_str()));
                    }
                    Error::Numeric(format!("step {step}: {msg}; batch {}", ids.join(",")))
                }
                other => other,
            })?;
        let line = LogLine::new(step, &outcome.report, outcome.grad_norm);
        on_step(&line, &params)?;
        log.push(line);
    }
    Ok(TrainOutcome { params, log })
}

fn eos_positions(pause: &[PauseTag]) -> Vec<usize> {
    pause
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == PauseTag::Eos)
        .map(|(i, _)| i)
        .collect()
}

/// Decodes every utterance of an evaluation set and scores it.
pub fn evaluate_examples(
    params: &ModelParams,
    corpus: &Corpus,
    examples: &[PairedExample],
    config: &TrainConfig,
) -> Result<(EvalSummary, Vec<DecodeRecord>)> {
    let mut items = Vec::with_capacity(examples.len());
    let mut records = Vec::with_capacity(examples.len());
    for e in examples {
        let hyp = greedy_decode(&e.features, params, &corpus.vocab, &config.decode)?;
        items.push(EvalItem {
            ref_text: e.transcript.cased.clone(),
            ref_tokens: e.bundle.asr.clone(),
            ref_eos: eos_positions(&e.bundle.pause),
            hyp_text: hyp.text.clone(),
            hyp_tokens: hyp.tokens.clone(),
            hyp_eos: hyp
                .events
                .iter()
                .filter(|ev| ev.kind == PauseKind::Eos)
                .map(|ev| ev.token)
                .collect(),
        });
        records.push(DecodeRecord {
            id: e.id.clone(),
            text: hyp.text,
            events: hyp.events,
        });
    }
    Ok((evaluate(&items, config.eos_window), records))
}

/// Headline numbers: WER and head UER on the head set, tail UER on the
/// tail set, ⟨eos⟩ precision and recall on the pause set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub wer: f64,
    pub head_uer: f64,
    pub tail_uer: f64,
    pub eos_precision: f64,
    pub eos_recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub regime: Regime,
    pub seed: u64,
    pub steps: usize,
    pub final_loss: Option<LogLine>,
    pub headline: Headline,
    pub eval: BTreeMap<Split, EvalSummary>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::load(path, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub params: ModelParams,
    pub log: Vec<LogLine>,
    pub report: RunReport,
    pub decodes: BTreeMap<Split, Vec<DecodeRecord>>,
}

pub type Evaluation = (BTreeMap<Split, EvalSummary>, BTreeMap<Split, Vec<DecodeRecord>>);

/// Evaluates `params` on the three evaluation sets.
pub fn evaluate_all(params: &ModelParams, corpus: &Corpus, config: &TrainConfig) -> Result<Evaluation> {
    let mut eval = BTreeMap::new();
    let mut decodes = BTreeMap::new();
    for split in Split::EVAL {
        let examples = corpus.paired(split).expect("evaluation splits carry audio");
        let (summary, records) = evaluate_examples(params, corpus, examples, config)?;
        eval.insert(split, summary);
        decodes.insert(split, records);
    }
    Ok((eval, decodes))
}

pub fn headline(eval: &BTreeMap<Split, EvalSummary>) -> Headline {
    let get = |s: Split| eval.get(&s).cloned().unwrap_or_default();
    let (head, tail, pause) = (get(Split::HeadEval), get(Split::TailEval), get(Split::PauseEval));
    Headline {
        wer: head.wer,
        head_uer: head.uer,
        tail_uer: tail.uer,
        eos_precision: pause.eos_precision,
        eos_recall: pause.eos_recall,
    }
}

/// Trains one regime, evaluates it and, with `out` given, writes the
/// checkpoint, the training log, the decodes and the report there.
pub fn run_experiment(corpus: &Corpus, config: &TrainConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    let mut log_writer = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(LOG_FILE);
            let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            Some((std::io::BufWriter::new(f), path))
        }
        None => None,
    };
    let outcome = train(corpus, config, |line, params| {
        if let (Some((w, path)), Some(dir)) = (log_writer.as_mut(), out) {
            let text = serde_json::to_string(line).expect("log line serializes");
            writeln!(w, "{text}").map_err(|e| Error::io(path.as_path(), e))?;
            let step = line.step + 1;
            if config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0 {
                params.save(&dir.join(format!("checkpoint-{step:06}.json")))?;
            }
        }
        Ok(())
    })?;
    if let Some((mut w, path)) = log_writer {
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    let (eval, decodes) = evaluate_all(&outcome.params, corpus, config)?;
    let report = RunReport {
        regime: config.regime,
        seed: config.seed,
        steps: config.steps,
        final_loss: outcome.log.last().cloned(),
        headline: headline(&eval),
        eval,
    };
    if let Some(dir) = out {
        outcome.params.save(&dir.join(CHECKPOINT_FILE))?;
        for (split, records) in &decodes {
            let path = dir.join(format!("{}.decode.jsonl", split.name()));
            let mut text = String::new();
            for r in records {
                text.push_str(&serde_json::to_string(r).expect("decode record serializes"));
                text.push('\n');
            }
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(REPORT_FILE);
        fs::write(&path, report.to_json()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(ExperimentResult {
        params: outcome.params,
        log: outcome.log,
        report,
        decodes,
    })
}
