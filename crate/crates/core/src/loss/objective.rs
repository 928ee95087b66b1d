use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelkit::LabelBundle;
use crate::model::{encode_graph, joint_graph, predict_graph, Head, ModelParams, ModelVars};
use crate::numerics::{Tape, Tensor, Var};

/// Loss weights of the combined objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JeitWeights {
    pub beta: f64,
    pub alpha_cap: f64,
    pub alpha_pause: f64,
}

impl Default for JeitWeights {
    fn default() -> Self {
        Self {
            beta: 0.2,
            alpha_cap: 0.1,
            alpha_pause: 0.3,
        }
    }
}

impl JeitWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("alpha_cap", self.alpha_cap),
            ("alpha_pause", self.alpha_pause),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be a finite non-negative weight, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Coefficients of `[asr_e2e, cap_e2e, pause_e2e, asr_ilm, cap_ilm, pause_ilm]`.
    pub fn coefficients(&self) -> [f64; 6] {
        [
            1.0,
            self.alpha_cap,
            self.alpha_pause,
            self.beta,
            self.alpha_cap * self.beta,
            self.alpha_pause * self.beta,
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskLosses {
    pub asr: f64,
    pub cap: f64,
    pub pause: f64,
}

impl TaskLosses {
    pub fn get(&self, head: Head) -> f64 {
        match head {
            Head::Asr => self.asr,
            Head::Cap => self.cap,
            Head::Pause => self.pause,
        }
    }

    fn from_array(v: [f64; 3]) -> Self {
        Self {
            asr: v[0],
            cap: v[1],
            pause: v[2],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub e2e: TaskLosses,
    pub ilm: TaskLosses,
    /// Per task `L_E2E + β·L_ILM`.
    pub jeit: TaskLosses,
    pub weights: JeitWeights,
    pub total: f64,
}

impl LossReport {
    /// `L^ASR + α_Cap·L^Cap + α_Pause·L^Pause` over the per-task JEIT losses.
    pub fn recombine(&self) -> f64 {
        let w = &self.weights;
        self.e2e.asr
            + w.beta * self.ilm.asr
            + w.alpha_cap * (self.e2e.cap + w.beta * self.ilm.cap)
            + w.alpha_pause * (self.e2e.pause + w.beta * self.ilm.pause)
    }
}

/// Combines E2E and ILM losses into per-task and total objectives.
pub fn jeit_total(e2e: TaskLosses, ilm: TaskLosses, weights: JeitWeights) -> Result<LossReport> {
    weights.validate()?;
    let jeit = TaskLosses {
        asr: e2e.asr + weights.beta * ilm.asr,
        cap: e2e.cap + weights.beta * ilm.cap,
        pause: e2e.pause + weights.beta * ilm.pause,
    };
    let mut report = LossReport {
        e2e,
        ilm,
        jeit,
        weights,
        total: 0.0,
    };
    report.total = report.recombine();
    Ok(report)
}

fn asr_targets(bundle: &LabelBundle, vocab_size: usize) -> Result<Vec<usize>> {
    bundle
        .asr
        .iter()
        .map(|&id| {
            if id == 0 || id > vocab_size {
                Err(Error::Contract(format!("ASR label {id} outside 1..={vocab_size}")))
            } else {
                Ok(id - 1)
            }
        })
        .collect()
}

/// Per-utterance transducer NLLs `[asr, cap, pause]` for one paired example.
///
/// All heads read the same prediction-network rows, built from the ASR label
/// history. The capitalization lattice takes its blank from the ASR logits.
pub fn e2e_graph(
    tape: &mut Tape,
    vars: &ModelVars,
    params: &ModelParams,
    features: &Tensor,
    bundle: &LabelBundle,
) -> Result<[Var; 3]> {
    bundle.check_lengths()?;
    let config = &params.config;
    let frames = features.rows();
    if features.shape().len() != 2 || frames == 0 {
        return Err(Error::Contract(
            "paired example needs a non-empty T×F feature matrix".into(),
        ));
    }
    let targets = asr_targets(bundle, config.vocab_size)?;
    let u = bundle.len();
    let x = tape.constant(features.clone())?;
    let enc = encode_graph(tape, vars, config, x)?;
    let pred = predict_graph(tape, vars, config, &bundle.asr, u + 1)?;
    let s_asr = joint_graph(tape, vars.head(Head::Asr), enc, pred)?;
    let s_cap = joint_graph(tape, vars.head(Head::Cap), enc, pred)?;
    let s_pause = joint_graph(tape, vars.head(Head::Pause), enc, pred)?;
    let v = config.vocab_size;
    let cap: Vec<usize> = bundle.cap.iter().map(|c| c.index()).collect();
    let pause: Vec<usize> = bundle.pause.iter().map(|p| p.index()).collect();
    Ok([
        tape.transducer_nll(s_asr, 0, s_asr, 1..v + 1, &targets, frames)?,
        tape.transducer_nll(s_asr, 0, s_cap, 0..2, &cap, frames)?,
        tape.transducer_nll(s_pause, 0, s_pause, 1..4, &pause, frames)?,
    ])
}

/// Summed next-symbol NLLs `[asr, cap, pause]` of one text-only bundle, with
/// the encoder output replaced by a zero vector. `None` for empty bundles.
pub fn ilm_graph(
    tape: &mut Tape,
    vars: &ModelVars,
    params: &ModelParams,
    bundle: &LabelBundle,
) -> Result<Option<[Var; 3]>> {
    bundle.check_lengths()?;
    if bundle.is_empty() {
        return Ok(None);
    }
    let config = &params.config;
    let targets = asr_targets(bundle, config.vocab_size)?;
    let zero_enc = tape.constant(Tensor::zeros(&[1, config.encoder_dim]))?;
    let pred = predict_graph(tape, vars, config, &bundle.asr, bundle.len())?;
    let s_asr = joint_graph(tape, vars.head(Head::Asr), zero_enc, pred)?;
    let s_cap = joint_graph(tape, vars.head(Head::Cap), zero_enc, pred)?;
    let s_pause = joint_graph(tape, vars.head(Head::Pause), zero_enc, pred)?;
    let cap: Vec<usize> = bundle.cap.iter().map(|c| c.index()).collect();
    let pause: Vec<usize> = bundle.pause.iter().map(|p| p.index()).collect();
    Ok(Some([
        tape.cross_entropy(s_asr, 1..config.vocab_size + 1, &targets)?,
        tape.cross_entropy(s_cap, 0..2, &cap)?,
        tape.cross_entropy(s_pause, 1..4, &pause)?,
    ]))
}

/// Handles of one batch objective on a tape.
#[derive(Clone, Debug)]
pub struct ObjectiveVars {
    pub e2e: [Var; 3],
    pub ilm: Option<[Var; 3]>,
    pub total: Var,
}

/// Builds the batch objective: E2E losses averaged per utterance, ILM losses
/// averaged per token, combined with `weights`. With `unpaired = None` the ILM
/// terms are absent.
pub fn objective_graph(
    tape: &mut Tape,
    vars: &ModelVars,
    params: &ModelParams,
    paired: &[(&Tensor, &LabelBundle)],
    unpaired: Option<&[&LabelBundle]>,
    weights: &JeitWeights,
) -> Result<ObjectiveVars> {
    weights.validate()?;
    if paired.is_empty() {
        return Err(Error::Contract("objective needs at least one paired example".into()));
    }
    let scale = 1.0 / paired.len() as f64;
    let mut per_task: [Vec<(Var, f64)>; 3] = Default::default();
    for (features, bundle) in paired {
        for (k, v) in e2e_graph(tape, vars, params, features, bundle)?.into_iter().enumerate() {
            per_task[k].push((v, scale));
        }
    }
    let e2e = [
        tape.weighted_sum(&per_task[0])?,
        tape.weighted_sum(&per_task[1])?,
        tape.weighted_sum(&per_task[2])?,
    ];

    let ilm = match unpaired {
        None => None,
        Some(batch) => {
            let tokens: usize = batch.iter().map(|b| b.len()).sum();
            let scale = if tokens == 0 { 0.0 } else { 1.0 / tokens as f64 };
            let mut per_task: [Vec<(Var, f64)>; 3] = Default::default();
            for bundle in batch {
                if let Some(vs) = ilm_graph(tape, vars, params, bundle)? {
                    for (k, v) in vs.into_iter().enumerate() {
                        per_task[k].push((v, scale));
                    }
                }
            }
            Some([
                tape.weighted_sum(&per_task[0])?,
                tape.weighted_sum(&per_task[1])?,
                tape.weighted_sum(&per_task[2])?,
            ])
        }
    };

    let c = weights.coefficients();
    let mut terms: Vec<(Var, f64)> = e2e.iter().zip(&c[..3]).map(|(&v, &w)| (v, w)).collect();
    if let Some(ilm) = &ilm {
        terms.extend(ilm.iter().zip(&c[3..]).map(|(&v, &w)| (v, w)));
    }
    let total = tape.weighted_sum(&terms)?;
    Ok(ObjectiveVars { e2e, ilm, total })
}

/// Evaluated objective together with its gradient per parameter tensor.
#[derive(Clone, Debug)]
pub struct ObjectiveValue {
    pub report: LossReport,
    pub grads: Vec<Tensor>,
}

/// Forward and backward pass of the batch objective.
pub fn objective(
    params: &ModelParams,
    paired: &[(&Tensor, &LabelBundle)],
    unpaired: Option<&[&LabelBundle]>,
    weights: &JeitWeights,
) -> Result<ObjectiveValue> {
    let mut tape = Tape::new();
    let vars = ModelVars::register(params, &mut tape)?;
    let obj = objective_graph(&mut tape, &vars, params, paired, unpaired, weights)?;
    let value = |v: Var| tape.value(v).item();
    let e2e = TaskLosses::from_array(obj.e2e.map(value));
    let (ilm, effective) = match obj.ilm {
        Some(ilm) => (TaskLosses::from_array(ilm.map(value)), *weights),
        None => (TaskLosses::default(), JeitWeights { beta: 0.0, ..*weights }),
    };
    let mut report = jeit_total(e2e, ilm, effective)?;
    report.total = value(obj.total);
    if !report.total.is_finite() {
        return Err(Error::Numeric(format!("objective is not finite: {}", report.total)));
    }
    let g = tape.backward(obj.total)?;
    Ok(ObjectiveValue {
        report,
        grads: vars.all.iter().map(|&v| g.wrt(v)).collect(),
    })
}

/// Batch-mean E2E losses.
pub fn e2e_losses(params: &ModelParams, batch: &[(&Tensor, &LabelBundle)]) -> Result<TaskLosses> {
    if batch.is_empty() {
        return Err(Error::Contract("empty paired batch".into()));
    }
    let mut tape = Tape::new();
    let vars = ModelVars::register(params, &mut tape)?;
    let mut sums = [0.0; 3];
    for (features, bundle) in batch {
        let vs = e2e_graph(&mut tape, &vars, params, features, bundle)?;
        for (s, v) in sums.iter_mut().zip(vs) {
            *s += tape.value(v).item();
        }
    }
    Ok(TaskLosses::from_array(sums.map(|s| s / batch.len() as f64)))
}

/// Summed ILM NLLs of a batch and the number of tokens they cover.
pub fn ilm_nll_sums(params: &ModelParams, batch: &[&LabelBundle]) -> Result<(TaskLosses, usize)> {
    let mut tape = Tape::new();
    let vars = ModelVars::register(params, &mut tape)?;
    let mut sums = [0.0; 3];
    let mut tokens = 0;
    for bundle in batch {
        tokens += bundle.len();
        if let Some(vs) = ilm_graph(&mut tape, &vars, params, bundle)? {
            for (s, v) in sums.iter_mut().zip(vs) {
                *s += tape.value(v).item();
            }
        }
    }
    Ok((TaskLosses::from_array(sums), tokens))
}

/// Per-token ILM losses; an all-empty batch gives zeros.
pub fn ilm_losses(params: &ModelParams, batch: &[&LabelBundle]) -> Result<TaskLosses> {
    let (sums, tokens) = ilm_nll_sums(params, batch)?;
    if tokens == 0 {
        return Ok(TaskLosses::default());
    }
    let n = tokens as f64;
    Ok(TaskLosses {
        asr: sums.asr / n,
        cap: sums.cap / n,
        pause: sums.pause / n,
    })
}
