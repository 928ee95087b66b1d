//! Word error rate, uppercase error rate and ⟨eos⟩ precision/recall.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignOp {
    Match { reference: usize, hypothesis: usize },
    Substitute { reference: usize, hypothesis: usize },
    Delete { reference: usize },
    Insert { hypothesis: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_words: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// `(S + I + D) / max(N, 1)`
    pub fn rate(&self) -> f64 {
        self.errors() as f64 / self.reference_words.max(1) as f64
    }
}

impl AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
        self.reference_words += o.reference_words;
    }
}

/// Minimum-edit alignment with unit costs. On ties the backtrace prefers a
/// match or substitution, then a deletion, then an insertion.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<AlignOp> {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for (j, v) in d.iter_mut().enumerate().take(m + 1) {
        *v = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i * w + j] = diag.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if here == d[(i - 1) * w + j - 1] + usize::from(!same) {
                let (reference, hypothesis) = (i - 1, j - 1);
                ops.push(if same {
                    AlignOp::Match { reference, hypothesis }
                } else {
                    AlignOp::Substitute { reference, hypothesis }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            ops.push(AlignOp::Delete { reference: i - 1 });
            i -= 1;
        } else {
            ops.push(AlignOp::Insert { hypothesis: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

pub fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let mut c = EditCounts {
        reference_words: reference.len(),
        ..EditCounts::default()
    };
    for op in align(reference, hypothesis) {
        match op {
            AlignOp::Match { .. } => {}
            AlignOp::Substitute { .. } => c.substitutions += 1,
            AlignOp::Delete { .. } => c.deletions += 1,
            AlignOp::Insert { .. } => c.insertions += 1,
        }
    }
    c
}

/// Word-level edit counts over whitespace-separated words.
pub fn wer(reference: &str, hypothesis: &str) -> EditCounts {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    edit_counts(&r, &h)
}

/// Words left after deleting every lowercase character; empty words vanish.
pub fn uppercase_residual(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.chars().filter(|c| !c.is_lowercase()).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Edit counts between the uppercase residuals of two cased strings. With no
/// reference residual, every hypothesis residual counts as an insertion over
/// a denominator of one.
pub fn uer(reference: &str, hypothesis: &str) -> EditCounts {
    edit_counts(&uppercase_residual(reference), &uppercase_residual(hypothesis))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EosCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

impl EosCounts {
    /// `TP / (TP + FP)`, 1 when nothing was hypothesized.
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    /// `TP / (TP + FN)`, 1 when the reference has no ⟨eos⟩.
    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }
}

impl AddAssign for EosCounts {
    fn add_assign(&mut self, o: Self) {
        self.true_positives += o.true_positives;
        self.false_positives += o.false_positives;
        self.false_negatives += o.false_negatives;
    }
}

/// Matches hypothesized ⟨eos⟩ positions against the reference through the
/// token alignment of the ASR channel.
///
/// Positions are token indices (the token an ⟨eos⟩ follows). A hypothesis
/// ⟨eos⟩ is a true positive when an unmatched reference ⟨eos⟩ lies within
/// `window` reference tokens of the aligned position. An inserted hypothesis
/// token maps to the reference token before it.
pub fn eos_counts<T: PartialEq>(
    ref_tokens: &[T],
    ref_eos: &[usize],
    hyp_tokens: &[T],
    hyp_eos: &[usize],
    window: usize,
) -> EosCounts {
    let mut hyp_to_ref = vec![0usize; hyp_tokens.len()];
    let mut last_ref: Option<usize> = None;
    for op in align(ref_tokens, hyp_tokens) {
        match op {
            AlignOp::Match { reference, hypothesis } | AlignOp::Substitute { reference, hypothesis } => {
                hyp_to_ref[hypothesis] = reference;
                last_ref = Some(reference);
            }
            AlignOp::Delete { reference } => last_ref = Some(reference),
            AlignOp::Insert { hypothesis } => hyp_to_ref[hypothesis] = last_ref.unwrap_or(0),
        }
    }
    let mut used = vec![false; ref_eos.len()];
    let mut c = EosCounts::default();
    for &h in hyp_eos {
        let pos = hyp_to_ref.get(h).copied().unwrap_or(usize::MAX);
        let hit = ref_eos
            .iter()
            .enumerate()
            .filter(|&(k, &r)| !used[k] && pos != usize::MAX && r.abs_diff(pos) <= window)
            .min_by_key(|&(_, &r)| r.abs_diff(pos))
            .map(|(k, _)| k);
        match hit {
            Some(k) => {
                used[k] = true;
                c.true_positives += 1;
            }
            None => c.false_positives += 1,
        }
    }
    c.false_negatives = ref_eos.len() - c.true_positives;
    c
}

/// Reference and hypothesis of one evaluated utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    pub ref_text: String,
    pub ref_tokens: Vec<usize>,
    pub ref_eos: Vec<usize>,
    pub hyp_text: String,
    pub hyp_tokens: Vec<usize>,
    pub hyp_eos: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub utterances: usize,
    pub wer: f64,
    pub uer: f64,
    pub eos_precision: f64,
    pub eos_recall: f64,
    pub eos_precision_macro: f64,
    pub eos_recall_macro: f64,
    pub words: EditCounts,
    pub uppercase: EditCounts,
    pub eos: EosCounts,
}

/// Corpus-level metrics. WER compares lowercased words; ⟨eos⟩ ratios are
/// pooled over the corpus, with per-utterance means as the macro columns.
pub fn evaluate(items: &[EvalItem], eos_window: usize) -> EvalSummary {
    let mut s = EvalSummary {
        utterances: items.len(),
        ..EvalSummary::default()
    };
    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    for it in items {
        s.words += wer(&it.ref_text.to_lowercase(), &it.hyp_text.to_lowercase());
        s.uppercase += uer(&it.ref_text, &it.hyp_text);
        let e = eos_counts(&it.ref_tokens, &it.ref_eos, &it.hyp_tokens, &it.hyp_eos, eos_window);
        p_sum += e.precision();
        r_sum += e.recall();
        s.eos += e;
    }
    s.wer = s.words.rate();
    s.uer = s.uppercase.rate();
    s.eos_precision = s.eos.precision();
    s.eos_recall = s.eos.recall();
    let n = items.len().max(1) as f64;
    s.eos_precision_macro = if items.is_empty() { 1.0 } else { p_sum / n };
    s.eos_recall_macro = if items.is_empty() { 1.0 } else { r_sum / n };
    s
}
