use serde::{Deserialize, Serialize};

use super::vocab::{Vocab, BOUNDARY};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PauseKind {
    Pause,
    Eos,
}

/// A pause annotated in the gap after word `after_word` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauseMark {
    pub after_word: usize,
    pub kind: PauseKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedTranscript {
    pub cased: String,
    pub marks: Vec<PauseMark>,
}

impl AnnotatedTranscript {
    pub fn new(cased: impl Into<String>, marks: Vec<PauseMark>) -> Self {
        Self {
            cased: cased.into(),
            marks,
        }
    }

    /// Text-only annotation: `⟨eos⟩` after the final word, nothing else.
    pub fn unpaired(cased: impl Into<String>) -> Self {
        let cased = cased.into();
        let n = cased.split_whitespace().count();
        let marks = if n == 0 {
            vec![]
        } else {
            vec![PauseMark {
                after_word: n - 1,
                kind: PauseKind::Eos,
            }]
        };
        Self { cased, marks }
    }

    pub fn words(&self) -> Vec<&str> {
        self.cased.split_whitespace().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.words().len();
        let mut prev: Option<usize> = None;
        for m in &self.marks {
            if m.after_word >= n {
                return Err(Error::Annotation(format!(
                    "pause mark after word {} but transcript has {n} words",
                    m.after_word
                )));
            }
            if prev.is_some_and(|p| p >= m.after_word) {
                return Err(Error::Annotation(
                    "pause marks must be sorted with at most one per gap".into(),
                ));
            }
            let last = m.after_word + 1 == n;
            match (m.kind, last) {
                (PauseKind::Eos, false) => return Err(Error::Annotation("⟨eos⟩ must follow the final word".into())),
                (PauseKind::Pause, true) => {
                    return Err(Error::Annotation("⟨pause⟩ cannot follow the final word".into()))
                }
                _ => {}
            }
            prev = Some(m.after_word);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapTag {
    Cap,
    NonCap,
}

impl CapTag {
    /// Position in the capitalization head's two-way output.
    pub fn index(self) -> usize {
        match self {
            CapTag::Cap => 0,
            CapTag::NonCap => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PauseTag {
    NonPause,
    Pause,
    Eos,
}

impl PauseTag {
    /// Position among the pause head's non-blank outputs.
    pub fn index(self) -> usize {
        match self {
            PauseTag::NonPause => 0,
            PauseTag::Pause => 1,
            PauseTag::Eos => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(PauseTag::NonPause),
            1 => Some(PauseTag::Pause),
            2 => Some(PauseTag::Eos),
            _ => None,
        }
    }
}

/// Three parallel label channels of equal length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelBundle {
    pub transcript: String,
    pub asr: Vec<usize>,
    pub cap: Vec<CapTag>,
    pub pause: Vec<PauseTag>,
}

impl LabelBundle {
    pub fn len(&self) -> usize {
        self.asr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asr.is_empty()
    }

    pub fn check_lengths(&self) -> Result<()> {
        if self.cap.len() != self.asr.len() || self.pause.len() != self.asr.len() {
            return Err(Error::Contract(format!(
                "label channels differ in length: asr {}, cap {}, pause {}",
                self.asr.len(),
                self.cap.len(),
                self.pause.len()
            )));
        }
        Ok(())
    }

    /// Recovers word-level pause marks from the pause channel.
    pub fn pause_marks(&self, vocab: &Vocab) -> Vec<PauseMark> {
        let mut word: Option<usize> = None;
        let mut marks = Vec::new();
        for (&id, &tag) in self.asr.iter().zip(&self.pause) {
            if vocab.starts_word(id) || word.is_none() {
                word = Some(word.map_or(0, |w| w + 1));
            }
            let kind = match tag {
                PauseTag::NonPause => continue,
                PauseTag::Pause => PauseKind::Pause,
                PauseTag::Eos => PauseKind::Eos,
            };
            marks.push(PauseMark {
                after_word: word.unwrap_or(0),
                kind,
            });
        }
        marks
    }
}

/// Splits an annotated transcript into the ASR, capitalization and pause channels.
///
/// A piece is tagged ⟨cap⟩ when its first written character is uppercase in
/// the cased text. Pause and ⟨eos⟩ tags sit on the last piece of the word
/// preceding the mark.
pub fn factorize(t: &AnnotatedTranscript, vocab: &Vocab) -> Result<LabelBundle> {
    t.validate()?;
    let words = t.words();
    let mut asr = Vec::new();
    let mut cap = Vec::new();
    let mut pause = Vec::new();
    for (wi, word) in words.iter().enumerate() {
        let cased: Vec<char> = word.chars().collect();
        let mut lower = String::with_capacity(word.len());
        for c in &cased {
            let mut l = c.to_lowercase();
            match (l.next(), l.next()) {
                (Some(lc), None) => lower.push(lc),
                _ => {
                    return Err(Error::Annotation(format!(
                        "character {c:?} does not lowercase to a single character"
                    )))
                }
            }
        }
        let ids = vocab.tokenize_word(&lower)?;
        let mut offset = 0;
        for &id in &ids {
            let piece = vocab.real_piece(id)?;
            let body_len = piece.strip_prefix(BOUNDARY).unwrap_or(piece).chars().count();
            let tag = if cased.get(offset).is_some_and(|c| c.is_uppercase()) {
                CapTag::Cap
            } else {
                CapTag::NonCap
            };
            asr.push(id);
            cap.push(tag);
            pause.push(PauseTag::NonPause);
            offset += body_len;
        }
        if let Some(m) = t.marks.iter().find(|m| m.after_word == wi) {
            if let Some(last) = pause.last_mut() {
                *last = match m.kind {
                    PauseKind::Pause => PauseTag::Pause,
                    PauseKind::Eos => PauseTag::Eos,
                };
            }
        }
    }
    Ok(LabelBundle {
        transcript: t.cased.clone(),
        asr,
        cap,
        pause,
    })
}

/// Detokenizes and uppercases the first character of every ⟨cap⟩ piece.
pub fn render(asr: &[usize], cap: &[CapTag], vocab: &Vocab) -> Result<String> {
    if asr.len() != cap.len() {
        return Err(Error::Contract(format!(
            "render needs equal lengths, got {} pieces and {} cap tags",
            asr.len(),
            cap.len()
        )));
    }
    let mut out = String::new();
    for (&id, &tag) in asr.iter().zip(cap) {
        let piece = vocab.real_piece(id)?;
        let body = match piece.strip_prefix(BOUNDARY) {
            Some(body) => {
                if !out.is_empty() {
                    out.push(' ');
                }
                body
            }
            None => piece,
        };
        let mut chars = body.chars();
        if tag == CapTag::Cap {
            if let Some(first) = chars.next() {
                out.extend(first.to_uppercase());
            }
        }
        out.extend(chars);
    }
    Ok(out)
}
