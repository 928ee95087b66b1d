use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HEAD_ENTITIES: [&str; 24] = [
    "Kasa",
    "Zama",
    "Kari",
    "Soto",
    "Tazo",
    "Kiti",
    "Kami",
    "Rati",
    "Kika",
    "Tora",
    "Saza",
    "Mozo",
    "Zazo Zati",
    "Mara Zazo",
    "Rota Kosi",
    "Mamo Rako",
    "Kiro Mamo",
    "Kosi Kima",
    "Tasi Mara",
    "Zati Tasi",
    "Kima Rosi",
    "Raki Kiro",
    "Rako Raki",
    "Rosi Rota",
];

const TAIL_ENTITIES: [&str; 24] = [
    "Tako Rizo",
    "Raro Tato",
    "Zori Toza",
    "Zata Zori",
    "Zira Soki",
    "Rizo Sazi",
    "Miko Zima",
    "Misa Miko",
    "Soza Moro",
    "Soki Tari",
    "Riti Zata",
    "Sati Riti",
    "Tato Ziro",
    "Moro Tako",
    "Moki Misa",
    "Siza Moki",
    "Sazi Sora",
    "Ziro Zira",
    "Rozi Sati",
    "Toza Rozi",
    "Tari Raro",
    "Sora Soza",
    "Mari Siza",
    "Zima Mari",
];

const NOUNS: [&str; 72] = [
    "kaka", "kako", "kara", "karo", "kazi", "kiki", "kiko", "kimi", "kiri", "kisi", "kito", "koko", "koma", "kota",
    "maka", "mami", "masa", "maso", "mata", "mati", "mika", "miki", "mimi", "mimo", "miso", "mita", "mori", "moza",
    "raka", "rama", "rasa", "rimi", "rira", "risa", "roka", "romo", "roro", "sako", "sara", "sato", "siro", "siso",
    "sizo", "soka", "soma", "sori", "soso", "taka", "tasa", "taza", "tazi", "timo", "tisi", "tita", "toki", "toma",
    "tosa", "toti", "toto", "zaka", "zamo", "zaro", "zasa", "zasi", "zazi", "ziko", "ziso", "zita", "zito", "ziza",
    "zoka", "zomi",
];

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub paired_train: usize,
    pub unpaired_train: usize,
    pub head_eval: usize,
    pub tail_eval: usize,
    pub pause_eval: usize,
}

/// Everything needed to regenerate the synthetic corpus.
///
/// Templates mark entity slots with `{E}` and noun slots with `{N}`. Head
/// templates feed paired audio and the head evaluation set; tail templates
/// only occur with tail entities, in unpaired text and the tail evaluation
/// set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    pub head_entities: Vec<String>,
    pub tail_entities: Vec<String>,
    pub nouns: Vec<String>,
    pub head_templates: Vec<String>,
    pub tail_templates: Vec<String>,
    /// Chance that an utterance continues with "and" and a second clause.
    pub continuation_prob: f64,
    /// Chance of a ⟨pause⟩ before a continuation.
    pub pause_prob: f64,
    /// Chance of a hesitation ⟨pause⟩ right before an entity.
    pub hesitation_prob: f64,
    /// Share of unpaired queries built from tail entities.
    pub unpaired_tail_share: f64,
    /// Share of pause-eval clauses built from tail entities.
    pub pause_eval_tail_share: f64,
    pub vocab_size: usize,
    /// Signature dimensions plus one onset channel.
    pub feature_dim: usize,
    pub frames_per_piece: Span,
    pub pause_frames: Span,
    pub eos_frames: Span,
    pub noise: f64,
    pub sizes: SplitSizes,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 17,
            head_entities: strings(&HEAD_ENTITIES),
            tail_entities: strings(&TAIL_ENTITIES),
            nouns: strings(&NOUNS),
            head_templates: strings(&[
                "call {E}",
                "play {E}",
                "text {E} about the {N}",
                "find the {N} near {E}",
                "directions to {N}",
                "weather in {N}",
                "tickets for {N}",
                "open the {N}",
            ]),
            tail_templates: strings(&[
                "call {E}",
                "play {E}",
                "text {E} about the {N}",
                "find the {N} near {E}",
            ]),
            continuation_prob: 0.4,
            pause_prob: 0.7,
            hesitation_prob: 0.1,
            unpaired_tail_share: 0.8,
            pause_eval_tail_share: 0.5,
            vocab_size: 80,
            feature_dim: 12,
            frames_per_piece: Span::new(2, 3),
            pause_frames: Span::new(1, 1),
            eos_frames: Span::new(2, 3),
            noise: 0.1,
            sizes: SplitSizes {
                paired_train: 2000,
                unpaired_train: 4000,
                head_eval: 200,
                tail_eval: 200,
                pause_eval: 200,
            },
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let words = |names: &[String]| -> BTreeSet<String> {
            names
                .iter()
                .flat_map(|e| e.split_whitespace())
                .map(str::to_lowercase)
                .collect()
        };
        let head = words(&self.head_entities);
        let tail = words(&self.tail_entities);
        if let Some(w) = head.intersection(&tail).next() {
            return Err(Error::Config(format!("entity {w:?} is both head and tail")));
        }
        if head.is_empty() || tail.is_empty() || self.nouns.is_empty() {
            return Err(Error::Config(
                "head entities, tail entities and nouns must be non-empty".into(),
            ));
        }
        for e in self.head_entities.iter().chain(&self.tail_entities) {
            let mut parts = e.split_whitespace().peekable();
            if parts.peek().is_none() || !parts.all(|w| w.chars().next().is_some_and(char::is_uppercase)) {
                return Err(Error::Config(format!("entity {e:?} must be capitalized words")));
            }
        }
        for n in &self.nouns {
            if n.chars().any(char::is_uppercase) || n.split_whitespace().count() != 1 {
                return Err(Error::Config(format!("noun {n:?} must be one lowercase word")));
            }
        }
        if self.head_templates.is_empty() || self.tail_templates.is_empty() {
            return Err(Error::Config("head and tail templates must be non-empty".into()));
        }
        for t in &self.tail_templates {
            if !t.contains("{E}") {
                return Err(Error::Config(format!("tail template {t:?} has no entity slot")));
            }
        }
        for t in self.head_templates.iter().chain(&self.tail_templates) {
            let filler = t.replace("{E}", "").replace("{N}", "");
            if filler.chars().any(char::is_uppercase) || filler.contains(['{', '}']) {
                return Err(Error::Config(format!(
                    "template {t:?} must be lowercase with {{E}}/{{N}} slots"
                )));
            }
        }
        let probs = [
            ("continuation_prob", self.continuation_prob),
            ("pause_prob", self.pause_prob),
            ("hesitation_prob", self.hesitation_prob),
            ("unpaired_tail_share", self.unpaired_tail_share),
            ("pause_eval_tail_share", self.pause_eval_tail_share),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        for (name, s) in [
            ("frames_per_piece", self.frames_per_piece),
            ("pause_frames", self.pause_frames),
            ("eos_frames", self.eos_frames),
        ] {
            if s.min == 0 || s.min > s.max {
                return Err(Error::Config(format!("{name} needs 1 <= min <= max, got {s:?}")));
            }
        }
        if self.feature_dim < 2 {
            return Err(Error::Config("feature_dim must be at least 2".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!(
                "noise {} must be finite and non-negative",
                self.noise
            )));
        }
        if self.sizes.paired_train == 0 {
            return Err(Error::Config("paired_train must hold at least one utterance".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("corpus spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::load(path, e))
    }
}
