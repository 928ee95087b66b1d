use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Prefix carried by word-initial pieces.
pub const BOUNDARY: char = '_';
/// Literal text of the reserved index 0 in vocab files.
pub const BLANK_PIECE: &str = "⟨blank⟩";

/// Wordpiece inventory. Index 0 is the reserved blank; real pieces use ids `1..=V`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
    max_piece_chars: usize,
}

impl Vocab {
    /// Builds a vocab from real pieces (blank is prepended).
    pub fn from_pieces<I, S>(pieces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![BLANK_PIECE.to_string()];
        let mut index = HashMap::new();
        for p in pieces {
            let p: String = p.into();
            let body = p.strip_prefix(BOUNDARY).unwrap_or(&p);
            if p.is_empty()
                || body
                    .chars()
                    .any(|c| c.is_uppercase() || c.is_whitespace() || c == BOUNDARY)
            {
                return Err(Error::Config(format!("invalid wordpiece {p:?}")));
            }
            if index.insert(p.clone(), all.len()).is_some() {
                return Err(Error::Config(format!("duplicate wordpiece {p:?}")));
            }
            all.push(p);
        }
        let max_piece_chars = all[1..].iter().map(|p| p.chars().count()).max().unwrap_or(0);
        Ok(Self {
            pieces: all,
            index,
            max_piece_chars,
        })
    }

    /// Number of real pieces, `V`.
    pub fn num_pieces(&self) -> usize {
        self.pieces.len() - 1
    }

    /// Piece text for `id`; id 0 is the blank placeholder.
    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces[1..]
    }

    /// Greedy longest-match segmentation of lowercase text.
    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>> {
        let mut ids = Vec::new();
        for word in text.split_whitespace() {
            ids.extend(self.tokenize_word(word)?);
        }
        Ok(ids)
    }

    pub(crate) fn tokenize_word(&self, word: &str) -> Result<Vec<usize>> {
        let chars: Vec<char> = std::iter::once(BOUNDARY).chain(word.chars()).collect();
        let mut ids = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let longest = (chars.len() - pos).min(self.max_piece_chars);
            let found = (1..=longest).rev().find_map(|len| {
                let cand: String = chars[pos..pos + len].iter().collect();
                self.id(&cand).map(|id| (id, len))
            });
            match found {
                Some((id, len)) => {
                    ids.push(id);
                    pos += len;
                }
                None => return Err(Error::Tokenize(chars[pos])),
            }
        }
        Ok(ids)
    }

    pub fn detokenize(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let piece = self.real_piece(id)?;
            match piece.strip_prefix(BOUNDARY) {
                Some(body) => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(body);
                }
                None => out.push_str(piece),
            }
        }
        Ok(out)
    }

    pub(crate) fn real_piece(&self, id: usize) -> Result<&str> {
        if id == 0 || id >= self.pieces.len() {
            return Err(Error::Contract(format!("wordpiece id {id} out of range")));
        }
        Ok(&self.pieces[id])
    }

    pub fn starts_word(&self, id: usize) -> bool {
        self.pieces.get(id).is_some_and(|p| id != 0 && p.starts_with(BOUNDARY))
    }

    /// Line-oriented file: line 0 is `⟨blank⟩`, line `i` holds piece `i`.
    pub fn to_file_string(&self) -> String {
        let mut s = self.pieces.join("\n");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(BLANK_PIECE) => {}
            other => {
                return Err(Error::Config(format!(
                    "vocab line 0 must be {BLANK_PIECE:?}, found {other:?}"
                )))
            }
        }
        Self::from_pieces(lines)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::load(path, e))
    }
}

/// Byte-pair-style vocabulary induction over a lowercased corpus.
///
/// Starts from every single character, the bare boundary marker and every
/// boundary-prefixed initial character, then repeatedly merges the most
/// frequent adjacent pair inside words (ties go to the lexicographically
/// smallest pair) until `target_size` real pieces exist or no pair occurs
/// twice.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot build a vocab from an empty corpus".into()));
    }
    if target_size < 30 {
        return Err(Error::Config(format!("vocab target size {target_size} is below 30")));
    }
    let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
    for line in corpus {
        for w in line.as_ref().to_lowercase().split_whitespace() {
            *word_counts.entry(w.to_string()).or_default() += 1;
        }
    }

    let mut alphabet: BTreeSet<String> = BTreeSet::new();
    alphabet.insert(BOUNDARY.to_string());
    let mut words: Vec<(Vec<String>, usize)> = Vec::new();
    for (w, &count) in &word_counts {
        if w.contains(BOUNDARY) {
            return Err(Error::Config(format!("corpus word {w:?} contains the boundary marker")));
        }
        let mut symbols = Vec::new();
        for (i, c) in w.chars().enumerate() {
            alphabet.insert(c.to_string());
            if i == 0 {
                alphabet.insert(format!("{BOUNDARY}{c}"));
                symbols.push(format!("{BOUNDARY}{c}"));
            } else {
                symbols.push(c.to_string());
            }
        }
        words.push((symbols, count));
    }
    if target_size < alphabet.len() {
        return Err(Error::Config(format!(
            "vocab target size {target_size} is smaller than the alphabet ({})",
            alphabet.len()
        )));
    }

    let mut pieces: Vec<String> = alphabet.into_iter().collect();
    while pieces.len() < target_size {
        let mut pair_counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (symbols, count) in &words {
            for pair in symbols.windows(2) {
                *pair_counts.entry((&pair[0], &pair[1])).or_default() += count;
            }
        }
        // BTreeMap iterates in lexicographic order, so keeping the first
        // maximum gives the required tie-break.
        let mut best: Option<((&str, &str), usize)> = None;
        for (&pair, &count) in &pair_counts {
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((pair, count));
            }
        }
        let Some(((left, right), count)) = best else { break };
        if count < 2 {
            break;
        }
        let (left, right) = (left.to_string(), right.to_string());
        let merged = format!("{left}{right}");
        for (symbols, _) in &mut words {
            let mut i = 0;
            while i + 1 < symbols.len() {
                if symbols[i] == left && symbols[i + 1] == right {
                    symbols[i] = merged.clone();
                    symbols.remove(i + 1);
                }
                i += 1;
            }
        }
        if !pieces.contains(&merged) {
            pieces.push(merged);
        }
    }
    Vocab::from_pieces(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_follow_frequency_then_lexicographic_order() {
        let v = build_vocab(&["aaa aaa"], 30).unwrap();
        assert_eq!(v.piece(0), Some(BLANK_PIECE));
        assert_eq!(v.pieces(), &["_", "_a", "a", "_aa", "_aaa"]);
        assert_eq!(v.tokenize("aaa").unwrap(), vec![v.id("_aaa").unwrap()]);
    }

    #[test]
    fn round_trip_on_built_vocab() {
        let v = build_vocab(&["san francisco"], 500).unwrap();
        let ids = v.tokenize("san francisco").unwrap();
        assert_eq!(v.detokenize(&ids).unwrap(), "san francisco");
        assert!(build_vocab(&["san francisco"], 12).is_err());
        assert!(build_vocab::<&str>(&[], 100).is_err());
    }

    #[test]
    fn tokenize_greedy_longest_match() {
        let v = Vocab::from_pieces(["_driving", "_time", "_to", "_san", "_fran", "cisco"]).unwrap();
        let ids = v.tokenize("driving time to san francisco").unwrap();
        let pieces: Vec<_> = ids.iter().map(|&i| v.piece(i).unwrap()).collect();
        assert_eq!(pieces, ["_driving", "_time", "_to", "_san", "_fran", "cisco"]);
        assert!(v.tokenize("").unwrap().is_empty());

        let v = Vocab::from_pieces(["_a", "a", "_aa"]).unwrap();
        assert_eq!(v.tokenize("aa").unwrap(), vec![v.id("_aa").unwrap()]);
        assert!(matches!(v.tokenize("ab"), Err(Error::Tokenize('b'))));
    }

    #[test]
    fn file_format_round_trip() {
        let v = build_vocab(&["driving time to san francisco"], 40).unwrap();
        let text = v.to_file_string();
        assert!(text.starts_with("⟨blank⟩\n"));
        assert_eq!(Vocab::parse(&text).unwrap(), v);
        assert!(Vocab::parse("_a\n_b\n").is_err());
    }
}
