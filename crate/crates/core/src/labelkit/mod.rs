//! Wordpiece vocabulary, transcript annotation and label factorization.

mod factorize;
mod vocab;

pub use factorize::{factorize, render, AnnotatedTranscript, CapTag, LabelBundle, PauseKind, PauseMark, PauseTag};
pub use vocab::{build_vocab, Vocab, BLANK_PIECE, BOUNDARY};
