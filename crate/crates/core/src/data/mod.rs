//! Synthetic paired and text-only corpora.

mod batcher;
mod corpus;
mod features;
mod spec;

pub use batcher::Batcher;
pub use corpus::{
    capitalized_words, generate_corpus, generate_transcripts, read_records, split_path, write_records, Corpus,
    PairedExample, Record, Split, UnpairedExample, SPEC_FILE, VOCAB_FILE,
};
pub use features::{synthesize_features, FrameLayout, Signatures};
pub use spec::{CorpusSpec, Span, SplitSizes};
