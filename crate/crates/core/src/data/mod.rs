//! CoNLL ingestion/emission, tag schemes, embedding tables and the model file.

mod conll;
mod embeddings;
mod model_file;
mod scheme;

pub use conll::{read_conll, read_conll_path, write_conll, write_conll_path, TokenSequence};
pub use embeddings::{
    load_embeddings, read_embeddings, sequence_to_reps, write_embeddings, EmbeddingTable,
};
pub use model_file::{load_model, read_model, save_model, write_model, FORMAT_VERSION};
pub use scheme::{bio_to_bioes, spans_from_bio, spans_from_bioes, LabelVocab, Scheme, Span, Tag};
