//! Synthetic scenes, the caption grammar, vocabulary, and dataset files.

pub mod dataset;
pub mod grammar;
pub mod scene;
pub mod vocab;

pub use dataset::{
    build_vocabulary, encode_records, generate_corpus, generate_corpus_with_dim, load_dataset, sample_mismatched,
    save_dataset, split_records, CorpusRecord, EncodedRecord, References, Split, MIN_REFERENCES,
};
pub use scene::{render_feature, FeatureVector, Scene, SceneObject, FEATURE_DIM};
pub use vocab::{tokenize, Sentence, TokenId, Vocabulary, BOS_TOKEN, DEFAULT_MIN_COUNT, DEFAULT_T_MAX, END, UNK};
