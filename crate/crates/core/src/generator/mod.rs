//! Noise-conditioned LSTM caption generator.
//!
//! `[f; z]` sets the initial LSTM state through two tanh projections; BOS
//! feeds the first step; each later step reads the previous word. The
//! output layer covers every vocabulary id except BOS.

mod decode;
mod network;

pub use decode::{beam_search, sample_index, BeamScorer};
pub use network::{
    FrozenGenerator, Generator, GeneratorConfig, NoiseVector, PathCache, DEFAULT_EMBED_DIM, DEFAULT_HIDDEN_DIM,
    DEFAULT_NOISE_DIM,
};
