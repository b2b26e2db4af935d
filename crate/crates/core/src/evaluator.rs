//! The critic: `r = sigmoid(<tanh(W_I f + b_I), tanh(W_S h_T + b_S)>)`
//! where `h_T` is the final hidden state of an LSTM reading the sentence
//! (END included) from a zero state.

use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, TokenId, Vocabulary};
use crate::error::{shape_err, Error, Result};
use crate::math::{
    lstm_backward, lstm_step, lstm_step_cached, sigmoid, GradBuffer, LstmCache, LstmState, LstmWeights, Matrix,
    ParamId, ParamStore,
};

pub const DEFAULT_EVAL_EMBED_DIM: usize = 32;
pub const DEFAULT_EVAL_HIDDEN_DIM: usize = 32;
pub const DEFAULT_JOINT_DIM: usize = 32;
pub const LOG_CLAMP: f64 = 1e-12;
const INIT_SCALE: f64 = 0.08;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorConfig {
    /// Number of readable token ids (every id except BOS).
    pub vocab_ext: usize,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub joint_dim: usize,
}

impl EvaluatorConfig {
    pub fn for_vocab(vocab: &Vocabulary, feature_dim: usize) -> Self {
        Self {
            vocab_ext: vocab.ext_size(),
            feature_dim,
            embed_dim: DEFAULT_EVAL_EMBED_DIM,
            hidden_dim: DEFAULT_EVAL_HIDDEN_DIM,
            joint_dim: DEFAULT_JOINT_DIM,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub image_embedding: Vec<f64>,
    pub sentence_embedding: Vec<f64>,
    pub dot: f64,
    pub score: f64,
}

/// Value of the three-term objective for one image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss: f64,
    pub mean_ref: f64,
    pub mean_gen: f64,
    pub mean_mism: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Ids {
    img_w: ParamId,
    img_b: ParamId,
    embed: ParamId,
    lstm_w: ParamId,
    lstm_b: ParamId,
    sent_w: ParamId,
    sent_b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluator {
    config: EvaluatorConfig,
    pub params: ParamStore<f64>,
    ids: Ids,
}

struct SentenceCache {
    tokens: Vec<TokenId>,
    caches: Vec<LstmCache<f64>>,
    last_hidden: Vec<f64>,
    embedding: Vec<f64>,
}

impl Evaluator {
    fn layout(config: &EvaluatorConfig, seed: u64, mut init: impl FnMut(usize, usize) -> Matrix<f64>) -> Result<Self> {
        let c = config;
        if c.vocab_ext < 1 || c.hidden_dim < 1 || c.embed_dim < 1 || c.joint_dim < 1 {
            return Err(Error::Config("evaluator dimensions must be positive".into()));
        }
        let mut p = ParamStore::new(seed);
        let ids = Ids {
            img_w: p.insert("image.weight", init(c.joint_dim, c.feature_dim))?,
            img_b: p.insert("image.bias", Matrix::zeros(c.joint_dim, 1))?,
            embed: p.insert("embed", init(c.vocab_ext, c.embed_dim))?,
            lstm_w: p.insert("lstm.weight", init(4 * c.hidden_dim, c.embed_dim + c.hidden_dim))?,
            lstm_b: p.insert("lstm.bias", Matrix::zeros(4 * c.hidden_dim, 1))?,
            sent_w: p.insert("sentence.weight", init(c.joint_dim, c.hidden_dim))?,
            sent_b: p.insert("sentence.bias", Matrix::zeros(c.joint_dim, 1))?,
        };
        Ok(Self {
            config: config.clone(),
            params: p,
            ids,
        })
    }

    /// Uniform `[-0.08, 0.08]` weights, zero biases.
    pub fn new(config: &EvaluatorConfig, seed: u64) -> Result<Self> {
        let mut rng = crate::math::rng::stream(seed, &[0xe7a1]);
        Self::layout(config, seed, |r, c| Matrix::random_uniform(r, c, INIT_SCALE, &mut rng))
    }

    pub fn zeros(config: &EvaluatorConfig) -> Result<Self> {
        Self::layout(config, 0, Matrix::zeros)
    }

    pub fn from_params(config: &EvaluatorConfig, params: ParamStore<f64>) -> Result<Self> {
        let mut e = Self::zeros(config)?;
        if params.names() != e.params.names() {
            return Err(Error::Checkpoint("evaluator tensor names do not match".into()));
        }
        for (a, b) in params.values().iter().zip(e.params.values()) {
            if a.shape() != b.shape() {
                return Err(shape_err("evaluator tensor", format!("{:?}", b.shape()), format!("{:?}", a.shape())));
            }
        }
        e.params = params;
        Ok(e)
    }

    pub fn config(&self) -> &EvaluatorConfig {
        &self.config
    }

    /// Redraws every tensor, biases included, uniformly in `[-scale, scale]`.
    pub fn fill_uniform(&mut self, scale: f64, seed: u64) {
        let mut rng = crate::math::rng::seeded(seed);
        for i in 0..self.params.len() {
            let m = self.params.value_mut(ParamId(i));
            *m = Matrix::random_uniform(m.rows(), m.cols(), scale, &mut rng);
        }
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Matrix<f64>> {
        let id = self.params.id(name)?;
        Some(self.params.value_mut(id))
    }

    fn lstm(&self) -> LstmWeights<'_, f64> {
        LstmWeights {
            weight: self.params.value(self.ids.lstm_w),
            bias: self.params.value(self.ids.lstm_b),
        }
    }

    fn check_token(&self, token: TokenId) -> Result<()> {
        if token >= self.config.vocab_ext {
            return Err(Error::InvalidToken {
                token,
                size: self.config.vocab_ext,
            });
        }
        Ok(())
    }

    /// `tanh(W_I f + b_I)`
    pub fn embed_image(&self, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.config.feature_dim {
            return Err(shape_err("evaluator feature", self.config.feature_dim, feature.len()));
        }
        let mut a = self.params.value(self.ids.img_b).as_slice().to_vec();
        self.params.value(self.ids.img_w).matvec_add_into(feature, &mut a);
        a.iter_mut().for_each(|v| *v = v.tanh());
        Ok(a)
    }

    /// Zero state of the sentence reader.
    pub fn start_sentence(&self) -> LstmState<f64> {
        LstmState::zeros(self.config.hidden_dim)
    }

    /// Reads one token.
    pub fn feed(&self, state: &LstmState<f64>, token: TokenId) -> Result<LstmState<f64>> {
        self.check_token(token)?;
        lstm_step(state, self.params.value(self.ids.embed).row(token), self.lstm())
    }

    /// `tanh(W_S h + b_S)` of a reader state.
    pub fn finish_sentence(&self, state: &LstmState<f64>) -> Vec<f64> {
        let mut a = self.params.value(self.ids.sent_b).as_slice().to_vec();
        self.params.value(self.ids.sent_w).matvec_add_into(&state.hidden, &mut a);
        a.iter_mut().for_each(|v| *v = v.tanh());
        a
    }

    pub fn embed_sentence(&self, sentence: &Sentence) -> Result<Vec<f64>> {
        let mut state = self.start_sentence();
        for &w in sentence.ids() {
            state = self.feed(&state, w)?;
        }
        Ok(self.finish_sentence(&state))
    }

    /// `sigmoid(<image, sentence>)`
    pub fn score_embeddings(image: &[f64], sentence: &[f64]) -> f64 {
        sigmoid(crate::math::scalar::dot(image, sentence))
    }

    pub fn score(&self, feature: &[f64], sentence: &Sentence) -> Result<ScoreBreakdown> {
        if sentence.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        let image_embedding = self.embed_image(feature)?;
        let sentence_embedding = self.embed_sentence(sentence)?;
        let dot = crate::math::scalar::dot(&image_embedding, &sentence_embedding);
        Ok(ScoreBreakdown {
            image_embedding,
            sentence_embedding,
            dot,
            score: sigmoid(dot),
        })
    }

    fn forward_sentence(&self, sentence: &Sentence) -> Result<SentenceCache> {
        let mut state = self.start_sentence();
        let mut caches = Vec::with_capacity(sentence.len());
        for &w in sentence.ids() {
            self.check_token(w)?;
            let (next, cache) = lstm_step_cached(&state, self.params.value(self.ids.embed).row(w), self.lstm())?;
            caches.push(cache);
            state = next;
        }
        let embedding = self.finish_sentence(&state);
        Ok(SentenceCache {
            tokens: sentence.ids().to_vec(),
            caches,
            last_hidden: state.hidden,
            embedding,
        })
    }

    fn backward_sentence(&self, cache: &SentenceCache, d_embedding: &[f64], grads: &mut GradBuffer<f64>) {
        let ids = self.ids;
        let da: Vec<f64> = d_embedding
            .iter()
            .zip(&cache.embedding)
            .map(|(d, y)| d * (1.0 - y * y))
            .collect();
        {
            let (gw, gb) = grads.pair_mut(ids.sent_w, ids.sent_b);
            gw.add_outer(1.0, &da, &cache.last_hidden);
            for (g, d) in gb.as_mut_slice().iter_mut().zip(&da) {
                *g += *d;
            }
        }
        let mut dh = vec![0.0; self.config.hidden_dim];
        self.params.value(ids.sent_w).tr_matvec_add_into(&da, &mut dh);
        let mut dc = vec![0.0; self.config.hidden_dim];
        for t in (0..cache.caches.len()).rev() {
            let (gw, gb) = grads.pair_mut(ids.lstm_w, ids.lstm_b);
            let back = lstm_backward(&cache.caches[t], &dh, &dc, self.lstm(), gw, gb);
            let row = grads.get_mut(ids.embed).row_mut(cache.tokens[t]);
            for (g, d) in row.iter_mut().zip(&back.input) {
                *g += *d;
            }
            dh = back.prev_hidden;
            dc = back.prev_cell;
        }
    }

    /// Three-term objective for one image:
    /// `mean_refs log r + alpha mean_gen log(1 - r) + beta mean_mism log(1 - r)`,
    /// with log arguments clamped to `[1e-12, 1]`. When `grads` is given,
    /// `weight * d loss / d params` is added to it (ascent direction).
    pub fn loss(
        &self,
        feature: &[f64],
        refs: &[&Sentence],
        gen: &[&Sentence],
        mism: &[&Sentence],
        alpha: f64,
        beta: f64,
        weight: f64,
        mut grads: Option<&mut GradBuffer<f64>>,
    ) -> Result<LossBreakdown> {
        if refs.is_empty() {
            return Err(Error::Empty("reference set"));
        }
        if gen.is_empty() {
            return Err(Error::Empty("generated set"));
        }
        if mism.is_empty() {
            return Err(Error::Empty("mismatched set"));
        }
        let image = self.embed_image(feature)?;
        let mut d_image = vec![0.0; image.len()];
        let mut out = LossBreakdown::default();
        for (set, coef, positive, slot) in [
            (refs, 1.0, true, 0usize),
            (gen, alpha, false, 1),
            (mism, beta, false, 2),
        ] {
            let share = coef / set.len() as f64;
            let mut mean_score = 0.0;
            for s in set.iter() {
                let cache = self.forward_sentence(s)?;
                let r = sigmoid(crate::math::scalar::dot(&image, &cache.embedding));
                mean_score += r / set.len() as f64;
                let (term, d_dot) = if positive {
                    if r >= LOG_CLAMP {
                        (r.ln(), 1.0 - r)
                    } else {
                        (LOG_CLAMP.ln(), 0.0)
                    }
                } else if 1.0 - r >= LOG_CLAMP {
                    ((1.0 - r).ln(), -r)
                } else {
                    (LOG_CLAMP.ln(), 0.0)
                };
                out.loss += share * term;
                if let Some(g) = grads.as_deref_mut() {
                    let scale = weight * share * d_dot;
                    if scale != 0.0 {
                        let d_sent: Vec<f64> = image.iter().map(|v| scale * v).collect();
                        for (d, e) in d_image.iter_mut().zip(&cache.embedding) {
                            *d += scale * e;
                        }
                        self.backward_sentence(&cache, &d_sent, g);
                    }
                }
            }
            match slot {
                0 => out.mean_ref = mean_score,
                1 => out.mean_gen = mean_score,
                _ => out.mean_mism = mean_score,
            }
        }
        if let Some(g) = grads {
            let da: Vec<f64> = d_image.iter().zip(&image).map(|(d, y)| d * (1.0 - y * y)).collect();
            let (gw, gb) = g.pair_mut(self.ids.img_w, self.ids.img_b);
            gw.add_outer(1.0, &da, feature);
            for (g, d) in gb.as_mut_slice().iter_mut().zip(&da) {
                *g += *d;
            }
        }
        Ok(out)
    }
}
