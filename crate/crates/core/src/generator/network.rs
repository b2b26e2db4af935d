use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::decode::sample_index;
use crate::corpus::{Sentence, TokenId, Vocabulary, END};
use crate::error::{shape_err, Error, Result};
use crate::math::{
    lstm_backward, lstm_step, lstm_step_cached, softmax, softmax_in_place, GradBuffer, LstmCache, LstmState,
    LstmWeights, Matrix, ParamId, ParamStore,
};

pub const DEFAULT_NOISE_DIM: usize = 16;
pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_EMBED_DIM: usize = 32;
const INIT_SCALE: f64 = 0.08;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Output vocabulary size (every id except BOS).
    pub vocab_ext: usize,
    pub feature_dim: usize,
    pub noise_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl GeneratorConfig {
    pub fn for_vocab(vocab: &Vocabulary, feature_dim: usize) -> Self {
        Self {
            vocab_ext: vocab.ext_size(),
            feature_dim,
            noise_dim: DEFAULT_NOISE_DIM,
            embed_dim: DEFAULT_EMBED_DIM,
            hidden_dim: DEFAULT_HIDDEN_DIM,
        }
    }

    /// Input id fed at the first step.
    pub fn bos(&self) -> TokenId {
        self.vocab_ext
    }
}

/// Noise input `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseVector(pub Vec<f64>);

impl NoiseVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Entries drawn from `N(0, sigma^2)`.
    pub fn sample<R: Rng + ?Sized>(dim: usize, sigma: f64, rng: &mut R) -> Self {
        Self(
            (0..dim)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(rng);
                    sigma * v
                })
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Ids {
    embed: ParamId,
    init_h_w: ParamId,
    init_h_b: ParamId,
    init_c_w: ParamId,
    init_c_b: ParamId,
    lstm_w: ParamId,
    lstm_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// Policy network parameters and their layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    config: GeneratorConfig,
    pub params: ParamStore<f64>,
    ids: Ids,
}

/// Immutable copy of a generator taken at the start of a G-update round.
#[derive(Clone, Debug)]
pub struct FrozenGenerator {
    inner: Generator,
}

impl FrozenGenerator {
    pub fn generator(&self) -> &Generator {
        &self.inner
    }
}

impl std::ops::Deref for FrozenGenerator {
    type Target = Generator;
    fn deref(&self) -> &Generator {
        &self.inner
    }
}

/// Forward activations along one token path, kept for backpropagation.
pub struct PathCache {
    input: Vec<f64>,
    h0: Vec<f64>,
    c0: Vec<f64>,
    tokens: Vec<TokenId>,
    hiddens: Vec<Vec<f64>>,
    caches: Vec<LstmCache<f64>>,
    /// Logits at each step.
    pub logits: Vec<Vec<f64>>,
}

impl PathCache {
    pub fn steps(&self) -> usize {
        self.logits.len()
    }
}

impl Generator {
    fn layout(config: &GeneratorConfig, seed: u64, mut init: impl FnMut(usize, usize) -> Matrix<f64>) -> Result<Self> {
        let c = config;
        if c.vocab_ext < 1 || c.hidden_dim < 1 || c.embed_dim < 1 {
            return Err(Error::Config("generator dimensions must be positive".into()));
        }
        let cond = c.feature_dim + c.noise_dim;
        let mut p = ParamStore::new(seed);
        let ids = Ids {
            embed: p.insert("embed", init(c.vocab_ext + 1, c.embed_dim))?,
            init_h_w: p.insert("init_h.weight", init(c.hidden_dim, cond))?,
            init_h_b: p.insert("init_h.bias", Matrix::zeros(c.hidden_dim, 1))?,
            init_c_w: p.insert("init_c.weight", init(c.hidden_dim, cond))?,
            init_c_b: p.insert("init_c.bias", Matrix::zeros(c.hidden_dim, 1))?,
            lstm_w: p.insert("lstm.weight", init(4 * c.hidden_dim, c.embed_dim + c.hidden_dim))?,
            lstm_b: p.insert("lstm.bias", Matrix::zeros(4 * c.hidden_dim, 1))?,
            out_w: p.insert("out.weight", init(c.vocab_ext, c.hidden_dim))?,
            out_b: p.insert("out.bias", Matrix::zeros(c.vocab_ext, 1))?,
        };
        Ok(Self {
            config: config.clone(),
            params: p,
            ids,
        })
    }

    /// Uniform `[-0.08, 0.08]` weights, zero biases.
    pub fn new(config: &GeneratorConfig, seed: u64) -> Result<Self> {
        let mut rng = crate::math::rng::stream(seed, &[0x6e6]);
        Self::layout(config, seed, |r, c| Matrix::random_uniform(r, c, INIT_SCALE, &mut rng))
    }

    pub fn zeros(config: &GeneratorConfig) -> Result<Self> {
        Self::layout(config, 0, Matrix::zeros)
    }

    /// Rebuilds a generator from stored tensors (e.g. a checkpoint).
    pub fn from_params(config: &GeneratorConfig, params: ParamStore<f64>) -> Result<Self> {
        let mut g = Self::zeros(config)?;
        if params.names() != g.params.names() {
            return Err(Error::Checkpoint("generator tensor names do not match".into()));
        }
        for (a, b) in params.values().iter().zip(g.params.values()) {
            if a.shape() != b.shape() {
                return Err(shape_err("generator tensor", format!("{:?}", b.shape()), format!("{:?}", a.shape())));
            }
        }
        g.params = params;
        Ok(g)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn snapshot(&self) -> FrozenGenerator {
        FrozenGenerator { inner: self.clone() }
    }

    /// Mutable access to a named tensor, for tests and rigged models.
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

    fn condition(&self, feature: &[f64], z: &NoiseVector) -> Result<Vec<f64>> {
        if feature.len() != self.config.feature_dim {
            return Err(shape_err("generator feature", self.config.feature_dim, feature.len()));
        }
        if z.0.len() != self.config.noise_dim {
            return Err(shape_err("generator noise", self.config.noise_dim, z.0.len()));
        }
        let mut x = Vec::with_capacity(feature.len() + z.0.len());
        x.extend_from_slice(feature);
        x.extend_from_slice(&z.0);
        Ok(x)
    }

    fn project(&self, w: ParamId, b: ParamId, x: &[f64]) -> Vec<f64> {
        let mut a = self.params.value(b).as_slice().to_vec();
        self.params.value(w).matvec_add_into(x, &mut a);
        a.iter_mut().for_each(|v| *v = v.tanh());
        a
    }

    /// `h0 = tanh(W_h [f; z] + b_h)`, `c0 = tanh(W_c [f; z] + b_c)`.
    pub fn init_state(&self, feature: &[f64], z: &NoiseVector) -> Result<LstmState<f64>> {
        let x = self.condition(feature, z)?;
        let h = self.project(self.ids.init_h_w, self.ids.init_h_b, &x);
        let c = self.project(self.ids.init_c_w, self.ids.init_c_b, &x);
        LstmState::new(h, c)
    }

    fn check_input(&self, token: TokenId) -> Result<()> {
        if token > self.config.vocab_ext {
            return Err(Error::InvalidToken {
                token,
                size: self.config.vocab_ext + 1,
            });
        }
        Ok(())
    }

    /// Advances one step on `prev_word` and returns the output logits.
    pub fn step_logits(&self, state: &LstmState<f64>, prev_word: TokenId) -> Result<(Vec<f64>, LstmState<f64>)> {
        self.check_input(prev_word)?;
        let x = self.params.value(self.ids.embed).row(prev_word);
        let next = lstm_step(state, x, self.lstm())?;
        let mut logits = self.params.value(self.ids.out_b).as_slice().to_vec();
        self.params.value(self.ids.out_w).matvec_add_into(&next.hidden, &mut logits);
        Ok((logits, next))
    }

    /// Word distribution for the next position and the advanced state.
    pub fn step_policy(&self, state: &LstmState<f64>, prev_word: TokenId) -> Result<(Vec<f64>, LstmState<f64>)> {
        let (mut logits, next) = self.step_logits(state, prev_word)?;
        softmax_in_place(&mut logits);
        Ok((logits, next))
    }

    fn scaled_dist(mut logits: Vec<f64>, temperature: f64) -> Vec<f64> {
        if temperature != 1.0 {
            logits.iter_mut().for_each(|v| *v /= temperature);
        }
        softmax_in_place(&mut logits);
        logits
    }

    /// Samples words from `state` (which has consumed `last`) until END or
    /// until the body reaches `t_max`. Appends the sampled words (END
    /// included when sampled) to `out` and returns whether the body was cut.
    pub fn sample_continuation<R: Rng + ?Sized>(
        &self,
        mut state: LstmState<f64>,
        mut last: TokenId,
        mut body_len: usize,
        t_max: usize,
        temperature: f64,
        rng: &mut R,
        out: &mut Vec<TokenId>,
    ) -> Result<bool> {
        while body_len < t_max {
            let (logits, next) = self.step_logits(&state, last)?;
            let dist = Self::scaled_dist(logits, temperature);
            let w = sample_index(&dist, rng);
            out.push(w);
            if w == END {
                return Ok(false);
            }
            state = next;
            last = w;
            body_len += 1;
        }
        Ok(true)
    }

    /// Ancestral sampling with logits divided by `temperature`.
    pub fn sample_sentence<R: Rng + ?Sized>(
        &self,
        feature: &[f64],
        z: &NoiseVector,
        t_max: usize,
        temperature: f64,
        rng: &mut R,
    ) -> Result<Sentence> {
        if t_max < 1 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if !(temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        let state = self.init_state(feature, z)?;
        let mut words = Vec::with_capacity(t_max + 1);
        let truncated = self.sample_continuation(state, self.config.bos(), 0, t_max, temperature, rng, &mut words)?;
        if !truncated {
            words.pop();
        }
        Ok(Sentence::from_body(words, truncated))
    }

    /// Argmax decoding; ties go to the lowest id.
    pub fn greedy(&self, feature: &[f64], z: &NoiseVector, t_max: usize) -> Result<Sentence> {
        let mut state = self.init_state(feature, z)?;
        let mut last = self.config.bos();
        let mut body = Vec::new();
        while body.len() < t_max {
            let (logits, next) = self.step_logits(&state, last)?;
            let w = argmax(&logits);
            if w == END {
                return Ok(Sentence::from_body(body, false));
            }
            body.push(w);
            state = next;
            last = w;
        }
        Ok(Sentence::from_body(body, true))
    }

    /// Sum of log-probabilities of the sentence's sampled tokens: every
    /// body token, plus END unless the sentence was truncated.
    pub fn log_likelihood(&self, feature: &[f64], z: &NoiseVector, sentence: &Sentence) -> Result<f64> {
        let mut state = self.init_state(feature, z)?;
        let mut last = self.config.bos();
        let targets = if sentence.is_truncated() {
            sentence.body()
        } else {
            sentence.ids()
        };
        let mut total = 0.0;
        for &w in targets {
            if w >= self.config.vocab_ext {
                return Err(Error::InvalidToken {
                    token: w,
                    size: self.config.vocab_ext,
                });
            }
            let (logits, next) = self.step_logits(&state, last)?;
            total += crate::math::log_softmax(&logits)[w];
            state = next;
            last = w;
        }
        Ok(total)
    }

    /// Runs the network along `targets` with teacher forcing (inputs are
    /// BOS followed by every target but the last) and keeps activations.
    pub fn forward_path(&self, feature: &[f64], z: &NoiseVector, targets: &[TokenId]) -> Result<PathCache> {
        let input = self.condition(feature, z)?;
        let h0 = self.project(self.ids.init_h_w, self.ids.init_h_b, &input);
        let c0 = self.project(self.ids.init_c_w, self.ids.init_c_b, &input);
        let mut state = LstmState::new(h0.clone(), c0.clone())?;
        let mut tokens = Vec::with_capacity(targets.len());
        let mut hiddens = Vec::with_capacity(targets.len());
        let mut caches = Vec::with_capacity(targets.len());
        let mut logits_all = Vec::with_capacity(targets.len());
        let mut last = self.config.bos();
        for &w in targets {
            if w >= self.config.vocab_ext {
                return Err(Error::InvalidToken {
                    token: w,
                    size: self.config.vocab_ext,
                });
            }
            let x = self.params.value(self.ids.embed).row(last);
            let (next, cache) = lstm_step_cached(&state, x, self.lstm())?;
            let mut logits = self.params.value(self.ids.out_b).as_slice().to_vec();
            self.params.value(self.ids.out_w).matvec_add_into(&next.hidden, &mut logits);
            tokens.push(last);
            hiddens.push(next.hidden.clone());
            caches.push(cache);
            logits_all.push(logits);
            state = next;
            last = w;
        }
        Ok(PathCache {
            input,
            h0,
            c0,
            tokens,
            hiddens,
            caches,
            logits: logits_all,
        })
    }

    /// Backpropagates per-step logit gradients through the path and
    /// accumulates parameter gradients into `grads`.
    pub fn backward_path(&self, path: &PathCache, d_logits: &[Vec<f64>], grads: &mut GradBuffer<f64>) -> Result<()> {
        if d_logits.len() != path.steps() {
            return Err(shape_err("backward_path steps", path.steps(), d_logits.len()));
        }
        let h = self.config.hidden_dim;
        let ids = self.ids;
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for t in (0..path.steps()).rev() {
            let dl = &d_logits[t];
            {
                let (gw, gb) = grads.pair_mut(ids.out_w, ids.out_b);
                gw.add_outer(1.0, dl, &path.hiddens[t]);
                for (g, d) in gb.as_mut_slice().iter_mut().zip(dl) {
                    *g += *d;
                }
            }
            self.params.value(ids.out_w).tr_matvec_add_into(dl, &mut dh_next);
            let (gw, gb) = grads.pair_mut(ids.lstm_w, ids.lstm_b);
            let back = lstm_backward(&path.caches[t], &dh_next, &dc_next, self.lstm(), gw, gb);
            let erow = grads.get_mut(ids.embed).row_mut(path.tokens[t]);
            for (g, d) in erow.iter_mut().zip(&back.input) {
                *g += *d;
            }
            dh_next = back.prev_hidden;
            dc_next = back.prev_cell;
        }
        for (d_out, out, w, b) in [
            (&dh_next, &path.h0, ids.init_h_w, ids.init_h_b),
            (&dc_next, &path.c0, ids.init_c_w, ids.init_c_b),
        ] {
            let da: Vec<f64> = d_out.iter().zip(out).map(|(d, y)| d * (1.0 - y * y)).collect();
            let (gw, gb) = grads.pair_mut(w, b);
            gw.add_outer(1.0, &da, &path.input);
            for (g, d) in gb.as_mut_slice().iter_mut().zip(&da) {
                *g += *d;
            }
        }
        Ok(())
    }

    /// Teacher-forced negative log-likelihood of `sentence` (END excluded
    /// when the sentence was truncated). Accumulates `weight * d NLL` into
    /// `grads` and returns `(nll, token_count)`.
    pub fn nll_backward(
        &self,
        feature: &[f64],
        z: &NoiseVector,
        sentence: &Sentence,
        weight: f64,
        grads: &mut GradBuffer<f64>,
    ) -> Result<(f64, usize)> {
        let targets = if sentence.is_truncated() {
            sentence.body()
        } else {
            sentence.ids()
        };
        let path = self.forward_path(feature, z, targets)?;
        let mut total = 0.0;
        let mut d_logits = Vec::with_capacity(targets.len());
        for (logits, &w) in path.logits.iter().zip(targets) {
            let (loss, mut g) = crate::math::softmax_xent(logits, w)?;
            total += loss;
            g.iter_mut().for_each(|v| *v *= weight);
            d_logits.push(g);
        }
        self.backward_path(&path, &d_logits, grads)?;
        Ok((total, targets.len()))
    }

    /// Teacher-forced NLL without gradients.
    pub fn nll(&self, feature: &[f64], z: &NoiseVector, sentence: &Sentence) -> Result<(f64, usize)> {
        let n = if sentence.is_truncated() {
            sentence.body().len()
        } else {
            sentence.len()
        };
        Ok((-self.log_likelihood(feature, z, sentence)?, n))
    }

    /// Probability vector for every step of a path (test helper).
    pub fn path_distributions(&self, path: &PathCache) -> Vec<Vec<f64>> {
        path.logits.iter().map(|l| softmax(l)).collect()
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::grad_check;
    use crate::math::rng::seeded;

    fn tiny_config() -> GeneratorConfig {
        GeneratorConfig {
            vocab_ext: 6,
            feature_dim: 5,
            noise_dim: 3,
            embed_dim: 4,
            hidden_dim: 8,
        }
    }

    fn randomized(seed: u64, scale: f64) -> Generator {
        let cfg = tiny_config();
        let mut g = Generator::zeros(&cfg).unwrap();
        let mut rng = seeded(seed);
        let ids: Vec<ParamId> = (0..g.params.len()).map(ParamId).collect();
        for id in ids {
            let (r, c) = g.params.value(id).shape();
            *g.params.value_mut(id) = Matrix::random_uniform(r, c, scale, &mut rng);
        }
        g
    }

    #[test]
    fn zero_projection_gives_zero_state() {
        let g = Generator::zeros(&tiny_config()).unwrap();
        let s = g.init_state(&[1.0; 5], &NoiseVector(vec![0.5; 3])).unwrap();
        assert_eq!(s.hidden, vec![0.0; 8]);
        assert_eq!(s.cell, vec![0.0; 8]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn noise_changes_initial_state() {
        let g = randomized(4, 0.5);
        let f = [0.2, 0.0, 1.0, 0.0, 0.3];
        let a = g.init_state(&f, &NoiseVector(vec![1.0, -0.5, 0.2])).unwrap();
        let b = g.init_state(&f, &NoiseVector(vec![-1.0, 0.3, 0.9])).unwrap();
        assert_ne!(a.hidden, b.hidden);
    }

    #[test]
    fn zero_output_projection_is_uniform() {
        let mut g = randomized(5, 0.5);
        g.tensor_mut("out.weight").unwrap().fill(0.0);
        g.tensor_mut("out.bias").unwrap().fill(0.0);
        let s = g.init_state(&[0.1; 5], &NoiseVector::zeros(3)).unwrap();
        let (dist, _) = g.step_policy(&s, g.config().bos()).unwrap();
        for p in dist {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn step_policy_is_pure_and_normalized() {
        let g = randomized(6, 0.7);
        let s = g.init_state(&[0.3; 5], &NoiseVector(vec![0.1, 0.2, 0.3])).unwrap();
        let (a, _) = g.step_policy(&s, 2).unwrap();
        let (b, _) = g.step_policy(&s, 2).unwrap();
        assert_eq!(a, b);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(g.step_policy(&s, 7).is_err());
    }

    #[test]
    fn forced_end_gives_empty_body() {
        let mut g = randomized(7, 0.3);
        g.tensor_mut("out.bias").unwrap().as_mut_slice()[END] = 100.0;
        let mut rng = seeded(1);
        let s = g
            .sample_sentence(&[0.0; 5], &NoiseVector::zeros(3), 16, 1.0, &mut rng)
            .unwrap();
        assert_eq!(s.ids(), &[END]);
        assert!(!s.is_truncated());
    }

    #[test]
    fn cold_sampling_matches_greedy() {
        let g = randomized(8, 1.5);
        let mut rng = seeded(2);
        for k in 0..20 {
            let z = NoiseVector::sample(3, 1.0, &mut rng);
            let f = [k as f64 * 0.1, 0.5, -0.2, 0.0, 1.0];
            let cold = g.sample_sentence(&f, &z, 6, 1e-6, &mut rng).unwrap();
            assert_eq!(cold, g.greedy(&f, &z, 6).unwrap());
        }
    }

    #[test]
    fn sampled_length_bounded_and_likelihood_finite() {
        let g = randomized(9, 1.0);
        let mut rng = seeded(3);
        for _ in 0..200 {
            let z = NoiseVector::sample(3, 1.0, &mut rng);
            let s = g.sample_sentence(&[0.4; 5], &z, 4, 1.0, &mut rng).unwrap();
            assert!(s.len() <= 5);
            assert!(g.log_likelihood(&[0.4; 5], &z, &s).unwrap().is_finite());
        }
    }

    #[test]
    fn nll_gradients_pass_finite_differences() {
        for seed in 0..5 {
            let mut g = randomized(seed, 1.0);
            let f = [0.9, -0.1, 0.0, 0.5, 0.2];
            let z = NoiseVector(vec![0.3, -1.2, 0.7]);
            let sentence = Sentence::from_body(vec![2, 4, 1, 5], false);
            let mut grads = g.params.zeroed_grads();
            g.nll_backward(&f, &z, &sentence, 1.0, &mut grads).unwrap();
            g.params.set_grads(grads).unwrap();
            let cfg = g.config().clone();
            let report = grad_check(&g.params, 1e-5, |p| {
                let probe = Generator::from_params(&cfg, p.clone()).unwrap();
                probe.nll(&f, &z, &sentence).unwrap().0
            })
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
        }
    }
}
