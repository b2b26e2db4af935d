//! Scalar-loop forward passes of the generator NLL, evaluator score and
//! evaluator loss, generic over the float type. They read tensors by name
//! and share no code with the vectorised layers, so they serve as an
//! independent objective for finite differences.

use num_traits::Float;

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::evaluator::LOG_CLAMP;
use crate::math::ParamStore;

struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }
}

fn lift<T: Float>(x: f64) -> T {
    T::from(x).expect("f64 fits the wider type")
}

fn tensor<T: Float>(params: &ParamStore<f64>, name: &str) -> Result<Tensor<T>> {
    let id = params
        .id(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
    let m = params.value(id);
    Ok(Tensor {
        rows: m.rows(),
        cols: m.cols(),
        data: m.as_slice().iter().map(|&v| lift(v)).collect(),
    })
}

/// Comparison-based maximum; `Float::max` of the quad type mishandles
/// negative operands.
fn larger<T: Float>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

fn sigmoid<T: Float>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `tanh(W x + b)`
fn dense_tanh<T: Float>(w: &Tensor<T>, b: &Tensor<T>, x: &[T]) -> Vec<T> {
    (0..w.rows)
        .map(|r| {
            let mut acc = b.data[r];
            for (c, &v) in x.iter().enumerate() {
                acc = acc + w.at(r, c) * v;
            }
            acc.tanh()
        })
        .collect()
}

struct Cell<T> {
    weight: Tensor<T>,
    bias: Tensor<T>,
}

impl<T: Float> Cell<T> {
    fn step(&self, x: &[T], h: &[T], c: &[T]) -> (Vec<T>, Vec<T>) {
        let n = h.len();
        let pre = |r: usize| {
            let mut acc = self.bias.data[r];
            for (k, &v) in x.iter().chain(h.iter()).enumerate() {
                acc = acc + self.weight.at(r, k) * v;
            }
            acc
        };
        let mut h_next = Vec::with_capacity(n);
        let mut c_next = Vec::with_capacity(n);
        for k in 0..n {
            let i = sigmoid(pre(k));
            let f = sigmoid(pre(n + k));
            let g = pre(2 * n + k).tanh();
            let o = sigmoid(pre(3 * n + k));
            let cell = f * c[k] + i * g;
            c_next.push(cell);
            h_next.push(o * cell.tanh());
        }
        (h_next, c_next)
    }
}

fn row<T: Float>(t: &Tensor<T>, r: usize) -> Result<&[T]> {
    if r >= t.rows {
        return Err(Error::InvalidToken { token: r, size: t.rows });
    }
    Ok(&t.data[r * t.cols..(r + 1) * t.cols])
}

/// Negative log-likelihood of `sentence` given `[feature; z]`. END is
/// scored unless the sentence was truncated.
pub fn generator_nll<T: Float>(params: &ParamStore<f64>, feature: &[f64], z: &[f64], sentence: &Sentence) -> Result<T> {
    let embed = tensor::<T>(params, "embed")?;
    let cell = Cell {
        weight: tensor(params, "lstm.weight")?,
        bias: tensor(params, "lstm.bias")?,
    };
    let out_w = tensor::<T>(params, "out.weight")?;
    let out_b = tensor::<T>(params, "out.bias")?;
    let cond: Vec<T> = feature.iter().chain(z).map(|&v| lift(v)).collect();
    let mut h = dense_tanh(&tensor(params, "init_h.weight")?, &tensor(params, "init_h.bias")?, &cond);
    let mut c = dense_tanh(&tensor(params, "init_c.weight")?, &tensor(params, "init_c.bias")?, &cond);
    // BOS is the row after the last output word.
    let mut prev = out_w.rows;
    let targets = if sentence.is_truncated() { sentence.body() } else { sentence.ids() };
    let mut nll = T::zero();
    for &w in targets {
        let (h2, c2) = cell.step(row(&embed, prev)?, &h, &c);
        h = h2;
        c = c2;
        let logits: Vec<T> = (0..out_w.rows)
            .map(|r| (0..out_w.cols).fold(out_b.data[r], |acc, k| acc + out_w.at(r, k) * h[k]))
            .collect();
        let top = logits.iter().fold(T::neg_infinity(), |a, &b| larger(a, b));
        let norm = logits.iter().fold(T::zero(), |a, &v| a + (v - top).exp()).ln() + top;
        nll = nll + norm - logits[w];
        prev = w;
    }
    Ok(nll)
}

struct EvaluatorTensors<T> {
    image_w: Tensor<T>,
    image_b: Tensor<T>,
    embed: Tensor<T>,
    cell: Cell<T>,
    sent_w: Tensor<T>,
    sent_b: Tensor<T>,
}

impl<T: Float> EvaluatorTensors<T> {
    fn load(params: &ParamStore<f64>) -> Result<Self> {
        Ok(Self {
            image_w: tensor(params, "image.weight")?,
            image_b: tensor(params, "image.bias")?,
            embed: tensor(params, "embed")?,
            cell: Cell {
                weight: tensor(params, "lstm.weight")?,
                bias: tensor(params, "lstm.bias")?,
            },
            sent_w: tensor(params, "sentence.weight")?,
            sent_b: tensor(params, "sentence.bias")?,
        })
    }

    fn image(&self, feature: &[f64]) -> Vec<T> {
        let f: Vec<T> = feature.iter().map(|&v| lift(v)).collect();
        dense_tanh(&self.image_w, &self.image_b, &f)
    }

    fn dot(&self, image: &[T], sentence: &Sentence) -> Result<T> {
        let n = self.sent_w.cols;
        let (mut h, mut c) = (vec![T::zero(); n], vec![T::zero(); n]);
        for &w in sentence.ids() {
            let (h2, c2) = self.cell.step(row(&self.embed, w)?, &h, &c);
            h = h2;
            c = c2;
        }
        let s = dense_tanh(&self.sent_w, &self.sent_b, &h);
        Ok(image.iter().zip(&s).fold(T::zero(), |a, (&x, &y)| a + x * y))
    }
}

/// `sigmoid(<image embedding, sentence embedding>)`
pub fn evaluator_score<T: Float>(params: &ParamStore<f64>, feature: &[f64], sentence: &Sentence) -> Result<T> {
    let e = EvaluatorTensors::<T>::load(params)?;
    let image = e.image(feature);
    Ok(sigmoid(e.dot(&image, sentence)?))
}

/// Mean log score of the references plus `alpha` and `beta` times the mean
/// log complement score of the generated and mismatched sets.
pub fn evaluator_loss<T: Float>(
    params: &ParamStore<f64>,
    feature: &[f64],
    sets: [&[&Sentence]; 3],
    alpha: f64,
    beta: f64,
) -> Result<T> {
    let e = EvaluatorTensors::<T>::load(params)?;
    let image = e.image(feature);
    let clamp = lift::<T>(LOG_CLAMP);
    let mut total = T::zero();
    for (k, (set, coef)) in sets.iter().zip([1.0, alpha, beta]).enumerate() {
        let mut sum = T::zero();
        for s in set.iter() {
            let r = sigmoid(e.dot(&image, s)?);
            let arg = if k == 0 { r } else { T::one() - r };
            sum = sum + larger(arg, clamp).ln();
        }
        total = total + lift::<T>(coef) * sum / lift(set.len() as f64);
    }
    Ok(total)
}
