//! Standard (non-peephole) LSTM cell with an explicit backward pass.
//!
//! Gate layout in the stacked weight matrix is `[input, forget, candidate,
//! output]`, each block `hidden` rows tall. The weight multiplies the
//! concatenation `[x; h_prev]`.

use super::activation::sigmoid;
use super::matrix::Matrix;
use super::scalar::{dot, Scalar};
use crate::error::{shape_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<S> {
    pub hidden: Vec<S>,
    pub cell: Vec<S>,
    pub step: usize,
}

impl<S: Scalar> LstmState<S> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            hidden: vec![S::zero(); dim],
            cell: vec![S::zero(); dim],
            step: 0,
        }
    }

    pub fn new(hidden: Vec<S>, cell: Vec<S>) -> Result<Self> {
        if hidden.len() != cell.len() {
            return Err(shape_err("LstmState", hidden.len(), cell.len()));
        }
        Ok(Self { hidden, cell, step: 0 })
    }

    pub fn dim(&self) -> usize {
        self.hidden.len()
    }
}

/// Borrowed view of one cell's parameters.
#[derive(Clone, Copy)]
pub struct LstmWeights<'a, S> {
    /// `4H x (X + H)`
    pub weight: &'a Matrix<S>,
    /// `4H x 1`
    pub bias: &'a Matrix<S>,
}

impl<'a, S: Scalar> LstmWeights<'a, S> {
    pub fn hidden_dim(&self) -> usize {
        self.weight.rows() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols() - self.hidden_dim()
    }

    fn check(&self, state: &LstmState<S>, input: &[S]) -> Result<()> {
        let h = self.hidden_dim();
        if self.weight.rows() != 4 * h || self.weight.cols() < h {
            return Err(shape_err("lstm weight", "4H x (X+H)", format!("{:?}", self.weight.shape())));
        }
        if self.bias.len() != 4 * h {
            return Err(shape_err("lstm bias", 4 * h, self.bias.len()));
        }
        if state.hidden.len() != h || state.cell.len() != h {
            return Err(shape_err("lstm state", h, state.hidden.len()));
        }
        if input.len() != self.input_dim() {
            return Err(shape_err("lstm input", self.input_dim(), input.len()));
        }
        Ok(())
    }
}

/// Activations saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmCache<S> {
    concat: Vec<S>,
    prev_cell: Vec<S>,
    input_gate: Vec<S>,
    forget_gate: Vec<S>,
    candidate: Vec<S>,
    output_gate: Vec<S>,
    tanh_cell: Vec<S>,
}

fn preactivation<S: Scalar>(input: &[S], hidden: &[S], w: LstmWeights<'_, S>) -> Vec<S> {
    let x_len = input.len();
    let mut z = w.bias.as_slice().to_vec();
    for (o, row) in z.iter_mut().zip(w.weight.as_slice().chunks_exact(x_len + hidden.len())) {
        *o += dot(&row[..x_len], input) + dot(&row[x_len..], hidden);
    }
    z
}

fn forward<S: Scalar>(
    state: &LstmState<S>,
    input: &[S],
    w: LstmWeights<'_, S>,
) -> (LstmState<S>, LstmCache<S>) {
    let h = w.hidden_dim();
    let mut concat = Vec::with_capacity(input.len() + h);
    concat.extend_from_slice(input);
    concat.extend_from_slice(&state.hidden);

    let z = preactivation(input, &state.hidden, w);

    let input_gate: Vec<S> = z[..h].iter().map(|&v| sigmoid(v)).collect();
    let forget_gate: Vec<S> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
    let candidate: Vec<S> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
    let output_gate: Vec<S> = z[3 * h..].iter().map(|&v| sigmoid(v)).collect();

    let cell: Vec<S> = (0..h)
        .map(|k| forget_gate[k] * state.cell[k] + input_gate[k] * candidate[k])
        .collect();
    let tanh_cell: Vec<S> = cell.iter().map(|&c| c.tanh()).collect();
    let hidden: Vec<S> = (0..h).map(|k| output_gate[k] * tanh_cell[k]).collect();

    let next = LstmState {
        hidden,
        cell,
        step: state.step + 1,
    };
    let cache = LstmCache {
        concat,
        prev_cell: state.cell.clone(),
        input_gate,
        forget_gate,
        candidate,
        output_gate,
        tanh_cell,
    };
    (next, cache)
}

/// One cell step.
pub fn lstm_step<S: Scalar>(state: &LstmState<S>, input: &[S], w: LstmWeights<'_, S>) -> Result<LstmState<S>> {
    w.check(state, input)?;
    let h = w.hidden_dim();
    let z = preactivation(input, &state.hidden, w);
    let mut hidden = Vec::with_capacity(h);
    let mut cell = Vec::with_capacity(h);
    for k in 0..h {
        let c = sigmoid(z[h + k]) * state.cell[k] + sigmoid(z[k]) * z[2 * h + k].tanh();
        cell.push(c);
        hidden.push(sigmoid(z[3 * h + k]) * c.tanh());
    }
    Ok(LstmState {
        hidden,
        cell,
        step: state.step + 1,
    })
}

/// One cell step that also returns the activations needed by [`lstm_backward`].
pub fn lstm_step_cached<S: Scalar>(
    state: &LstmState<S>,
    input: &[S],
    w: LstmWeights<'_, S>,
) -> Result<(LstmState<S>, LstmCache<S>)> {
    w.check(state, input)?;
    Ok(forward(state, input, w))
}

/// Gradients flowing out of one cell step.
pub struct LstmStepGrad<S> {
    pub input: Vec<S>,
    pub prev_hidden: Vec<S>,
    pub prev_cell: Vec<S>,
}

/// Backward pass of one step. `d_hidden` and `d_cell` are the loss
/// gradients with respect to this step's outputs; parameter gradients are
/// accumulated into `grad_weight` / `grad_bias`.
pub fn lstm_backward<S: Scalar>(
    cache: &LstmCache<S>,
    d_hidden: &[S],
    d_cell: &[S],
    w: LstmWeights<'_, S>,
    grad_weight: &mut Matrix<S>,
    grad_bias: &mut Matrix<S>,
) -> LstmStepGrad<S> {
    let h = w.hidden_dim();
    let one = S::one();
    let mut dz = vec![S::zero(); 4 * h];
    let mut prev_cell = vec![S::zero(); h];
    for k in 0..h {
        let (i, f, g, o, tc) = (
            cache.input_gate[k],
            cache.forget_gate[k],
            cache.candidate[k],
            cache.output_gate[k],
            cache.tanh_cell[k],
        );
        let dc = d_cell[k] + d_hidden[k] * o * (one - tc * tc);
        let d_o = d_hidden[k] * tc;
        dz[k] = dc * g * i * (one - i);
        dz[h + k] = dc * cache.prev_cell[k] * f * (one - f);
        dz[2 * h + k] = dc * i * (one - g * g);
        dz[3 * h + k] = d_o * o * (one - o);
        prev_cell[k] = dc * f;
    }
    grad_weight.add_outer(one, &dz, &cache.concat);
    for (gb, d) in grad_bias.as_mut_slice().iter_mut().zip(&dz) {
        *gb += *d;
    }
    let mut d_concat = vec![S::zero(); cache.concat.len()];
    w.weight.tr_matvec_add_into(&dz, &mut d_concat);
    let prev_hidden = d_concat.split_off(cache.concat.len() - h);
    LstmStepGrad {
        input: d_concat,
        prev_hidden,
        prev_cell,
    }
}
