use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{GradBuffer, ParamStore};
use super::scalar::Scalar;
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Whether a step follows the gradient or its negation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Descend,
    Ascend,
}

/// First-order optimizer over one [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Optimizer<S> {
    kind: OptimizerKind,
    learning_rate: S,
    first: Vec<Matrix<S>>,
    second: Vec<Matrix<S>>,
    steps: u64,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate: S::lit(learning_rate),
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update using `grads`.
    pub fn step(&mut self, store: &mut ParamStore<S>, grads: &GradBuffer<S>, direction: Direction) -> Result<()> {
        if !store.same_layout(grads) {
            return Err(shape_err("Optimizer::step", "gradient layout of the store", "mismatch"));
        }
        let sign = match direction {
            Direction::Descend => -S::one(),
            Direction::Ascend => S::one(),
        };
        if self.first.is_empty() && !matches!(self.kind, OptimizerKind::Sgd) {
            self.first = grads.tensors().iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
            if matches!(self.kind, OptimizerKind::Adam { .. }) {
                self.second = self.first.clone();
            }
        }
        self.steps += 1;
        let lr = self.learning_rate;
        let n = store.len();
        for t in 0..n {
            let id = super::params::ParamId(t);
            let g = grads.get(id).as_slice();
            match self.kind {
                OptimizerKind::Sgd => {
                    store.value_mut(id).add_scaled(sign * lr, grads.get(id))?;
                }
                OptimizerKind::Momentum { beta } => {
                    let beta = S::lit(beta);
                    let v = self.first[t].as_mut_slice();
                    for (vi, gi) in v.iter_mut().zip(g) {
                        *vi = beta * *vi + *gi;
                    }
                    store.value_mut(id).add_scaled(sign * lr, &self.first[t])?;
                }
                OptimizerKind::Adam { beta1, beta2, epsilon } => {
                    let (b1, b2, eps) = (S::lit(beta1), S::lit(beta2), S::lit(epsilon));
                    let step = self.steps as i32;
                    let c1 = S::one() - b1.powi(step);
                    let c2 = S::one() - b2.powi(step);
                    let m = self.first[t].as_mut_slice();
                    let v = self.second[t].as_mut_slice();
                    let w = store.value_mut(id).as_mut_slice();
                    for k in 0..g.len() {
                        m[k] = b1 * m[k] + (S::one() - b1) * g[k];
                        v[k] = b2 * v[k] + (S::one() - b2) * g[k] * g[k];
                        let mh = m[k] / c1;
                        let vh = v[k] / c2;
                        w[k] += sign * lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_store() -> ParamStore<f64> {
        let mut store = ParamStore::new(0);
        store.insert("x", Matrix::column(vec![3.0, -2.0])).unwrap();
        store
    }

    fn grad_of(store: &ParamStore<f64>) -> GradBuffer<f64> {
        let mut g = store.zeroed_grads();
        let id = super::super::params::ParamId(0);
        let vals: Vec<f64> = store.value(id).as_slice().iter().map(|v| 2.0 * v).collect();
        g.get_mut(id).as_mut_slice().copy_from_slice(&vals);
        g
    }

    #[test]
    fn every_kind_minimises_a_quadratic() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Momentum { beta: 0.9 }, OptimizerKind::adam()] {
            let mut store = quadratic_store();
            let mut opt = Optimizer::new(kind, 0.05);
            for _ in 0..500 {
                let g = grad_of(&store);
                opt.step(&mut store, &g, Direction::Descend).unwrap();
            }
            let norm: f64 = store.values()[0].as_slice().iter().map(|v| v * v).sum();
            assert!(norm < 1e-3, "{kind:?} left {norm}");
        }
    }

    #[test]
    fn sgd_ascent_moves_along_gradient() {
        let mut store = quadratic_store();
        let g = grad_of(&store);
        Optimizer::new(OptimizerKind::Sgd, 0.5).step(&mut store, &g, Direction::Ascend).unwrap();
        assert_eq!(store.values()[0].as_slice(), &[6.0, -4.0]);
    }
}
