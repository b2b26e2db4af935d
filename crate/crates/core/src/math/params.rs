use super::matrix::Matrix;
use super::scalar::Scalar;
use crate::error::{shape_err, Error, Result};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Gradient tensors shaped like the parameters of one store.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer<S> {
    tensors: Vec<Matrix<S>>,
}

impl<S: Scalar> GradBuffer<S> {
    pub fn get(&self, id: ParamId) -> &Matrix<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix<S> {
        &mut self.tensors[id.0]
    }

    /// Mutable access to two distinct tensors at once.
    pub fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut Matrix<S>, &mut Matrix<S>) {
        assert_ne!(a, b, "pair_mut needs distinct tensors");
        if a.0 < b.0 {
            let (lo, hi) = self.tensors.split_at_mut(b.0);
            (&mut lo[a.0], &mut hi[0])
        } else {
            let (lo, hi) = self.tensors.split_at_mut(a.0);
            (&mut hi[0], &mut lo[b.0])
        }
    }

    pub fn tensors(&self) -> &[Matrix<S>] {
        &self.tensors
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(S::zero()));
    }

    pub fn scale(&mut self, alpha: S) {
        self.tensors.iter_mut().for_each(|t| t.scale(alpha));
    }

    /// `self += alpha * other`; both buffers must come from the same store layout.
    pub fn add_scaled(&mut self, alpha: S, other: &GradBuffer<S>) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(shape_err("GradBuffer::add_scaled", self.tensors.len(), other.tensors.len()));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_scaled(alpha, b)?;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> S {
        self.tensors
            .iter()
            .flat_map(|t| t.as_slice().iter())
            .fold(S::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }
}

/// Named parameter tensors, each paired with a same-shaped gradient
/// accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    values: Vec<Matrix<S>>,
    grads: GradBuffer<S>,
    seed: u64,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new(seed: u64) -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: GradBuffer { tensors: Vec::new() },
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Adds a tensor; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix<S>) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::Invariant(format!("duplicate parameter name `{name}`")));
        }
        self.grads.tensors.push(Matrix::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.names.push(name);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Matrix<S> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix<S> {
        &mut self.values[id.0]
    }

    pub fn values(&self) -> &[Matrix<S>] {
        &self.values
    }

    pub fn grads(&self) -> &GradBuffer<S> {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut GradBuffer<S> {
        &mut self.grads
    }

    pub fn grad(&self, id: ParamId) -> &Matrix<S> {
        self.grads.get(id)
    }

    /// A fresh zeroed buffer with this store's layout.
    pub fn zeroed_grads(&self) -> GradBuffer<S> {
        GradBuffer {
            tensors: self.values.iter().map(|v| Matrix::zeros(v.rows(), v.cols())).collect(),
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.zero();
    }

    pub fn set_grads(&mut self, grads: GradBuffer<S>) -> Result<()> {
        if !self.same_layout(&grads) {
            return Err(shape_err("ParamStore::set_grads", "matching layout", "different layout"));
        }
        self.grads = grads;
        Ok(())
    }

    pub fn same_layout(&self, grads: &GradBuffer<S>) -> bool {
        grads.tensors.len() == self.values.len()
            && grads
                .tensors
                .iter()
                .zip(&self.values)
                .all(|(g, v)| g.shape() == v.shape())
    }

    /// Flat view index -> (tensor, offset) for the gradient checker.
    pub(crate) fn scalar_mut(&mut self, id: ParamId, offset: usize) -> &mut S {
        &mut self.values[id.0].as_mut_slice()[offset]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Matrix::is_finite)
    }

    /// Bitwise equality of names and values (gradients ignored).
    pub fn values_identical(&self, other: &ParamStore<S>) -> bool {
        self.names == other.names
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| {
                a.shape() == b.shape()
                    && a
                        .as_slice()
                        .iter()
                        .zip(b.as_slice())
                        .all(|(x, y)| x.to_f64().map(f64::to_bits) == y.to_f64().map(f64::to_bits))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_param_has_one_matching_grad() {
        let mut store = ParamStore::<f64>::new(1);
        let a = store.insert("a", Matrix::zeros(2, 3)).unwrap();
        let b = store.insert("b", Matrix::column(vec![1.0, 2.0])).unwrap();
        assert_eq!(store.grad(a).shape(), (2, 3));
        assert_eq!(store.grad(b).shape(), (2, 1));
        assert!(store.insert("a", Matrix::zeros(1, 1)).is_err());
        assert_eq!(store.num_scalars(), 8);
    }

    #[test]
    fn zeroing_grads_keeps_values() {
        let mut store = ParamStore::<f64>::new(1);
        let b = store.insert("b", Matrix::column(vec![1.0, 2.0])).unwrap();
        store.grads_mut().get_mut(b).fill(3.0);
        let before = store.value(b).clone();
        store.zero_grads();
        assert_eq!(store.value(b), &before);
        assert_eq!(store.grad(b).as_slice(), &[0.0, 0.0]);
    }
}
