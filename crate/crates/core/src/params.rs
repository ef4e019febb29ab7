//! Named, persistent model parameters.
//!
//! Components allocate their weights in a [`ParamStore`] and keep only the
//! returned [`ParamId`]s. Each forward pass binds those ids onto a fresh
//! [`Tape`](crate::tensor::Tape); gradients come back into the store's
//! per-parameter grad buffers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// Random stream used for weight initialization and data shuffling.
pub type InitRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Learning-rate group; the optimizer scales each group's step size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Default,
    /// Adapters on ingested (pre-computed) text features, stepped at a
    /// reduced rate.
    Ingested,
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub trainable: bool,
    pub group: ParamGroup,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad: None,
            trainable,
            group: ParamGroup::Default,
        });
        ParamId(self.params.len() - 1)
    }

    /// Trainable weight drawn uniformly from `±1/√fan_in`.
    pub fn uniform(
        &mut self,
        name: impl Into<String>,
        shape: impl Into<Vec<usize>>,
        fan_in: usize,
        rng: &mut InitRng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut t = Tensor::zeros(shape);
        for x in t.data_mut() {
            *x = rng.random_range(-bound..bound);
        }
        self.add(name, t, true)
    }

    pub fn set_group(&mut self, id: ParamId, group: ParamGroup) {
        self.params[id.0].group = group;
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Parameter)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of trainable scalars; frozen tensors are excluded.
    pub fn count_trainable(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.numel())
            .sum()
    }

    /// Trainable scalars in parameters whose name starts with `prefix`.
    pub fn count_trainable_with_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable && p.name.starts_with(prefix))
            .map(|p| p.value.numel())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn uniform_init_respects_bound_and_seed() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        let ia = a.uniform("w", vec![4, 25], 25, &mut InitRng::seed_from_u64(3));
        let ib = b.uniform("w", vec![4, 25], 25, &mut InitRng::seed_from_u64(3));
        assert_eq!(a.value(ia), b.value(ib));
        assert!(a.value(ia).data().iter().all(|x| x.abs() < 0.2));
    }

    #[test]
    fn frozen_parameters_not_counted() {
        let mut s = ParamStore::new();
        s.add("table", Tensor::zeros(vec![10, 3]), false);
        s.add("w", Tensor::zeros(vec![3, 2]), true);
        assert_eq!(s.count_trainable(), 6);
        assert_eq!(s.find("w").map(ParamId::index), Some(1));
    }
}
