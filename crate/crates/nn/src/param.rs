use std::collections::HashMap;

use rand::Rng;

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    /// Glorot uniform, `±sqrt(6 / (fan_in + fan_out))`. Rank-1 shapes use `fan_out = 1`.
    Xavier,
    Uniform(f64),
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}

/// Owns every parameter of a model. Names are unique and creation order is stable,
/// which keeps checkpoints and optimizer state aligned.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<ParamId> {
        let mut value = Tensor::zeros(shape);
        match init {
            Init::Zeros => {}
            Init::Xavier => {
                let (fan_out, fan_in) = match shape {
                    [n] => (1, *n),
                    [rows, cols] => (*rows, *cols),
                    _ => (shape[0], shape[1..].iter().product()),
                };
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                value
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.gen_range(-bound..=bound));
            }
            Init::Uniform(bound) => value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-bound..=bound)),
        }
        self.insert(name, value, true)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(NnError::DuplicateParameter(name));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name,
            value,
            grad,
            trainable,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
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

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| NnError::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    /// Adds a gradient buffer into the stored gradients of trainable parameters.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (param, grad) in self.params.iter_mut().zip(&grads.grads) {
            if let (true, Some(g)) = (param.trainable, grad) {
                for (acc, v) in param.grad.data_mut().iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for p in self.params.iter_mut().filter(|p| p.trainable) {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
        norm
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Gradients produced by one backward pass, indexed like the store they came from.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub(crate) grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub(crate) fn new(num_params: usize) -> Self {
        Gradients {
            grads: vec![None; num_params],
        }
    }

    pub(crate) fn add(&mut self, id: ParamId, g: &[f64]) {
        match &mut self.grads[id.0] {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, v)| *a += v),
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    /// Gradient for `id`, or `None` when no path from the loss reached it.
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// True when the parameter received no gradient or only exact zeros.
    pub fn is_zero(&self, id: ParamId) -> bool {
        self.get(id).map_or(true, |g| g.iter().all(|&v| v == 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xavier_bounds_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let w = store.add("w", &[4, 6], Init::Xavier, &mut rng).unwrap();
        let b = store.add("b", &[4], Init::Zeros, &mut rng).unwrap();
        let bound = (6.0f64 / 10.0).sqrt();
        assert!(store.value(w).data().iter().all(|v| v.abs() <= bound));
        assert!(store.value(b).data().iter().all(|&v| v == 0.0));
        assert!(store.add("w", &[1], Init::Zeros, &mut rng).is_err());
    }

    #[test]
    fn frozen_params_ignore_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let a = store.add("a", &[2], Init::Zeros, &mut rng).unwrap();
        store.set_trainable(a, false);
        let mut grads = Gradients::new(1);
        grads.add(a, &[1.0, 2.0]);
        store.accumulate(&grads);
        assert_eq!(store.grad(a).data(), &[0.0, 0.0]);
    }
}
