use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor2;
use crate::error::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor2,
    pub grad: Tensor2,
    pub trainable: bool,
}

/// Initialization schemes.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Xavier { fan_in: usize, fan_out: usize },
    /// GRU weight matrix with `gates` column blocks, each Xavier-initialized on its own.
    XavierGates { gates: usize },
}

/// Named parameters with gradient buffers and a seeded initializer.
#[derive(Clone, Debug)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    rng: ChaCha8Rng,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        ParameterStore { params: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) -> ParamId {
        let mut value = Tensor2::zeros(rows, cols);
        match init {
            Init::Zeros => {}
            Init::Xavier { fan_in, fan_out } => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                value.data_mut().iter_mut().for_each(|v| *v = self.rng.gen_range(-bound..=bound));
            }
            Init::XavierGates { gates } => {
                let width = cols / gates;
                let bound = (6.0 / (rows + width) as f64).sqrt();
                value.data_mut().iter_mut().for_each(|v| *v = self.rng.gen_range(-bound..=bound));
            }
        }
        self.insert(name.into(), value, true)
    }

    pub fn insert(&mut self, name: String, value: Tensor2, trainable: bool) -> ParamId {
        let grad = Tensor2::zeros(value.rows(), value.cols());
        self.params.push(Parameter { name, value, grad, trainable });
        ParamId(self.params.len() - 1)
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

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Result<ParamId, NnError> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .map(ParamId)
            .ok_or_else(|| NnError::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0));
    }

    /// Adds `scale * grads` into the gradient buffers of trainable parameters.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for (p, g) in self.params.iter_mut().zip(&grads.grads) {
            if let (true, Some(g)) = (p.trainable, g) {
                p.grad.add_scaled(g, scale);
            }
        }
    }

    /// Squared L2 norm over trainable parameters.
    pub fn sq_norm(&self) -> f64 {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.sq_sum()).sum()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Per-parameter gradients produced by one backward pass.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub(crate) grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    pub fn new(n: usize) -> Self {
        Gradients { grads: vec![None; n] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor2> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub(crate) fn add(&mut self, id: ParamId, g: &Tensor2) {
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    /// Adds `scale * other` into `self`.
    pub fn merge(&mut self, other: &Gradients, scale: f64) {
        for (slot, g) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(g) = g {
                match slot {
                    Some(acc) => acc.add_scaled(g, scale),
                    None => {
                        let mut s = g.clone();
                        s.scale(scale);
                        *slot = Some(s);
                    }
                }
            }
        }
    }
}
