use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Normal with std `sqrt(2 / fan_in)`, for weights fed by a ReLU.
    Kaiming { fan_in: usize },
    /// Normal with std `sqrt(1 / fan_in)`, for weights fed by a linear path.
    KaimingLinear { fan_in: usize },
    Normal { std: f64 },
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub(crate) fn sample<F: Scalar, R: Rng>(&self, rng: &mut R) -> Tensor<F> {
        let normal = |std: f64, rng: &mut R| {
            let dist = Normal::new(0.0, std).expect("positive std");
            Tensor::from_fn(&self.shape, |_| F::lit(dist.sample(rng)))
        };
        match self.init {
            Init::Kaiming { fan_in } => normal((2.0 / fan_in as f64).sqrt(), rng),
            Init::KaimingLinear { fan_in } => normal((1.0 / fan_in as f64).sqrt(), rng),
            Init::Normal { std } => normal(std, rng),
            Init::Zeros => Tensor::zeros(&self.shape),
            Init::Ones => Tensor::full(&self.shape, F::one()),
        }
    }
}

/// Named parameter tensors plus their accumulated gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    names: Vec<String>,
    values: Vec<Tensor<F>>,
    grads: Vec<Vec<F>>,
}

impl<F: Scalar> ParamStore<F> {
    pub(crate) fn initialize(specs: &[ParamSpec], rng: &mut ChaCha8Rng) -> Self {
        let values: Vec<Tensor<F>> = specs.iter().map(|s| s.sample(rng)).collect();
        Self::from_parts(specs.iter().map(|s| s.name.clone()).collect(), values)
    }

    pub(crate) fn from_parts(names: Vec<String>, values: Vec<Tensor<F>>) -> Self {
        let grads = values.iter().map(|v| vec![F::zero(); v.numel()]).collect();
        Self { names, values, grads }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor<F>] {
        &self.values
    }

    pub fn value(&self, id: usize) -> &Tensor<F> {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Tensor<F> {
        &mut self.values[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn grads(&self) -> &[Vec<F>] {
        &self.grads
    }

    #[cfg(test)]
    pub(crate) fn grads_mut(&mut self) -> &mut [Vec<F>] {
        &mut self.grads
    }

    pub(crate) fn values_and_grads_mut(&mut self) -> (&mut [Tensor<F>], &[Vec<F>]) {
        (&mut self.values, &self.grads)
    }

    /// Insert every parameter into `g` as a gradient-tracking leaf.
    pub fn bind(&self, g: &mut Graph<F>) -> Vec<Var> {
        self.values
            .iter()
            .enumerate()
            .map(|(id, v)| g.param_leaf(v, id))
            .collect()
    }

    /// Add the parameter gradients recorded in `g` to the accumulators.
    pub fn accumulate_grads(&mut self, g: &Graph<F>) {
        for (id, grad) in g.param_grads() {
            crate::autodiff::kernels::add_into(&mut self.grads[id], grad);
        }
    }

    pub fn zero_grads(&mut self) {
        for gr in &mut self.grads {
            gr.iter_mut().for_each(|v| *v = F::zero());
        }
    }

    pub fn cast<G: Scalar>(&self) -> ParamStore<G> {
        ParamStore::from_parts(self.names.clone(), self.values.iter().map(Tensor::cast).collect())
    }
}
