//! The dose-prediction network: residual CNN encoder, transformer
//! bottleneck over the flattened feature grid, and a skip-connected CNN
//! decoder whose per-scale features feed the triplet constraint.

mod arch;
pub mod checkpoint;
mod config;
mod params;

pub use arch::{flatten_tokens, unflatten_tokens, Architecture, PredictionBundle, TokenSequence};
pub use checkpoint::CheckpointError;
pub use config::ModelConfig;
pub use params::{Init, ParamSpec, ParamStore};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid model input: {0}")]
    Input(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// An architecture together with concrete parameter values.
#[derive(Debug, Clone)]
pub struct Model<F: Scalar> {
    arch: Architecture,
    params: ParamStore<F>,
}

impl<F: Scalar> Model<F> {
    /// Parameters are drawn in declaration order from a ChaCha8 stream seeded with `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let arch = Architecture::new(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ParamStore::initialize(arch.specs(), &mut rng);
        Ok(Self { arch, params })
    }

    pub fn from_parts(arch: Architecture, params: ParamStore<F>) -> Result<Self, ModelError> {
        let ok = arch.specs().len() == params.len()
            && arch
                .specs()
                .iter()
                .zip(params.values())
                .all(|(s, v)| s.shape == v.shape());
        if !ok {
            return Err(ModelError::Config("parameter store does not match architecture".into()));
        }
        Ok(Self { arch, params })
    }

    pub fn config(&self) -> &ModelConfig {
        self.arch.config()
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    /// Bind the parameters into `g` and run the full network on `x`.
    pub fn forward(&self, g: &mut Graph<F>, x: Var) -> Result<(Vec<Var>, PredictionBundle), ModelError> {
        let p = self.params.bind(g);
        let bundle = self.arch.forward(g, &p, x)?;
        Ok((p, bundle))
    }

    /// Forward pass on a stacked input, returning only the predicted dose.
    pub fn predict(&self, input: Tensor<F>) -> Result<Tensor<F>, ModelError> {
        let mut g = Graph::new();
        let x = g.input(input);
        let (_, bundle) = self.forward(&mut g, x)?;
        Ok(g.value(bundle.y_hat).clone())
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        Model {
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }
}
