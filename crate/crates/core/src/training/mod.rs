//! Composite objective, SGD with a poly schedule, and the training loop.
//!
//! The objective is `L = L_dose + omega * L_mtp`, where `L_dose` is the mean
//! absolute dose error and `L_mtp` the triplet constraint summed over the
//! decoder scales selected by the ablation [`Arm`].

mod log;
mod trainer;

pub use log::{StepRecord, TrainLog};
pub use trainer::{scale_separations, train, BestModel, TrainOutcome, Trainer};

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{AutodiffError, Graph, Var};
use crate::model::{ModelConfig, ModelError, ParamStore};
use crate::scalar::Scalar;
use crate::triplet::{Normalization, TripletConfig, TripletError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: usize, what: String },
    #[error("no training samples")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Triplet(#[from] TripletError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Ablation arms, each adding one component to the previous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Arm {
    /// CNN encoder-decoder with the dose loss only.
    A,
    /// Adds the transformer bottleneck.
    B,
    /// Adds the triplet constraint on the final decoder scale.
    C,
    /// Applies the triplet constraint at every decoder scale.
    #[default]
    D,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::A, Arm::B, Arm::C, Arm::D];

    pub fn uses_transformer(self) -> bool {
        self != Arm::A
    }

    pub fn uses_triplet(self) -> bool {
        matches!(self, Arm::C | Arm::D)
    }

    pub fn label(self) -> &'static str {
        match self {
            Arm::A => "Baseline",
            Arm::B => "Baseline + Trans",
            Arm::C => "Baseline + Trans + TL",
            Arm::D => "Baseline + Trans + TL + MSR",
        }
    }

    /// Sets the architecture switches this arm controls.
    pub fn configure(self, model: &mut ModelConfig) {
        model.use_transformer = self.uses_transformer();
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Arm::A => "A",
            Arm::B => "B",
            Arm::C => "C",
            Arm::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Arm::A),
            "B" => Ok(Arm::B),
            "C" => Ok(Arm::C),
            "D" => Ok(Arm::D),
            _ => Err(format!("unknown arm `{s}`, expected A, B, C or D")),
        }
    }
}

/// What arm C's single-scale constraint is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FinalTarget {
    /// The last decoder feature map.
    #[default]
    Features,
    /// The one-channel dose prediction.
    Prediction,
}

impl FromStr for FinalTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "features" => Ok(FinalTarget::Features),
            "prediction" => Ok(FinalTarget::Prediction),
            _ => Err(format!("unknown final target `{s}`, expected features or prediction")),
        }
    }
}

impl fmt::Display for FinalTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinalTarget::Features => "features",
            FinalTarget::Prediction => "prediction",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub omega: f64,
    pub margin: f64,
    pub patch_size: usize,
    pub normalization: Normalization,
    pub lr0: f64,
    pub poly_power: f64,
    pub epochs: usize,
    /// Samples whose gradients are averaged into one update.
    pub effective_batch: usize,
    /// Overrides the `epochs * ceil(n / effective_batch)` update budget.
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub arm: Arm,
    pub final_target: FinalTarget,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            omega: 0.01,
            margin: 0.3,
            patch_size: 5,
            normalization: Normalization::PatchArea,
            lr0: 1e-4,
            poly_power: 0.9,
            epochs: 1,
            effective_batch: 12,
            max_steps: None,
            seed: 0,
            arm: Arm::D,
            final_target: FinalTarget::Features,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return bad(format!("omega must be >= 0, got {}", self.omega));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be >= 0, got {}", self.margin));
        }
        if self.patch_size == 0 || self.patch_size % 2 == 0 {
            return bad(format!("patch size must be odd, got {}", self.patch_size));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be > 0, got {}", self.lr0));
        }
        if !(self.poly_power >= 0.0 && self.poly_power.is_finite()) {
            return bad(format!("poly power must be >= 0, got {}", self.poly_power));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.effective_batch == 0 {
            return bad("effective batch must be >= 1".into());
        }
        if self.max_steps == Some(0) {
            return bad("steps must be >= 1".into());
        }
        Ok(())
    }

    pub fn triplet(&self) -> TripletConfig {
        TripletConfig {
            patch_size: self.patch_size,
            margin: self.margin,
            normalization: self.normalization,
        }
    }

    /// Number of parameter updates for `num_samples` training samples.
    pub fn total_steps(&self, num_samples: usize) -> usize {
        self.max_steps
            .unwrap_or(self.epochs * num_samples.div_ceil(self.effective_batch))
    }
}

/// Mean absolute error over all pixels.
pub fn dose_loss<F: Scalar>(g: &mut Graph<F>, y_hat: Var, y: Var) -> Result<Var, AutodiffError> {
    let d = g.sub(y_hat, y)?;
    let a = g.abs(d);
    Ok(g.mean_all(a))
}

/// `l_dose + omega * l_mtp`.
pub fn total_loss<F: Scalar>(g: &mut Graph<F>, l_dose: Var, l_mtp: Var, omega: f64) -> Result<Var, AutodiffError> {
    let w = g.scale(l_mtp, F::lit(omega));
    g.add(l_dose, w)
}

/// `lr0 * (1 - step / max_steps)^power`, with `step` clamped to `[0, max_steps]`.
pub fn poly_lr(step: usize, max_steps: usize, lr0: f64, power: f64) -> f64 {
    if max_steps == 0 {
        return 0.0;
    }
    let frac = step.min(max_steps) as f64 / max_steps as f64;
    lr0 * (1.0 - frac).powf(power)
}

/// `p <- p - lr * g` for every parameter, then zero the gradients.
///
/// A non-finite gradient leaves every parameter untouched.
pub fn sgd_step<F: Scalar>(params: &mut ParamStore<F>, lr: f64, step: usize) -> Result<(), TrainError> {
    if let Some(id) = params.grads().iter().position(|g| g.iter().any(|v| !v.is_finite())) {
        let name = params.names()[id].clone();
        params.zero_grads();
        return Err(TrainError::NonFinite {
            step,
            what: format!("gradient of `{name}`"),
        });
    }
    let lr = F::lit(lr);
    let (values, grads) = params.values_and_grads_mut();
    for (v, grad) in values.iter_mut().zip(grads) {
        for (p, &g) in v.data_mut().iter_mut().zip(grad) {
            *p -= lr * g;
        }
    }
    params.zero_grads();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn dose_loss_mean_reduction() {
        let mut g = Graph::<f64>::new();
        let y_hat = g.leaf(Tensor::new(vec![2], vec![1.0, 3.0]).unwrap(), true);
        let y = g.input(Tensor::new(vec![2], vec![0.0, 0.0]).unwrap());
        let l = dose_loss(&mut g, y_hat, y).unwrap();
        assert_eq!(g.value(l).item(), 2.0);
        g.backward(l).unwrap();
        assert_eq!(g.grad(y_hat).unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn total_loss_value_and_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::scalar(0.5), true);
        let b = g.leaf(Tensor::scalar(2.0), true);
        let l = total_loss(&mut g, a, b, 0.01).unwrap();
        assert!((g.value(l).item() - 0.52).abs() < 1e-15);
        g.backward(l).unwrap();
        assert_eq!(g.grad(b).unwrap(), &[0.01]);
        assert_eq!(g.grad(a).unwrap(), &[1.0]);
    }

    #[test]
    fn poly_schedule() {
        assert_eq!(poly_lr(0, 100, 1e-4, 0.9), 1e-4);
        assert_eq!(poly_lr(100, 100, 1e-4, 0.9), 0.0);
        assert!((poly_lr(50, 100, 1e-4, 0.9) - 5.359e-5).abs() < 1e-8);
    }

    #[test]
    fn sgd_update_and_guard() {
        let mut p = ParamStore::from_parts(vec!["w".into()], vec![Tensor::scalar(1.0f64)]);
        p.grads_mut()[0][0] = 2.0;
        sgd_step(&mut p, 0.1, 1).unwrap();
        assert!((p.value(0).item() - 0.8).abs() < 1e-15);
        assert_eq!(p.grads()[0][0], 0.0);

        p.grads_mut()[0][0] = 5.0;
        sgd_step(&mut p, 0.0, 2).unwrap();
        assert!((p.value(0).item() - 0.8).abs() < 1e-15);

        p.grads_mut()[0][0] = f64::NAN;
        assert!(matches!(sgd_step(&mut p, 0.1, 3), Err(TrainError::NonFinite { step: 3, .. })));
        assert!((p.value(0).item() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn arm_switches() {
        assert!(!Arm::A.uses_transformer() && !Arm::A.uses_triplet());
        assert!(Arm::B.uses_transformer() && !Arm::B.uses_triplet());
        assert!(Arm::C.uses_triplet() && Arm::D.uses_triplet());
        assert_eq!("c".parse::<Arm>().unwrap(), Arm::C);
        assert!("E".parse::<Arm>().is_err());
    }
}
