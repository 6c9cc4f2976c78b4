use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::log::{StepRecord, TrainLog};
use super::{dose_loss, poly_lr, sgd_step, total_loss, Arm, FinalTarget, TrainConfig, TrainError};
use crate::autodiff::{Graph, Var};
use crate::model::Model;
use crate::phantom::Sample;
use crate::plane::Mask;
use crate::scalar::Scalar;
use crate::triplet::{anchor_distances, margin_patches, multiscale_triplet_loss, triplet_constraint_loss};

/// Mean `d- - d+` over the margin patches of each feature map (deepest first).
///
/// Plain-value diagnostic; does not touch the graph's gradients.
pub fn scale_separations<F: Scalar>(g: &Graph<F>, features: &[Var], mask: &Mask, patch_size: usize) -> Vec<Option<f64>> {
    let r_total = features.len();
    features
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let scaled = mask.downsample_nearest(1 << (r_total - 1 - i));
            let set = margin_patches(&scaled, patch_size).ok()?;
            if set.is_empty() {
                return None;
            }
            let t = g.value(f);
            let sum: f64 = set
                .patches
                .iter()
                .map(|p| {
                    let (dp, dm) = anchor_distances(t, scaled.width(), p);
                    dm - dp
                })
                .sum();
            Some(sum / set.len() as f64)
        })
        .collect()
}

struct SampleStats {
    l_dose: f64,
    l_mtp: f64,
    l_total: f64,
    separations: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct BestModel<F: Scalar> {
    pub epoch: usize,
    pub val_l_dose: f64,
    pub model: Model<F>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F: Scalar> {
    pub model: Model<F>,
    /// Lowest mean validation `L_dose` seen at an epoch end.
    pub best: Option<BestModel<F>>,
    pub log: TrainLog,
}

/// Stateful training loop. The model it holds is always the last finite one.
pub struct Trainer<F: Scalar> {
    model: Model<F>,
    config: TrainConfig,
    rng: ChaCha8Rng,
    step: usize,
    log: TrainLog,
    best: Option<BestModel<F>>,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(model: Model<F>, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        if model.config().use_transformer != config.arm.uses_transformer() {
            return Err(TrainError::Config(format!(
                "arm {} expects use_transformer = {}",
                config.arm,
                config.arm.uses_transformer()
            )));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            model,
            config,
            rng,
            step: 0,
            log: TrainLog::default(),
            best: None,
        })
    }

    pub fn model(&self) -> &Model<F> {
        &self.model
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn into_outcome(self) -> TrainOutcome<F> {
        TrainOutcome {
            model: self.model,
            best: self.best,
            log: self.log,
        }
    }

    fn check_sample(&self, s: &Sample) -> Result<(), TrainError> {
        let c = self.model.config();
        if s.dims() != (c.height, c.width) || s.oars.len() + 2 != c.in_channels {
            return Err(TrainError::Config(format!(
                "sample is {:?} with {} channels, model expects {}x{} with {}",
                s.dims(),
                s.oars.len() + 2,
                c.height,
                c.width,
                c.in_channels
            )));
        }
        Ok(())
    }

    /// Forward one sample, and when `weight` is given backpropagate `weight * L`
    /// into the parameter accumulators.
    fn sample_pass(&mut self, s: &Sample, weight: Option<f64>) -> Result<SampleStats, TrainError> {
        let mut g = Graph::new();
        let x = g.input(s.input_tensor());
        let (_, bundle) = self.model.forward(&mut g, x)?;
        let y = g.input(s.dose_tensor());
        let l_dose = dose_loss(&mut g, bundle.y_hat, y)?;
        let tc = self.config.triplet();
        let l_mtp = match self.config.arm {
            Arm::A | Arm::B => None,
            Arm::C => {
                let f = match self.config.final_target {
                    FinalTarget::Features => *bundle.features.last().expect("decoder has a layer"),
                    FinalTarget::Prediction => bundle.y_hat,
                };
                let r = bundle.features.len();
                Some(triplet_constraint_loss(&mut g, f, &s.ptv, &tc, r)?.loss)
            }
            Arm::D => Some(multiscale_triplet_loss(&mut g, &bundle.features, &s.ptv, &tc)?.loss),
        };
        let total = match l_mtp {
            Some(m) => total_loss(&mut g, l_dose, m, self.config.omega)?,
            None => l_dose,
        };
        let value = |g: &Graph<F>, v: Var| g.value(v).item().as_f64();
        let stats = SampleStats {
            l_dose: value(&g, l_dose),
            l_mtp: l_mtp.map_or(0.0, |m| value(&g, m)),
            l_total: value(&g, total),
            separations: scale_separations(&g, &bundle.features, &s.ptv, tc.patch_size),
        };
        if !stats.l_total.is_finite() {
            return Err(TrainError::NonFinite {
                step: self.step + 1,
                what: "loss".into(),
            });
        }
        if let Some(w) = weight {
            let scaled = g.scale(total, F::lit(w));
            g.backward(scaled)?;
            self.model.params_mut().accumulate_grads(&g);
        }
        Ok(stats)
    }

    /// One parameter update averaged over `batch`.
    pub fn step_on(&mut self, batch: &[&Sample], total_steps: usize) -> Result<&StepRecord, TrainError> {
        if batch.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let lr = poly_lr(self.step, total_steps, self.config.lr0, self.config.poly_power);
        let w = 1.0 / batch.len() as f64;
        let scales = self.model.config().num_dec_layers();
        let (mut l_dose, mut l_mtp, mut l_total) = (0.0, 0.0, 0.0);
        let mut sep_sum = vec![0.0; scales];
        let mut sep_count = vec![0usize; scales];
        for s in batch {
            let st = self.check_sample(s).and_then(|_| self.sample_pass(s, Some(w)));
            let st = match st {
                Ok(st) => st,
                Err(e) => {
                    self.model.params_mut().zero_grads();
                    return Err(e);
                }
            };
            l_dose += st.l_dose;
            l_mtp += st.l_mtp;
            l_total += st.l_total;
            for (r, sep) in st.separations.iter().enumerate() {
                if let Some(v) = sep {
                    sep_sum[r] += v;
                    sep_count[r] += 1;
                }
            }
        }
        sgd_step(self.model.params_mut(), lr, self.step + 1)?;
        self.step += 1;
        let n = batch.len() as f64;
        self.log.records.push(StepRecord {
            step: self.step,
            lr,
            l_dose: l_dose / n,
            l_mtp: l_mtp / n,
            l_total: l_total / n,
            separations: sep_sum
                .iter()
                .zip(&sep_count)
                .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
                .collect(),
        });
        Ok(self.log.records.last().expect("just pushed"))
    }

    /// Mean `L_dose` over `samples` without touching gradients.
    pub fn evaluate(&mut self, samples: &[Sample]) -> Result<f64, TrainError> {
        let mut sum = 0.0;
        for s in samples {
            self.check_sample(s)?;
            sum += self.sample_pass(s, None)?.l_dose;
        }
        Ok(sum / samples.len() as f64)
    }

    /// Runs the configured update budget over shuffled epochs of `train`.
    pub fn run(&mut self, train: &[Sample], val: &[Sample]) -> Result<(), TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let total = self.config.total_steps(train.len());
        let mut epoch = 0;
        while self.step < total {
            epoch += 1;
            let started = Instant::now();
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.config.effective_batch) {
                if self.step >= total {
                    break;
                }
                let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
                self.step_on(&batch, total)?;
            }
            self.log.epoch_seconds.push(started.elapsed().as_secs_f64());
            if !val.is_empty() {
                let v = self.evaluate(val)?;
                self.log.val_l_dose.push(v);
                if self.best.as_ref().is_none_or(|b| v < b.val_l_dose) {
                    self.best = Some(BestModel {
                        epoch,
                        val_l_dose: v,
                        model: self.model.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Trains `model` on `train`, tracking the best validation `L_dose` per epoch.
///
/// On failure the returned error is paired with the last finite model.
pub fn train<F: Scalar>(
    model: Model<F>,
    config: TrainConfig,
    train: &[Sample],
    val: &[Sample],
) -> Result<TrainOutcome<F>, (TrainError, Box<TrainOutcome<F>>)> {
    let mut t = match Trainer::new(model.clone(), config) {
        Ok(t) => t,
        Err(e) => {
            return Err((
                e,
                Box::new(TrainOutcome {
                    model,
                    best: None,
                    log: TrainLog::default(),
                }),
            ))
        }
    };
    match t.run(train, val) {
        Ok(()) => Ok(t.into_outcome()),
        Err(e) => Err((e, Box::new(t.into_outcome()))),
    }
}
