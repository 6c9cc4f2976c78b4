//! Finite-difference checks over every differentiable operation, the triplet
//! constraint and the full network with its training objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, AutodiffError, GradCheckConfig, GradCheckReport, Graph, LossBuilder, Tensor, Var};
use crate::model::{Architecture, ModelConfig, ModelError, ParamStore};
use crate::phantom::{generate_sample, PhantomSpec, Sample};
use crate::plane::Mask;
use crate::scalar::Scalar;
use crate::training::{dose_loss, total_loss};
use crate::triplet::{multiscale_triplet_loss, TripletConfig, TripletError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Conv2d { stride: usize },
    GroupNorm,
    LayerNorm,
    MatMul,
    Linear,
    Softmax,
    Relu,
    Abs,
    Hinge,
    Sqrt,
    Arithmetic,
    Broadcast,
    Reductions,
    ReshapePermute,
    Concat,
    Upsample,
    Gather,
    Batch,
    Attention,
    DoseLoss,
    Triplet,
    Model,
}

/// One named check: parameter tensors plus fixed auxiliary inputs.
pub struct GradCase {
    pub name: &'static str,
    kind: Kind,
    pub params: Vec<Tensor<f64>>,
    aux: Vec<Tensor<f64>>,
    mask: Option<Mask>,
    arch: Option<Architecture>,
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

fn aux<F: Scalar>(g: &mut Graph<F>, t: &Tensor<f64>) -> Var {
    g.input(t.cast())
}

/// `sum(y * w)` with a fixed random weight, so every output element matters.
fn project<F: Scalar>(g: &mut Graph<F>, y: Var, w: &Tensor<f64>) -> Result<Var, AutodiffError> {
    let w = aux(g, w);
    let p = g.mul(y, w)?;
    Ok(g.sum_all(p))
}

fn model_err(e: ModelError) -> AutodiffError {
    match e {
        ModelError::Autodiff(e) => e,
        other => AutodiffError::InvalidArgument(other.to_string()),
    }
}

fn triplet_err(e: TripletError) -> AutodiffError {
    match e {
        TripletError::Autodiff(e) => e,
        other => AutodiffError::InvalidArgument(other.to_string()),
    }
}

/// Configuration of the full-network check.
pub fn model_case_config() -> ModelConfig {
    let mut c = ModelConfig::desk(32, 32);
    c.base_width = 4;
    c.num_transformer_layers = 2;
    c.num_heads = 2;
    c
}

fn model_sample() -> Sample {
    let mut spec = PhantomSpec::desk(32, 32);
    spec.seed = 3;
    generate_sample(&spec, 0).expect("32x32 phantom geometry is satisfiable")
}

const TRIPLET: TripletConfig = TripletConfig {
    patch_size: 5,
    margin: 0.3,
    normalization: crate::triplet::Normalization::PatchArea,
};
const OMEGA: f64 = 0.01;

impl LossBuilder for GradCase {
    fn build<F: Scalar>(&self, g: &mut Graph<F>, p: &[Var]) -> Result<Var, AutodiffError> {
        let a = &self.aux;
        match self.kind {
            Kind::Conv2d { stride } => {
                let y = g.conv2d(p[0], p[1], p[2], stride, 1)?;
                let sq = g.square(y);
                let s = g.sum_all(sq);
                Ok(g.scale(s, F::lit(0.5)))
            }
            Kind::GroupNorm => {
                let y = g.group_norm(p[0], 2, p[1], p[2], F::lit(1e-5))?;
                project(g, y, &a[0])
            }
            Kind::LayerNorm => {
                let y = g.layer_norm(p[0], p[1], p[2], F::lit(1e-5))?;
                project(g, y, &a[0])
            }
            Kind::MatMul => {
                let y = g.matmul(p[0], p[1])?;
                project(g, y, &a[0])
            }
            Kind::Linear => {
                let y = g.linear(p[0], p[1], p[2])?;
                let sq = g.square(y);
                Ok(g.sum_all(sq))
            }
            Kind::Softmax => {
                let y = g.softmax_lastdim(p[0])?;
                project(g, y, &a[0])
            }
            Kind::Relu => {
                let y = g.relu(p[0]);
                project(g, y, &a[0])
            }
            Kind::Abs => {
                let y = g.abs(p[0]);
                project(g, y, &a[0])
            }
            Kind::Hinge => {
                let y = g.add_scalar(p[0], F::lit(0.3));
                let y = g.hinge(y);
                project(g, y, &a[0])
            }
            Kind::Sqrt => {
                let y = g.sqrt(p[0]);
                project(g, y, &a[0])
            }
            Kind::Arithmetic => {
                let s = g.add(p[0], p[1])?;
                let d = g.sub(p[0], p[1])?;
                let m = g.mul(s, d)?;
                let sq = g.square(p[1]);
                let sq = g.scale(sq, F::lit(0.5));
                let y = g.add(m, sq)?;
                let y = g.scale(y, F::lit(1.5));
                let y = g.add_scalar(y, F::lit(-0.25));
                project(g, y, &a[0])
            }
            Kind::Broadcast => {
                let y = g.add_broadcast(p[0], p[1])?;
                let z = g.sub_broadcast(y, p[2])?;
                let sq = g.square(z);
                project(g, sq, &a[0])
            }
            Kind::Reductions => {
                let sq = g.square(p[0]);
                let rows = g.sum_last_dim(sq);
                let w = project(g, rows, &a[0])?;
                let m = g.mean_all(p[0]);
                let m2 = g.square(m);
                let s = g.sum_all(p[1]);
                g.add_all(&[w, m2, s])
            }
            Kind::ReshapePermute => {
                let r = g.reshape(p[0], &[3, 4, 5])?;
                let y = g.permute(r, &[2, 0, 1])?;
                let sq = g.square(y);
                project(g, sq, &a[0])
            }
            Kind::Concat => {
                let y = g.concat_channels(p[0], p[1])?;
                let sq = g.square(y);
                project(g, sq, &a[0])
            }
            Kind::Upsample => {
                let y = g.upsample2x_nearest(p[0])?;
                let sq = g.square(y);
                project(g, sq, &a[0])
            }
            Kind::Gather => {
                let y = g.gather_pixels(p[0], &[0, 5, 7, 7, 24])?;
                let sq = g.square(y);
                project(g, sq, &a[0])
            }
            Kind::Batch => {
                let x0 = g.select_batch(p[0], 0)?;
                let x1 = g.select_batch(p[0], 1)?;
                let prod = g.mul(x0, x1)?;
                let y = g.stack_batch(&[prod, x0])?;
                project(g, y, &a[0])
            }
            Kind::Attention => {
                let y = g.attention(p[0], p[1], p[2], 2)?;
                project(g, y, &a[0])
            }
            Kind::DoseLoss => {
                let y = aux(g, &a[0]);
                dose_loss(g, p[0], y)
            }
            Kind::Triplet => {
                let mask = self.mask.as_ref().expect("triplet case has a mask");
                let t = multiscale_triplet_loss(g, p, mask, &TRIPLET).map_err(triplet_err)?;
                Ok(t.loss)
            }
            Kind::Model => {
                let arch = self.arch.as_ref().expect("model case has an architecture");
                let mask = self.mask.as_ref().expect("model case has a mask");
                let x = aux(g, &a[0]);
                let y = aux(g, &a[1]);
                let bundle = arch.forward(g, p, x).map_err(model_err)?;
                let l_dose = dose_loss(g, bundle.y_hat, y)?;
                let l_mtp = multiscale_triplet_loss(g, &bundle.features, mask, &TRIPLET).map_err(triplet_err)?;
                total_loss(g, l_dose, l_mtp.loss, OMEGA)
            }
        }
    }
}

fn case(name: &'static str, kind: Kind, params: Vec<Tensor<f64>>, aux: Vec<Tensor<f64>>) -> GradCase {
    GradCase {
        name,
        kind,
        params,
        aux,
        mask: None,
        arch: None,
    }
}

/// Every case, in a fixed order; `seed` fixes all random inputs.
pub fn all_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut out = vec![
        case(
            "conv2d",
            Kind::Conv2d { stride: 1 },
            vec![rand_tensor(r, &[1, 2, 5, 5], -1.0, 1.0), rand_tensor(r, &[3, 2, 3, 3], -0.5, 0.5), rand_tensor(r, &[3], -0.1, 0.1)],
            vec![],
        ),
        case(
            "conv2d_stride2",
            Kind::Conv2d { stride: 2 },
            vec![rand_tensor(r, &[1, 2, 6, 6], -1.0, 1.0), rand_tensor(r, &[3, 2, 3, 3], -0.5, 0.5), rand_tensor(r, &[3], -0.1, 0.1)],
            vec![],
        ),
        case(
            "group_norm",
            Kind::GroupNorm,
            vec![rand_tensor(r, &[1, 4, 4, 4], -1.0, 1.0), rand_tensor(r, &[4], 0.5, 1.5), rand_tensor(r, &[4], -0.5, 0.5)],
            vec![rand_tensor(r, &[1, 4, 4, 4], -1.0, 1.0)],
        ),
        case(
            "layer_norm",
            Kind::LayerNorm,
            vec![rand_tensor(r, &[8, 6], -1.0, 1.0), rand_tensor(r, &[6], 0.5, 1.5), rand_tensor(r, &[6], -0.5, 0.5)],
            vec![rand_tensor(r, &[8, 6], -1.0, 1.0)],
        ),
        case(
            "matmul",
            Kind::MatMul,
            vec![rand_tensor(r, &[2, 4, 5], -1.0, 1.0), rand_tensor(r, &[2, 5, 3], -1.0, 1.0)],
            vec![rand_tensor(r, &[2, 4, 3], -1.0, 1.0)],
        ),
        case(
            "linear",
            Kind::Linear,
            vec![rand_tensor(r, &[6, 5], -1.0, 1.0), rand_tensor(r, &[5, 4], -0.5, 0.5), rand_tensor(r, &[4], -0.1, 0.1)],
            vec![],
        ),
        case(
            "softmax",
            Kind::Softmax,
            vec![rand_tensor(r, &[6, 10], -2.0, 2.0)],
            vec![rand_tensor(r, &[6, 10], -1.0, 1.0)],
        ),
        case("relu", Kind::Relu, vec![rand_tensor(r, &[64], -1.0, 1.0)], vec![rand_tensor(r, &[64], -1.0, 1.0)]),
        case("abs", Kind::Abs, vec![rand_tensor(r, &[64], -1.0, 1.0)], vec![rand_tensor(r, &[64], -1.0, 1.0)]),
        case("hinge", Kind::Hinge, vec![rand_tensor(r, &[64], -1.0, 1.0)], vec![rand_tensor(r, &[64], -1.0, 1.0)]),
        case("sqrt", Kind::Sqrt, vec![rand_tensor(r, &[64], 0.2, 2.0)], vec![rand_tensor(r, &[64], -1.0, 1.0)]),
        case(
            "arithmetic",
            Kind::Arithmetic,
            vec![rand_tensor(r, &[4, 8], -1.0, 1.0), rand_tensor(r, &[4, 8], -1.0, 1.0)],
            vec![rand_tensor(r, &[4, 8], -1.0, 1.0)],
        ),
        case(
            "broadcast",
            Kind::Broadcast,
            vec![rand_tensor(r, &[5, 4, 6], -1.0, 1.0), rand_tensor(r, &[4, 6], -1.0, 1.0), rand_tensor(r, &[6], -1.0, 1.0)],
            vec![rand_tensor(r, &[5, 4, 6], -1.0, 1.0)],
        ),
        case(
            "reductions",
            Kind::Reductions,
            vec![rand_tensor(r, &[6, 9], -1.0, 1.0), rand_tensor(r, &[7], -1.0, 1.0)],
            vec![rand_tensor(r, &[6], -1.0, 1.0)],
        ),
        case(
            "reshape_permute",
            Kind::ReshapePermute,
            vec![rand_tensor(r, &[6, 10], -1.0, 1.0)],
            vec![rand_tensor(r, &[5, 3, 4], -1.0, 1.0)],
        ),
        case(
            "concat_channels",
            Kind::Concat,
            vec![rand_tensor(r, &[1, 2, 4, 4], -1.0, 1.0), rand_tensor(r, &[1, 3, 4, 4], -1.0, 1.0)],
            vec![rand_tensor(r, &[1, 5, 4, 4], -1.0, 1.0)],
        ),
        case(
            "upsample2x",
            Kind::Upsample,
            vec![rand_tensor(r, &[1, 4, 4, 4], -1.0, 1.0)],
            vec![rand_tensor(r, &[1, 4, 8, 8], -1.0, 1.0)],
        ),
        case(
            "gather_pixels",
            Kind::Gather,
            vec![rand_tensor(r, &[1, 12, 5, 5], -1.0, 1.0)],
            vec![rand_tensor(r, &[5, 12], -1.0, 1.0)],
        ),
        case(
            "batch_select_stack",
            Kind::Batch,
            vec![rand_tensor(r, &[2, 3, 3, 3], -1.0, 1.0)],
            vec![rand_tensor(r, &[2, 3, 3, 3], -1.0, 1.0)],
        ),
        case(
            "attention",
            Kind::Attention,
            vec![rand_tensor(r, &[6, 4], -1.0, 1.0), rand_tensor(r, &[6, 4], -1.0, 1.0), rand_tensor(r, &[6, 4], -1.0, 1.0)],
            vec![rand_tensor(r, &[6, 4], -1.0, 1.0)],
        ),
        case(
            "dose_loss",
            Kind::DoseLoss,
            vec![rand_tensor(r, &[1, 1, 8, 8], -1.0, 1.0)],
            vec![rand_tensor(r, &[1, 1, 8, 8], -1.0, 1.0)],
        ),
    ];

    let mask = Mask::from_fn(20, 20, |y, x| {
        let (dy, dx) = (y as f64 - 9.3, x as f64 - 10.1);
        dy * dy / 36.0 + dx * dx / 20.0 <= 1.0
    });
    out.push(GradCase {
        name: "triplet_multiscale",
        kind: Kind::Triplet,
        params: vec![
            rand_tensor(r, &[1, 3, 5, 5], -1.0, 1.0),
            rand_tensor(r, &[1, 3, 10, 10], -1.0, 1.0),
            rand_tensor(r, &[1, 3, 20, 20], -1.0, 1.0),
        ],
        aux: vec![],
        mask: Some(mask),
        arch: None,
    });

    let arch = Architecture::new(model_case_config()).expect("model check configuration is valid");
    let store: ParamStore<f64> = crate::model::Model::<f64>::new(model_case_config(), seed)
        .expect("valid configuration")
        .params()
        .clone();
    let sample = model_sample();
    out.push(GradCase {
        name: "tctrans_full",
        kind: Kind::Model,
        params: store.values().to_vec(),
        aux: vec![sample.input_tensor(), sample.dose_tensor()],
        mask: Some(sample.ptv.clone()),
        arch: Some(arch),
    });
    out
}

/// Names of every case, for `--ops` filtering.
pub fn case_names() -> Vec<&'static str> {
    all_cases(0).iter().map(|c| c.name).collect()
}

pub struct CaseResult {
    pub name: &'static str,
    pub num_params: usize,
    pub report: GradCheckReport,
}

impl CaseResult {
    /// Passed the tolerance and compared enough coordinates.
    pub fn passed(&self, min_checked: usize) -> bool {
        self.report.passed() && self.report.checked >= min_checked.min(self.num_params)
    }
}

/// Runs the cases whose names are in `only` (all when empty) at precision `F`.
pub fn run_suite<F: Scalar>(
    only: &[String],
    config: &GradCheckConfig,
    seed: u64,
) -> Result<Vec<CaseResult>, AutodiffError> {
    let cases = all_cases(seed);
    if let Some(unknown) = only.iter().find(|o| !cases.iter().any(|c| c.name == o.as_str())) {
        return Err(AutodiffError::InvalidArgument(format!("unknown gradcheck op `{unknown}`")));
    }
    cases
        .iter()
        .filter(|c| only.is_empty() || only.iter().any(|o| o == c.name))
        .map(|c| {
            let report = grad_check::<F, _>(c, &c.params, config)?;
            Ok(CaseResult {
                name: c.name,
                num_params: c.params.iter().map(Tensor::numel).sum(),
                report,
            })
        })
        .collect()
}
