//! Central finite-difference verification of analytic gradients.
//!
//! The analytic gradient is computed at the precision under test; the
//! numeric reference always runs in `f64`. Coordinates whose perturbation
//! moves any relu/hinge/abs input across zero are skipped, since the
//! finite difference straddles a kink there.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AutodiffError, Graph, Tensor, Var};
use crate::scalar::Scalar;

/// Builds a scalar loss from parameter leaves, at any precision.
pub trait LossBuilder {
    fn build<F: Scalar>(&self, g: &mut Graph<F>, params: &[Var]) -> Result<Var, AutodiffError>;
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tol: f64,
    /// Number of coordinates to compare; all coordinates when fewer exist.
    pub samples: usize,
    pub seed: u64,
    /// Fourth-order stencil `(8(f(+h) - f(-h)) - (f(+2h) - f(-2h))) / 12h`
    /// instead of the second-order `(f(+h) - f(-h)) / 2h`.
    pub five_point: bool,
}

impl GradCheckConfig {
    /// Tolerance 1e-6. The wider fourth-order stencil keeps the f64
    /// rounding noise of large losses well below the tolerance.
    pub fn double() -> Self {
        Self {
            step: 1e-3,
            tol: 1e-6,
            samples: 50,
            seed: 0,
            five_point: true,
        }
    }

    /// Tolerance 1e-3.
    pub fn single() -> Self {
        Self {
            step: 1e-3,
            tol: 1e-3,
            samples: 50,
            seed: 0,
            five_point: false,
        }
    }

    pub fn for_precision<F: Scalar>() -> Self {
        if F::LABEL == f64::LABEL {
            Self::double()
        } else {
            Self::single()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoordinateCheck {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub precision: &'static str,
    pub max_relative_error: f64,
    pub tol: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst: Option<CoordinateCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_relative_error < self.tol
    }
}

fn eval_f64<B: LossBuilder>(builder: &B, params: &[Tensor<f64>]) -> Result<(f64, u64), AutodiffError> {
    let mut g = Graph::<f64>::with_kink_tracking();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone(), false)).collect();
    let loss = builder.build(&mut g, &vars)?;
    let v = g.value(loss).item();
    if !v.is_finite() {
        return Err(AutodiffError::NonFinite(format!("loss evaluated to {v}")));
    }
    Ok((v, g.kink_signature()))
}

/// Compare analytic gradients at precision `F` against central differences.
///
/// Returns the largest `|analytic - numeric| / max(|numeric|, 1e-8)` over the sampled coordinates.
pub fn grad_check<F: Scalar, B: LossBuilder>(
    builder: &B,
    params: &[Tensor<f64>],
    config: &GradCheckConfig,
) -> Result<GradCheckReport, AutodiffError> {
    let mut g = Graph::<F>::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.cast::<F>(), true)).collect();
    let loss = builder.build(&mut g, &vars)?;
    if !g.value(loss).item().is_finite() {
        return Err(AutodiffError::NonFinite("loss is not finite".into()));
    }
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| match g.grad(v) {
            Some(gr) => gr.iter().map(|x| x.as_f64()).collect(),
            None => vec![0.0; p.numel()],
        })
        .collect();

    let (_, base_sig) = eval_f64(builder, params)?;
    let offsets: Vec<usize> = params
        .iter()
        .scan(0, |acc, p| {
            let o = *acc;
            *acc += p.numel();
            Some(o)
        })
        .collect();
    let total: usize = params.iter().map(Tensor::numel).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let order: Vec<usize> = sample(&mut rng, total, total).into_vec();

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport {
        precision: F::LABEL,
        max_relative_error: 0.0,
        tol: config.tol,
        checked: 0,
        skipped_kinks: 0,
        worst: None,
    };
    let h = config.step;
    for flat in order {
        if report.checked >= config.samples {
            break;
        }
        let pi = offsets.partition_point(|&o| o <= flat) - 1;
        let idx = flat - offsets[pi];
        let orig = work[pi].data()[idx];
        let mut eval_at = |delta: f64| {
            work[pi].data_mut()[idx] = orig + delta;
            let r = eval_f64(builder, &work);
            work[pi].data_mut()[idx] = orig;
            r
        };
        let (plus, sig_p) = eval_at(h)?;
        let (minus, sig_m) = eval_at(-h)?;
        let mut crossed = sig_p != base_sig || sig_m != base_sig;
        let numeric = if config.five_point && !crossed {
            let (plus2, sig_p2) = eval_at(2.0 * h)?;
            let (minus2, sig_m2) = eval_at(-2.0 * h)?;
            crossed = sig_p2 != base_sig || sig_m2 != base_sig;
            (8.0 * (plus - minus) - (plus2 - minus2)) / (12.0 * h)
        } else {
            (plus - minus) / (2.0 * h)
        };
        if crossed {
            report.skipped_kinks += 1;
            continue;
        }
        let a = analytic[pi][idx];
        let rel = (a - numeric).abs() / numeric.abs().max(1e-8);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst = Some(CoordinateCheck {
                param: pi,
                index: idx,
                analytic: a,
                numeric,
                relative_error: rel,
            });
        }
    }
    Ok(report)
}
