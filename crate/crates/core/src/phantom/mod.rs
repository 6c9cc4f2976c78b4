//! Deterministic synthetic pelvic phantoms and their on-disk format.
//!
//! A sample is a CT-like plane, an elliptical PTV, a set of non-overlapping
//! elliptical OARs and an analytic dose: 1 on the PTV and a Gaussian of the
//! Euclidean distance to the PTV outside it. Every sample is a pure function
//! of `(spec, index)`.

mod dataset;
mod edt;
mod format;

pub use dataset::{
    dataset_checksum, read_dataset, read_manifest, sample_file_name, write_dataset, Dataset, DatasetError, Manifest, Split,
    MANIFEST_FILE,
};
pub use edt::{distance_to_set, squared_distance_to_set};
pub use format::{decode_tctd, encode_dose, encode_sample, TctdContent, TctdError, DOSE_ONLY, TCTD_MAGIC, TCTD_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::plane::{Mask, Plane};
use crate::scalar::Scalar;

/// Rejection-sampling budget per structure.
pub const MAX_ATTEMPTS: usize = 1000;

/// Organ labels used when the phantom has the usual five OARs.
pub const PELVIC_OARS: [&str; 5] = ["Small", "FR", "FL", "BLA", "REC"];

#[derive(Debug, thiserror::Error)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error("could not place {structure} after {attempts} attempts")]
    Geometry { structure: String, attempts: usize },
    #[error("distance transform of an empty mask")]
    EmptyMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub n_oar: usize,
    /// Range of PTV semi-axes in pixels.
    pub ptv_axes: (f64, f64),
    /// Range of OAR semi-axes in pixels.
    pub oar_axes: (f64, f64),
    /// Dose falloff width in pixels.
    pub falloff_sigma: f64,
    pub prescription: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Geometry scaled to an `h x w` plane.
    pub fn desk(height: usize, width: usize) -> Self {
        let m = height.min(width) as f64;
        Self {
            height,
            width,
            n_oar: 5,
            ptv_axes: (0.1 * m, 0.2 * m),
            oar_axes: (0.04 * m, 0.09 * m),
            falloff_sigma: m / 16.0,
            prescription: 1.0,
            noise_std: 0.02,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: &str| Err(PhantomError::InvalidSpec(m.to_string()));
        if self.height == 0 || self.width == 0 {
            return bad("plane size must be positive");
        }
        if self.n_oar >= u32::MAX as usize {
            return bad("too many OARs");
        }
        for (name, (lo, hi)) in [("ptv_axes", self.ptv_axes), ("oar_axes", self.oar_axes)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(PhantomError::InvalidSpec(format!("{name} must satisfy 0 < min <= max, got ({lo}, {hi})")));
            }
        }
        if !(self.falloff_sigma > 0.0 && self.falloff_sigma.is_finite()) {
            return bad("falloff_sigma must be positive");
        }
        if !(self.prescription > 0.0 && self.prescription.is_finite()) {
            return bad("prescription must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be non-negative");
        }
        Ok(())
    }

    /// Input channels of a model fed by this phantom: CT, PTV and every OAR.
    pub fn channels(&self) -> usize {
        2 + self.n_oar
    }
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::desk(64, 64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub ct: Plane,
    pub ptv: Mask,
    pub oars: Vec<Mask>,
    pub dose: Plane,
}

impl Sample {
    pub fn dims(&self) -> (usize, usize) {
        self.ct.dims()
    }

    /// Network input `[1, 2 + n_oar, H, W]`: CT, PTV, OARs.
    pub fn input_tensor<F: Scalar>(&self) -> Tensor<F> {
        let (h, w) = self.dims();
        let mut data = Vec::with_capacity((2 + self.oars.len()) * h * w);
        data.extend(self.ct.data().iter().map(|&v| F::lit(v as f64)));
        for m in std::iter::once(&self.ptv).chain(&self.oars) {
            data.extend(m.bits().iter().map(|&b| if b { F::one() } else { F::zero() }));
        }
        Tensor::new(vec![1, 2 + self.oars.len(), h, w], data).expect("sample planes are consistent")
    }

    /// Ground-truth dose `[1, 1, H, W]`.
    pub fn dose_tensor<F: Scalar>(&self) -> Tensor<F> {
        plane_tensor(&self.dose)
    }

    /// `(name, mask)` for the PTV followed by each OAR.
    pub fn structures(&self) -> Vec<(String, &Mask)> {
        let mut out = vec![("PTV".to_string(), &self.ptv)];
        out.extend(self.oars.iter().enumerate().map(|(i, m)| (oar_name(i, self.oars.len()), m)));
        out
    }
}

pub fn oar_name(index: usize, n_oar: usize) -> String {
    if n_oar == PELVIC_OARS.len() {
        PELVIC_OARS[index].to_string()
    } else {
        format!("OAR{}", index + 1)
    }
}

/// `[1, 1, H, W]` view of a plane.
pub fn plane_tensor<F: Scalar>(plane: &Plane) -> Tensor<F> {
    let (h, w) = plane.dims();
    Tensor::new(vec![1, 1, h, w], plane.data().iter().map(|&v| F::lit(v as f64)).collect())
        .expect("plane is non-empty")
}

/// Plane from a tensor with exactly `H * W` elements (`[1,1,H,W]` etc).
pub fn tensor_plane<F: Scalar>(t: &Tensor<F>, height: usize, width: usize) -> Plane {
    Plane::new(height, width, t.data().iter().map(|v| v.as_f64() as f32).collect())
        .expect("tensor size matches plane")
}

struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn random(rng: &mut ChaCha8Rng, axes: (f64, f64)) -> Self {
        let a = rng.random_range(axes.0..=axes.1);
        let b = rng.random_range(axes.0..=axes.1);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        Self {
            cy: 0.0,
            cx: 0.0,
            a,
            b,
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    /// Half extents of the axis-aligned bounding box, (rows, cols).
    fn half_extents(&self) -> (f64, f64) {
        let ey = (self.a * self.a * self.sin * self.sin + self.b * self.b * self.cos * self.cos).sqrt();
        let ex = (self.a * self.a * self.cos * self.cos + self.b * self.b * self.sin * self.sin).sqrt();
        (ey, ex)
    }

    /// Centres the ellipse uniformly so that it keeps `border` pixels from every edge.
    fn place(&mut self, rng: &mut ChaCha8Rng, height: usize, width: usize, border: f64) -> bool {
        let (ey, ex) = self.half_extents();
        let (ry, rx) = ((ey + border, height as f64 - 1.0 - ey - border), (ex + border, width as f64 - 1.0 - ex - border));
        if ry.0 > ry.1 || rx.0 > rx.1 {
            return false;
        }
        self.cy = rng.random_range(ry.0..=ry.1);
        self.cx = rng.random_range(rx.0..=rx.1);
        true
    }

    fn rasterize(&self, height: usize, width: usize) -> Mask {
        Mask::from_fn(height, width, |r, c| {
            let (dy, dx) = (r as f64 - self.cy, c as f64 - self.cx);
            let u = (dx * self.cos + dy * self.sin) / self.a;
            let v = (-dx * self.sin + dy * self.cos) / self.b;
            u * u + v * v <= 1.0
        })
    }
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sample `index` of the phantom family described by `spec`.
pub fn generate_sample(spec: &PhantomSpec, index: u64) -> Result<Sample, PhantomError> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = sample_rng(spec.seed, index);

    let ptv = place_structure(&mut rng, spec.ptv_axes, h, w, 2.0 * spec.falloff_sigma, "PTV", |_| true)?;
    let mut occupied = ptv.clone();
    let mut oars = Vec::with_capacity(spec.n_oar);
    for i in 0..spec.n_oar {
        let name = oar_name(i, spec.n_oar);
        let m = place_structure(&mut rng, spec.oar_axes, h, w, 0.0, &name, |m| !m.intersects(&occupied))?;
        for (o, &b) in occupied.bits_mut().iter_mut().zip(m.bits()) {
            *o |= b;
        }
        oars.push(m);
    }

    let sq = squared_distance_to_set(&ptv)?;
    let two_var = 2.0 * spec.falloff_sigma * spec.falloff_sigma;
    let dose = Plane::from_fn(h, w, |r, c| (spec.prescription * (-sq[r * w + c] / two_var).exp()) as f32);

    let ct = synth_ct(&mut rng, spec, &ptv, &oars);
    Ok(Sample { ct, ptv, oars, dose })
}

fn place_structure(
    rng: &mut ChaCha8Rng,
    axes: (f64, f64),
    height: usize,
    width: usize,
    border: f64,
    name: &str,
    accept: impl Fn(&Mask) -> bool,
) -> Result<Mask, PhantomError> {
    for _ in 0..MAX_ATTEMPTS {
        let mut e = Ellipse::random(rng, axes);
        if !e.place(rng, height, width, border) {
            continue;
        }
        let m = e.rasterize(height, width);
        if !m.is_empty() && accept(&m) {
            return Ok(m);
        }
    }
    Err(PhantomError::Geometry {
        structure: name.to_string(),
        attempts: MAX_ATTEMPTS,
    })
}

/// Smooth background + per-structure offsets + Gaussian noise, clamped to [0, 1].
fn synth_ct(rng: &mut ChaCha8Rng, spec: &PhantomSpec, ptv: &Mask, oars: &[Mask]) -> Plane {
    let (h, w) = (spec.height, spec.width);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.02..0.06),
                rng.random_range(0.3..1.5),
                rng.random_range(0.3..1.5),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let offsets: Vec<f64> = oars.iter().map(|_| rng.random_range(-0.2..0.25)).collect();
    let noise = Normal::new(0.0, spec.noise_std).expect("noise_std validated");
    Plane::from_fn(h, w, |r, c| {
        let (y, x) = (r as f64 / h as f64, c as f64 / w as f64);
        let mut v = 0.35;
        for &(amp, fy, fx, phase) in &waves {
            v += amp * (std::f64::consts::TAU * (fy * y + fx * x) + phase).cos();
        }
        if ptv.get(r, c) {
            v += 0.2;
        }
        for (m, off) in oars.iter().zip(&offsets) {
            if m.get(r, c) {
                v += off;
            }
        }
        if spec.noise_std > 0.0 {
            v += noise.sample(rng);
        }
        v.clamp(0.0, 1.0) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dose_is_one_on_ptv_and_gaussian_outside() {
        let spec = PhantomSpec::default();
        let s = generate_sample(&spec, 3).unwrap();
        let d = distance_to_set(&s.ptv).unwrap();
        let (h, w) = s.dims();
        for r in 0..h {
            for c in 0..w {
                if s.ptv.get(r, c) {
                    assert_eq!(s.dose.get(r, c), 1.0);
                } else {
                    let dist = d.get(r, c) as f64;
                    let want = (-dist * dist / (2.0 * spec.falloff_sigma.powi(2))).exp();
                    assert!((s.dose.get(r, c) as f64 - want).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn falloff_at_one_sigma() {
        let mut spec = PhantomSpec::desk(64, 64);
        spec.falloff_sigma = 4.0;
        let s = generate_sample(&spec, 0).unwrap();
        let sq = squared_distance_to_set(&s.ptv).unwrap();
        let i = sq.iter().position(|&v| v == 16.0).expect("a pixel at distance 4");
        assert!((s.dose.data()[i] as f64 - (-0.5f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn structures_are_disjoint_and_deterministic() {
        let spec = PhantomSpec::default();
        for i in 0..5 {
            let s = generate_sample(&spec, i).unwrap();
            assert_eq!(s, generate_sample(&spec, i).unwrap());
            assert_eq!(s.oars.len(), 5);
            for o in &s.oars {
                assert!(!o.intersects(&s.ptv));
            }
            assert!(s.ct.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_ne!(generate_sample(&spec, 0).unwrap(), generate_sample(&spec, 1).unwrap());
    }

    #[test]
    fn unsatisfiable_geometry_is_an_error() {
        let mut spec = PhantomSpec::desk(16, 16);
        spec.ptv_axes = (10.0, 12.0);
        assert!(matches!(generate_sample(&spec, 0), Err(PhantomError::Geometry { .. })));
    }

    #[test]
    fn input_tensor_layout() {
        let s = generate_sample(&PhantomSpec::desk(32, 32), 0).unwrap();
        let t = s.input_tensor::<f64>();
        assert_eq!(t.shape(), &[1, 7, 32, 32]);
        let ptv_channel = &t.data()[32 * 32..2 * 32 * 32];
        assert_eq!(ptv_channel.iter().filter(|&&v| v == 1.0).count(), s.ptv.count());
    }
}
