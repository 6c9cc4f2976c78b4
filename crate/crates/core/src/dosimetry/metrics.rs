use super::DosimetryError;
use crate::plane::{Mask, Plane};

pub const DEFAULT_DVH_BINS: usize = 256;

/// Heterogeneity index convention reported alongside the metrics.
pub const HI_FORMULA: &str = "HI = (D2 - D98) / D50";

fn masked(dose: &Plane, mask: &Mask) -> Result<Vec<f32>, DosimetryError> {
    if dose.dims() != mask.dims() {
        return Err(DosimetryError::Misaligned {
            plane: dose.dims(),
            mask: mask.dims(),
        });
    }
    if mask.is_empty() {
        return Err(DosimetryError::EmptyMask);
    }
    Ok(mask.select(dose))
}

/// `Dx`: the dose at rank `ceil(x * n / 100)` of the masked doses sorted descending.
///
/// At least `x` percent of the structure receives this dose or more.
pub fn dose_at_volume(dose: &Plane, mask: &Mask, x: f64) -> Result<f64, DosimetryError> {
    if !(x > 0.0 && x <= 100.0) {
        return Err(DosimetryError::InvalidPercent(x));
    }
    let mut v = masked(dose, mask)?;
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v[rank(x, v.len()) - 1] as f64)
}

fn rank(x: f64, n: usize) -> usize {
    ((x * n as f64 / 100.0).ceil() as usize).clamp(1, n)
}

pub fn mean_dose(dose: &Plane, mask: &Mask) -> Result<f64, DosimetryError> {
    let v = masked(dose, mask)?;
    Ok(v.iter().map(|&d| d as f64).sum::<f64>() / v.len() as f64)
}

pub fn heterogeneity_index(dose: &Plane, ptv: &Mask) -> Result<f64, DosimetryError> {
    let d2 = dose_at_volume(dose, ptv, 2.0)?;
    let d98 = dose_at_volume(dose, ptv, 98.0)?;
    let d50 = dose_at_volume(dose, ptv, 50.0)?;
    if d50 == 0.0 {
        return Err(DosimetryError::UndefinedHi);
    }
    Ok((d2 - d98) / d50)
}

/// Cumulative dose-volume histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct DvhCurve {
    pub dose_bins: Vec<f64>,
    /// Fraction of the structure receiving at least the matching bin dose.
    pub volume_fraction: Vec<f64>,
}

impl DvhCurve {
    /// Largest bin dose still covering `fraction` of the volume.
    pub fn dose_at_fraction(&self, fraction: f64) -> f64 {
        self.dose_bins
            .iter()
            .zip(&self.volume_fraction)
            .filter(|(_, &v)| v >= fraction)
            .map(|(&d, _)| d)
            .last()
            .unwrap_or(self.dose_bins[0])
    }

    pub fn bin_width(&self) -> f64 {
        self.dose_bins[1] - self.dose_bins[0]
    }
}

/// `num_bins` evenly spaced bins from `min(0, min dose)` to the maximum masked dose.
pub fn dvh(dose: &Plane, mask: &Mask, num_bins: usize) -> Result<DvhCurve, DosimetryError> {
    if num_bins < 2 {
        return Err(DosimetryError::TooFewBins(num_bins));
    }
    let mut v = masked(dose, mask)?;
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    let lo = (v[0] as f64).min(0.0);
    let hi = v[n - 1] as f64;
    let step = (hi - lo) / (num_bins - 1) as f64;
    let dose_bins: Vec<f64> = (0..num_bins)
        .map(|b| if b == num_bins - 1 { hi } else { lo + b as f64 * step })
        .collect();
    let volume_fraction = dose_bins
        .iter()
        .map(|&d| {
            let below = v.partition_point(|&x| (x as f64) < d);
            (n - below) as f64 / n as f64
        })
        .collect();
    Ok(DvhCurve {
        dose_bins,
        volume_fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureMetrics {
    pub d98: f64,
    pub d95: f64,
    pub d50: f64,
    pub d2: f64,
    pub dmean: f64,
}

impl StructureMetrics {
    /// `(name, value)` in report order.
    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("D98", self.d98),
            ("D95", self.d95),
            ("D50", self.d50),
            ("D2", self.d2),
            ("Dmean", self.dmean),
        ]
    }

    /// `(D2 - D98) / D50`, `None` when D50 is zero.
    pub fn hi(&self) -> Option<f64> {
        (self.d50 != 0.0).then(|| (self.d2 - self.d98) / self.d50)
    }
}

pub fn structure_metrics(dose: &Plane, mask: &Mask) -> Result<StructureMetrics, DosimetryError> {
    Ok(StructureMetrics {
        d98: dose_at_volume(dose, mask, 98.0)?,
        d95: dose_at_volume(dose, mask, 95.0)?,
        d50: dose_at_volume(dose, mask, 50.0)?,
        d2: dose_at_volume(dose, mask, 2.0)?,
        dmean: mean_dose(dose, mask)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureErrors {
    pub structure: String,
    pub abs_d98: f64,
    pub abs_d95: f64,
    pub abs_dmean: f64,
}

/// `|metric(pred) - metric(gt)|` for every named structure.
pub fn abs_error_metrics(
    pred: &Plane,
    gt: &Plane,
    structures: &[(String, &Mask)],
) -> Result<Vec<StructureErrors>, DosimetryError> {
    structures
        .iter()
        .map(|(name, mask)| {
            let p = structure_metrics(pred, mask)?;
            let g = structure_metrics(gt, mask)?;
            Ok(StructureErrors {
                structure: name.clone(),
                abs_d98: (p.d98 - g.d98).abs(),
                abs_d95: (p.d95 - g.d95).abs(),
                abs_dmean: (p.dmean - g.dmean).abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, f: impl Fn(usize) -> f32) -> (Plane, Mask) {
        (Plane::from_fn(1, n, |_, c| f(c)), Mask::from_fn(1, n, |_, _| true))
    }

    #[test]
    fn worked_dx_example() {
        let (p, m) = ramp(100, |c| (c + 1) as f32);
        assert_eq!(dose_at_volume(&p, &m, 95.0).unwrap(), 6.0);
        assert_eq!(dose_at_volume(&p, &m, 100.0).unwrap(), 1.0);
        assert_eq!(dose_at_volume(&p, &m, 2.0).unwrap(), 99.0);
        assert!(dose_at_volume(&p, &m, 0.0).is_err());
        assert!(dose_at_volume(&p, &m, 100.5).is_err());
    }

    #[test]
    fn uniform_dose() {
        let p = Plane::filled(4, 4, 0.7);
        let m = Mask::from_fn(4, 4, |r, _| r > 0);
        for x in [1.0, 2.0, 50.0, 95.0, 100.0] {
            assert_eq!(dose_at_volume(&p, &m, x).unwrap(), 0.7f32 as f64);
        }
        assert_eq!(heterogeneity_index(&p, &m).unwrap(), 0.0);
        let c = dvh(&p, &m, 8).unwrap();
        for (d, v) in c.dose_bins.iter().zip(&c.volume_fraction) {
            assert_eq!(*v, if *d <= 0.7f32 as f64 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn hi_on_linear_ramp() {
        let (p, m) = ramp(1000, |c| 0.9 + 0.2 * c as f32 / 999.0);
        let hi = heterogeneity_index(&p, &m).unwrap();
        assert!((hi - 0.192).abs() < 1e-3, "{hi}");
        let scaled = p.map(|v| 3.0 * v);
        assert!((heterogeneity_index(&scaled, &m).unwrap() - hi).abs() < 1e-6);
    }

    #[test]
    fn empty_and_zero_cases() {
        let p = Plane::filled(2, 2, 0.0);
        assert_eq!(mean_dose(&p, &Mask::empty(2, 2)), Err(DosimetryError::EmptyMask));
        assert_eq!(
            heterogeneity_index(&p, &Mask::from_fn(2, 2, |_, _| true)),
            Err(DosimetryError::UndefinedHi)
        );
        assert_eq!(dvh(&p, &Mask::from_fn(2, 2, |_, _| true), 1), Err(DosimetryError::TooFewBins(1)));
    }

    #[test]
    fn shift_gives_constant_mean_error() {
        let gt = Plane::from_fn(6, 6, |r, c| (r * 6 + c) as f32 / 36.0);
        let pred = gt.map(|v| v + 0.25);
        let a = Mask::from_fn(6, 6, |r, _| r < 2);
        let b = Mask::from_fn(6, 6, |_, c| c == 5);
        let errs = abs_error_metrics(&pred, &gt, &[("A".into(), &a), ("B".into(), &b)]).unwrap();
        for e in errs {
            assert!((e.abs_dmean - 0.25).abs() < 1e-6);
            assert!((e.abs_d95 - 0.25).abs() < 1e-6);
        }
    }
}
