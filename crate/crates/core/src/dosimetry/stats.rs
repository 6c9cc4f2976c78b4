use statrs::function::beta::beta_reg;

use super::DosimetryError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTTest {
    pub t: f64,
    pub df: usize,
    /// Two-tailed p-value.
    pub p: f64,
    /// The differences have zero spread but a non-zero mean, so `t` is infinite.
    pub degenerate_variance: bool,
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Student's paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest, DosimetryError> {
    if a.len() != b.len() {
        return Err(DosimetryError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(DosimetryError::TooFewCases(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_sd(&d);
    let df = n - 1;
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            PairedTTest {
                t: 0.0,
                df,
                p: 1.0,
                degenerate_variance: false,
            }
        } else {
            PairedTTest {
                t: mean.signum() * f64::INFINITY,
                df,
                p: 0.0,
                degenerate_variance: true,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let nu = df as f64;
    let p = beta_reg(nu / 2.0, 0.5, nu / (nu + t * t)).clamp(0.0, 1.0);
    Ok(PairedTTest {
        t,
        df,
        p,
        degenerate_variance: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 3.5];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!((r.t, r.p, r.df, r.degenerate_variance), (0.0, 1.0, 2, false));
    }

    #[test]
    fn constant_nonzero_difference_is_flagged() {
        let r = paired_t_test(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
        assert!(r.degenerate_variance);
        assert_eq!(r.p, 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(paired_t_test(&[1.0], &[2.0]), Err(DosimetryError::TooFewCases(1)));
        assert_eq!(paired_t_test(&[1.0, 2.0], &[2.0]), Err(DosimetryError::LengthMismatch(2, 1)));
    }

    #[test]
    fn sign_symmetry() {
        let a = [0.3, 1.2, -0.4, 2.2];
        let b = [0.0, 0.1, 0.2, 0.3];
        let f = paired_t_test(&a, &b).unwrap();
        let r = paired_t_test(&b, &a).unwrap();
        assert_eq!(f.t, -r.t);
        assert_eq!(f.p, r.p);
    }

    #[test]
    fn mean_sd_sample_convention() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, 3.0);
        assert!((s - 2.5f64.sqrt()).abs() < 1e-15);
    }
}
