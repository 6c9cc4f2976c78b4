//! Exact Euclidean distance transform.

use super::PhantomError;
use crate::plane::{Mask, Plane};

/// Stand-in for "no set pixel yet"; finite so differences stay well defined.
const INF: f64 = 1e30;

/// One-dimensional lower envelope pass over squared distances.
fn envelope_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let sep = |p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
        let mut s = sep(v[k]);
        // z[0] is -inf, so this stops at k = 0
        while s <= z[k] {
            k -= 1;
            s = sep(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared distance from each pixel to the nearest set pixel of `mask`.
///
/// Values are exact integers stored in `f64`.
pub fn squared_distance_to_set(mask: &Mask) -> Result<Vec<f64>, PhantomError> {
    if mask.is_empty() {
        return Err(PhantomError::EmptyMask);
    }
    let (h, w) = mask.dims();
    let mut grid: Vec<f64> = mask.bits().iter().map(|&b| if b { 0.0 } else { INF }).collect();
    let n = h.max(w);
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        envelope_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        envelope_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    Ok(grid)
}

/// Euclidean distance from each pixel to the nearest set pixel; 0 inside the set.
pub fn distance_to_set(mask: &Mask) -> Result<Plane, PhantomError> {
    let (h, w) = mask.dims();
    let sq = squared_distance_to_set(mask)?;
    Ok(Plane::from_fn(h, w, |r, c| sq[r * w + c].sqrt() as f32))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(mask: &Mask) -> Vec<f64> {
        let (h, w) = mask.dims();
        let set: Vec<(usize, usize)> = (0..h * w).filter(|&i| mask.bits()[i]).map(|i| (i / w, i % w)).collect();
        (0..h * w)
            .map(|i| {
                let (r, c) = ((i / w) as f64, (i % w) as f64);
                set.iter()
                    .map(|&(a, b)| (r - a as f64).powi(2) + (c - b as f64).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn unit_and_diagonal_neighbours() {
        let mut m = Mask::empty(5, 5);
        m.set(2, 2, true);
        let d = distance_to_set(&m).unwrap();
        assert_eq!(d.get(2, 2), 0.0);
        assert_eq!(d.get(1, 2), 1.0);
        assert_eq!(d.get(2, 3), 1.0);
        assert_eq!(d.get(1, 1), 2f32.sqrt());
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(matches!(distance_to_set(&Mask::empty(3, 4)), Err(PhantomError::EmptyMask)));
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let (h, w) = if trial % 2 == 0 { (32, 32) } else { (7 + trial, 19) };
            let density = rng.random_range(0.005..0.3);
            let mut m = Mask::from_fn(h, w, |_, _| rng.random_bool(density));
            if m.is_empty() {
                m.set(h / 2, 0, true);
            }
            assert_eq!(squared_distance_to_set(&m).unwrap(), brute(&m), "trial {trial}");
        }
    }
}
