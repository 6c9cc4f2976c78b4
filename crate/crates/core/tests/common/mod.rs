//! Independent reference implementations shared by the integration tests
//! and the acceptance gate. None of these call into the library code they check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tctrans::autodiff::Tensor;
use tctrans::plane::{Mask, Plane};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-major `[C, h, w]` features in f64.
#[derive(Debug, Clone)]
pub struct Features {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Features {
    pub fn random(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Self {
        let data = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { c, h, w, data }
    }

    pub fn at(&self, ch: usize, r: usize, col: usize) -> f64 {
        self.data[(ch * self.h + r) * self.w + col]
    }

    pub fn tensor(&self) -> Tensor<f64> {
        Tensor::new(vec![1, self.c, self.h, self.w], self.data.clone()).unwrap()
    }
}

/// Brute-force triplet constraint: visit every pixel of every whole tile,
/// classify it against the tile centre and average plain Euclidean
/// distances. Returns `(sum of per-patch losses, number of margin patches)`.
///
/// Identical vectors are `sqrt(eps)` apart, matching the guarded square root,
/// and an anchor with no same-side neighbour has `d+ = 0`.
pub fn triplet_oracle(f: &Features, mask: &Mask, s: usize, margin: f64, eps: f64) -> (f64, usize) {
    let dist = |a: (usize, usize), b: (usize, usize)| -> f64 {
        let mut ss = 0.0;
        for ch in 0..f.c {
            let d = f.at(ch, a.0, a.1) - f.at(ch, b.0, b.1);
            ss += d * d;
        }
        (ss + eps).sqrt()
    };
    let mut total = 0.0;
    let mut count = 0;
    for tr in 0..f.h / s {
        for tc in 0..f.w / s {
            let anchor = (tr * s + s / 2, tc * s + s / 2);
            let inside = mask.get(anchor.0, anchor.1);
            let (mut pos_sum, mut pos_n, mut neg_sum, mut neg_n) = (0.0, 0usize, 0.0, 0usize);
            for r in tr * s..(tr + 1) * s {
                for c in tc * s..(tc + 1) * s {
                    if (r, c) == anchor {
                        continue;
                    }
                    let d = dist(anchor, (r, c));
                    if mask.get(r, c) == inside {
                        pos_sum += d;
                        pos_n += 1;
                    } else {
                        neg_sum += d;
                        neg_n += 1;
                    }
                }
            }
            if neg_n == 0 {
                continue;
            }
            let d_plus = if pos_n == 0 { 0.0 } else { pos_sum / pos_n as f64 };
            let d_minus = neg_sum / neg_n as f64;
            total += (d_plus - d_minus + margin).max(0.0);
            count += 1;
        }
    }
    (total, count)
}

/// A mask that is either scattered noise, a filled disc or a rectangle.
pub fn random_mask(rng: &mut impl Rng, h: usize, w: usize) -> Mask {
    match rng.random_range(0..3) {
        0 => {
            let p = rng.random_range(0.2..0.8);
            Mask::from_fn(h, w, |_, _| rng.random_bool(p))
        }
        1 => {
            let (cy, cx) = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
            let rad = rng.random_range(1.5..(h.min(w) as f64 / 2.0).max(2.0));
            Mask::from_fn(h, w, |r, c| {
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                dy * dy + dx * dx <= rad * rad
            })
        }
        _ => {
            let (r0, c0) = (rng.random_range(0..h), rng.random_range(0..w));
            let (r1, c1) = (rng.random_range(r0..h), rng.random_range(c0..w));
            Mask::from_fn(h, w, |r, c| (r0..=r1).contains(&r) && (c0..=c1).contains(&c))
        }
    }
}

/// Random dose plane; `levels > 0` quantizes values to force ties.
pub fn random_plane(rng: &mut impl Rng, h: usize, w: usize, levels: usize) -> Plane {
    Plane::from_fn(h, w, |_, _| {
        let v: f32 = rng.random_range(0.0..1.0);
        if levels > 0 {
            (v * levels as f32).floor() / levels as f32
        } else {
            v
        }
    })
}

pub fn masked_values(dose: &Plane, mask: &Mask) -> Vec<f64> {
    let mut out = Vec::new();
    for r in 0..dose.height() {
        for c in 0..dose.width() {
            if mask.get(r, c) {
                out.push(dose.get(r, c) as f64);
            }
        }
    }
    out
}

/// Largest dose `d` such that at least `x` percent of the voxels receive `>= d`,
/// found by counting over every candidate value.
pub fn dx_oracle(values: &[f64], x: f64) -> f64 {
    let n = values.len() as f64;
    let mut best = f64::NEG_INFINITY;
    for &d in values {
        let covered = values.iter().filter(|&&v| v >= d).count() as f64;
        if covered * 100.0 >= x * n && d > best {
            best = d;
        }
    }
    best
}

/// Fraction of voxels receiving at least `d`.
pub fn coverage_oracle(values: &[f64], d: f64) -> f64 {
    values.iter().filter(|&&v| v >= d).count() as f64 / values.len() as f64
}

pub fn mean_oracle(values: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in values {
        s += v;
    }
    s / values.len() as f64
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Student-t density with `nu` degrees of freedom.
pub fn t_pdf(x: f64, nu: f64) -> f64 {
    let ln_c = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
    (ln_c - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()).exp()
}

/// Two-tailed p-value by composite Simpson integration of the density over `[0, |t|]`.
pub fn t_test_p_oracle(t: f64, nu: f64) -> f64 {
    let b = t.abs();
    if b == 0.0 {
        return 1.0;
    }
    let n = 20_000;
    let h = b / n as f64;
    let mut s = t_pdf(0.0, nu) + t_pdf(b, nu);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * t_pdf(i as f64 * h, nu);
    }
    (1.0 - 2.0 * s * h / 3.0).max(0.0)
}

/// Squared distance from every pixel to the nearest set pixel, by scanning all pairs.
pub fn brute_force_sq_edt(mask: &Mask) -> Vec<f64> {
    let (h, w) = mask.dims();
    let set: Vec<(usize, usize)> = (0..h * w).filter(|&i| mask.bits()[i]).map(|i| (i / w, i % w)).collect();
    (0..h * w)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            set.iter()
                .map(|&(a, b)| {
                    let (dy, dx) = (r as f64 - a as f64, c as f64 - b as f64);
                    dy * dy + dx * dx
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}
