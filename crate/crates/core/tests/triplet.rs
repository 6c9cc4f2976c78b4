mod common;

use common::{random_mask, rng, triplet_oracle, Features};
use proptest::prelude::*;
use rand::Rng;
use tctrans::autodiff::{Graph, Tensor};
use tctrans::plane::Mask;
use tctrans::triplet::{
    margin_patches, multiscale_triplet_loss, triplet_constraint_loss, Normalization, TripletConfig, TripletError,
    SQRT_EPS,
};

fn pipeline_loss(f: &Features, mask: &Mask, cfg: &TripletConfig) -> f64 {
    let mut g = Graph::<f64>::new();
    let x = g.input(f.tensor());
    let term = triplet_constraint_loss(&mut g, x, mask, cfg, 1).unwrap();
    g.value(term.loss).item()
}

fn cfg(s: usize, m: f64) -> TripletConfig {
    TripletConfig {
        patch_size: s,
        margin: m,
        normalization: Normalization::PatchArea,
    }
}

#[test]
fn matches_brute_force_on_random_instances() {
    let mut r = rng(11);
    for _ in 0..100 {
        let s = if r.random_bool(0.5) { 3 } else { 5 };
        let (h, w) = (r.random_range(s..=25), r.random_range(s..=25));
        let c = r.random_range(1..=4);
        let f = Features::random(&mut r, c, h, w);
        let mask = random_mask(&mut r, h, w);
        let m = r.random_range(0.0..1.0);
        let (sum, _) = triplet_oracle(&f, &mask, s, m, SQRT_EPS);
        let got = pipeline_loss(&f, &mask, &cfg(s, m));
        assert!((got - sum / (s * s) as f64).abs() < 1e-6, "{got} vs {}", sum / (s * s) as f64);
    }
}

#[test]
fn margin_count_normalization_divides_by_patch_count() {
    let mut r = rng(12);
    let f = Features::random(&mut r, 3, 15, 15);
    let mask = Mask::from_fn(15, 15, |row, col| row + col < 14);
    let (sum, l) = triplet_oracle(&f, &mask, 5, 0.3, SQRT_EPS);
    let c = TripletConfig {
        normalization: Normalization::MarginCount,
        ..cfg(5, 0.3)
    };
    assert!(l > 0);
    assert!((pipeline_loss(&f, &mask, &c) - sum / l as f64).abs() < 1e-12);
}

#[test]
fn constant_features_cost_the_full_margin_per_patch() {
    let mask = Mask::from_fn(20, 20, |r, c| (r as f64 - 9.5).hypot(c as f64 - 9.5) < 6.0);
    let f = Features {
        c: 2,
        h: 20,
        w: 20,
        data: vec![0.7; 2 * 400],
    };
    let l = margin_patches(&mask, 5).unwrap().len();
    assert!(l > 0);
    let got = pipeline_loss(&f, &mask, &cfg(5, 0.3));
    // equal up to the rounding of summing l copies of 0.3
    let want = l as f64 * 0.3 / 25.0;
    assert!((got - want).abs() <= 4.0 * f64::EPSILON * want, "{got} vs {want}");
}

#[test]
fn indicator_features_satisfy_the_margin() {
    let mask = Mask::from_fn(20, 20, |r, c| (r as f64 - 9.5).hypot(c as f64 - 9.5) < 6.0);
    let data = (0..400).map(|i| if mask.bits()[i] { 1.0 } else { 0.0 }).collect();
    let f = Features { c: 1, h: 20, w: 20, data };
    assert!(!margin_patches(&mask, 5).unwrap().is_empty());
    assert_eq!(pipeline_loss(&f, &mask, &cfg(5, 0.3)), 0.0);
}

#[test]
fn patch_without_boundary_contributes_nothing() {
    // the PTV fills exactly one tile, so no tile straddles the boundary
    let mask = Mask::from_fn(15, 15, |r, c| (5..10).contains(&r) && (5..10).contains(&c));
    assert!(margin_patches(&mask, 5).unwrap().is_empty());
    let f = Features::random(&mut rng(3), 2, 15, 15);
    assert_eq!(pipeline_loss(&f, &mask, &cfg(5, 0.3)), 0.0);
}

#[test]
fn invalid_configurations_are_rejected() {
    let mask = Mask::empty(8, 8);
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros(&[1, 1, 8, 8]));
    assert!(matches!(
        triplet_constraint_loss(&mut g, x, &mask, &cfg(4, 0.3), 1),
        Err(TripletError::EvenPatchSize(4))
    ));
    assert!(matches!(
        triplet_constraint_loss(&mut g, x, &mask, &cfg(9, 0.3), 1),
        Err(TripletError::PatchTooLarge { .. })
    ));
    assert!(matches!(
        triplet_constraint_loss(&mut g, x, &mask, &cfg(3, -0.1), 1),
        Err(TripletError::NegativeMargin(_))
    ));
    let other = Mask::empty(7, 8);
    assert!(matches!(
        triplet_constraint_loss(&mut g, x, &other, &cfg(3, 0.3), 1),
        Err(TripletError::Misaligned { .. })
    ));
}

/// Per-scale losses computed each in a fresh graph, on masks subsampled by hand.
fn independent_sum(features: &[Features], mask: &Mask, c: &TripletConfig) -> f64 {
    let r_total = features.len();
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let factor = 1 << (r_total - 1 - i);
            let scaled = Mask::from_fn(f.h, f.w, |r, col| mask.get(r * factor, col * factor));
            if c.patch_size > f.h.min(f.w) {
                return 0.0;
            }
            pipeline_loss(f, &scaled, c)
        })
        .sum()
}

#[test]
fn multiscale_loss_is_the_sum_of_scales() {
    let mut r = rng(21);
    for _ in 0..20 {
        let side = 4 * r.random_range(4..=8);
        let mask = random_mask(&mut r, side, side);
        let feats: Vec<Features> = [4, 2, 1]
            .iter()
            .map(|d| {
                let c = r.random_range(1..=3);
                Features::random(&mut r, c, side / d, side / d)
            })
            .collect();
        let c = cfg(if r.random_bool(0.5) { 3 } else { 5 }, 0.3);
        let mut g = Graph::<f64>::new();
        let vars: Vec<_> = feats.iter().map(|f| g.input(f.tensor())).collect();
        let term = multiscale_triplet_loss(&mut g, &vars, &mask, &c).unwrap();
        let want = independent_sum(&feats, &mask, &c);
        assert!((term.value(&g) - want).abs() < 1e-6);
        let per_scale: f64 = term.scales.iter().map(|s| s.record.loss).sum();
        assert!((per_scale - want).abs() < 1e-9);
    }
}

#[test]
fn minimizing_the_loss_separates_free_features() {
    let mut r = rng(5);
    for _ in 0..3 {
        let mask = random_mask(&mut r, 20, 20);
        if margin_patches(&mask, 5).unwrap().is_empty() {
            continue;
        }
        let mut f = Features::random(&mut r, 4, 20, 20);
        let c = cfg(5, 0.3);
        let mut separation = 0.0;
        for _ in 0..500 {
            let mut g = Graph::<f64>::new();
            let x = g.leaf(f.tensor(), true);
            let term = triplet_constraint_loss(&mut g, x, &mask, &c, 1).unwrap();
            separation = term.record.mean_separation().unwrap();
            if separation >= c.margin {
                break;
            }
            g.backward(term.loss).unwrap();
            for (v, d) in f.data.iter_mut().zip(g.grad(x).unwrap()) {
                *v -= 2.0 * d;
            }
        }
        assert!(separation >= 0.3, "separation {separation}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn margin_patches_straddle_the_boundary(bits in proptest::collection::vec(any::<bool>(), 144), s in prop_oneof![Just(3usize), Just(5)]) {
        let mask = Mask::new(12, 12, bits).unwrap();
        let set = margin_patches(&mask, s).unwrap();
        prop_assert_eq!(set.total_patches, (12 / s) * (12 / s));
        for p in &set.patches {
            prop_assert!(!p.negatives.is_empty());
            prop_assert_eq!(p.positives.len() + p.negatives.len(), s * s - 1);
            let inside = mask.get(p.anchor.0, p.anchor.1);
            let any_in = p.positives.iter().chain(&p.negatives).any(|&i| mask.bits()[i]) || inside;
            let any_out = p.positives.iter().chain(&p.negatives).any(|&i| !mask.bits()[i]) || !inside;
            prop_assert!(any_in && any_out);
        }
    }

    #[test]
    fn loss_is_nonnegative_and_bounded(seed in any::<u64>(), m in 0.0f64..2.0) {
        let mut r = rng(seed);
        let f = Features::random(&mut r, 2, 15, 15);
        let mask = random_mask(&mut r, 15, 15);
        let (_, l) = triplet_oracle(&f, &mask, 5, m, SQRT_EPS);
        let v = pipeline_loss(&f, &mask, &cfg(5, m));
        prop_assert!(v >= 0.0);
        // each hinge is at most d+ + m, and d+ is at most the feature diameter
        let diam = 2.0 * (2.0f64).sqrt() + 1e-6;
        prop_assert!(v <= l as f64 * (diam + m) / 25.0 + 1e-12);
    }
}
