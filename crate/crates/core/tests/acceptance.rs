//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails.
//!
//! `cargo test --test acceptance -- 2 7` runs only criteria 2 and 7. Any other
//! positional argument is a test-name filter from `cargo test` and selects nothing.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{
    coverage_oracle, dx_oracle, masked_values, mean_oracle, random_mask, random_plane, rng, t_test_p_oracle,
    triplet_oracle, Features,
};
use rand::Rng;
use tctrans::autodiff::{attention_probabilities, GradCheckConfig, Graph, Tensor};
use tctrans::cli::run;
use tctrans::dosimetry::{dose_at_volume, dvh, heterogeneity_index, mean_dose, paired_t_test, DosimetryError};
use tctrans::gradcheck_suite::run_suite;
use tctrans::model::checkpoint::{self, CheckpointError};
use tctrans::model::{Model, ModelConfig};
use tctrans::phantom::{
    decode_tctd, distance_to_set, encode_sample, generate_sample, write_dataset, Dataset, PhantomSpec, Sample,
    TctdContent, TctdError,
};
use tctrans::plane::{Mask, Plane};
use tctrans::training::{Arm, TrainConfig, Trainer};
use tctrans::triplet::{
    margin_patches, multiscale_triplet_loss, triplet_constraint_loss, Normalization, TripletConfig, SQRT_EPS,
};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    let s = elapsed.as_secs_f64();
    ensure(s < limit_s, || format!("took {s:.1}s, limit {limit_s}s"))
}

fn tcfg(s: usize, m: f64) -> TripletConfig {
    TripletConfig {
        patch_size: s,
        margin: m,
        normalization: Normalization::PatchArea,
    }
}

fn pipeline_loss(f: &Features, mask: &Mask, cfg: &TripletConfig) -> f64 {
    let mut g = Graph::<f64>::new();
    let x = g.input(f.tensor());
    let term = triplet_constraint_loss(&mut g, x, mask, cfg, 1).unwrap();
    g.value(term.loss).item()
}

fn gradient_correctness() -> Check {
    let t0 = Instant::now();
    let double = run_suite::<f64>(&[], &GradCheckConfig::double(), 0).map_err(|e| e.to_string())?;
    let single = run_suite::<f32>(&[], &GradCheckConfig::single(), 0).map_err(|e| e.to_string())?;
    within(t0.elapsed(), 120.0)?;
    ensure(double.iter().any(|r| r.name == "tctrans_full"), || "full-model case missing".into())?;
    let mut worst = [0.0f64; 2];
    for (i, results) in [&double, &single].into_iter().enumerate() {
        for r in results.iter() {
            ensure(r.passed(50), || {
                format!(
                    "{} at {}: max rel err {:.3e} (tol {:.0e}) over {} coordinates",
                    r.name, r.report.precision, r.report.max_relative_error, r.report.tol, r.report.checked
                )
            })?;
            worst[i] = worst[i].max(r.report.max_relative_error);
        }
    }
    Ok(format!(
        "{} ops, worst rel err {:.2e} double / {:.2e} single, {:.1}s",
        double.len(),
        worst[0],
        worst[1],
        t0.elapsed().as_secs_f64()
    ))
}

fn triplet_oracle_equivalence() -> Check {
    let t0 = Instant::now();
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = if r.random_bool(0.5) { 3 } else { 5 };
        let (h, w) = (r.random_range(s..=25), r.random_range(s..=25));
        let c = r.random_range(1..=4);
        let f = Features::random(&mut r, c, h, w);
        let mask = random_mask(&mut r, h, w);
        let m = r.random_range(0.0..1.0);
        let want = triplet_oracle(&f, &mask, s, m, SQRT_EPS).0 / (s * s) as f64;
        worst = worst.max((pipeline_loss(&f, &mask, &tcfg(s, m)) - want).abs());
    }
    ensure(worst < 1e-6, || format!("max deviation from brute force {worst:.3e}"))?;

    let mask = Mask::from_fn(20, 20, |r, c| (r as f64 - 9.5).hypot(c as f64 - 9.5) < 6.0);
    let l = margin_patches(&mask, 5).unwrap().len();
    let constant = Features {
        c: 2,
        h: 20,
        w: 20,
        data: vec![0.7; 800],
    };
    let got = pipeline_loss(&constant, &mask, &tcfg(5, 0.3));
    let want = l as f64 * 0.3 / 25.0;
    // the pipeline sums l copies of m; the closed form multiplies once
    ensure((got - want).abs() <= 4.0 * f64::EPSILON * want, || format!("constant features {got} vs {want}"))?;
    let indicator = Features {
        c: 1,
        h: 20,
        w: 20,
        data: mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    };
    let ind = pipeline_loss(&indicator, &mask, &tcfg(5, 0.3));
    ensure(ind == 0.0, || format!("indicator features give {ind}"))?;
    within(t0.elapsed(), 30.0)?;
    Ok(format!(
        "100 instances max dev {worst:.2e}; constant {got} (l = {l}); indicator 0; {:.1}s",
        t0.elapsed().as_secs_f64()
    ))
}

fn multiscale_decomposition() -> Check {
    let mut r = rng(21);
    let mut worst = 0.0f64;
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
        let c = tcfg(if r.random_bool(0.5) { 3 } else { 5 }, 0.3);
        let mut g = Graph::<f64>::new();
        let vars: Vec<_> = feats.iter().map(|f| g.input(f.tensor())).collect();
        let total = multiscale_triplet_loss(&mut g, &vars, &mask, &c).unwrap().value(&g);
        // each scale in a fresh graph on a mask subsampled by hand
        let want: f64 = feats
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let factor = 1 << (2 - i);
                let scaled = Mask::from_fn(f.h, f.w, |r, col| mask.get(r * factor, col * factor));
                if c.patch_size > f.h.min(f.w) {
                    0.0
                } else {
                    pipeline_loss(f, &scaled, &c)
                }
            })
            .sum();
        worst = worst.max((total - want).abs());
    }
    ensure(worst < 1e-6, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("20 bundles, max deviation {worst:.2e}"))
}

fn small_model_config() -> ModelConfig {
    ModelConfig {
        base_width: 4,
        num_heads: 2,
        ..ModelConfig::desk(32, 32)
    }
}

fn random_tensor(seed: u64, shape: &[usize], scale: f64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.random_range(-scale..scale))
}

fn run_layers(model: &Model<f64>, z: &Tensor<f64>) -> Tensor<f64> {
    let mut g = Graph::new();
    let p = model.params().bind(&mut g);
    let mut v = g.input(z.clone());
    for n in 0..model.config().num_transformer_layers {
        v = model.architecture().transformer_layer(&mut g, &p, n, v).unwrap();
    }
    g.value(v).clone()
}

fn transformer_invariants() -> Check {
    let mut model = Model::<f64>::new(small_model_config(), 4).unwrap();
    let (m, d) = (model.config().num_tokens(), model.config().embed_dim());
    let layers = model.config().num_transformer_layers;
    let z = random_tensor(1, &[m, d], 3.0);
    let free = run_layers(&model, &z);
    for n in 1..=layers {
        for name in ["attn.out.weight", "attn.out.bias", "mlp.fc2.weight", "mlp.fc2.bias"] {
            let id = model.params().id(&format!("transformer.layer{n}.{name}")).unwrap();
            model.params_mut().value_mut(id).data_mut().fill(0.0);
        }
    }
    let identity = run_layers(&model, &z).max_abs_diff(&z);
    ensure(identity <= 1e-7, || format!("zeroed branches deviate by {identity:.3e}"))?;

    let mut row_err = 0.0f64;
    for (seed, scale) in [(1, 0.1), (2, 1.0), (3, 30.0)] {
        let q = random_tensor(seed, &[17, 8], scale);
        let k = random_tensor(seed + 100, &[17, 8], scale);
        for probs in attention_probabilities(&q, &k, 2).unwrap() {
            for row in probs.data().chunks(17) {
                ensure(row.iter().all(|&p| p >= 0.0), || "negative attention weight".into())?;
                row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    ensure(row_err <= 1e-6, || format!("row sums off by {row_err:.3e}"))?;

    let model = Model::<f64>::new(small_model_config(), 6).unwrap();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut r = rng(8);
    for i in (1..m).rev() {
        perm.swap(i, r.random_range(0..=i));
    }
    let permute = |t: &Tensor<f64>| {
        Tensor::new(vec![m, d], perm.iter().flat_map(|&i| t.data()[i * d..(i + 1) * d].to_vec()).collect()).unwrap()
    };
    let equi = permute(&run_layers(&model, &z)).max_abs_diff(&run_layers(&model, &permute(&z)));
    ensure(equi <= 1e-5, || format!("permutation equivariance off by {equi:.3e}"))?;
    ensure(free.max_abs_diff(&z) > 1e-3, || "unzeroed layers already act as the identity".into())?;
    Ok(format!("identity {identity:.1e}, rows {row_err:.1e}, equivariance {equi:.1e}"))
}

fn training_smoke() -> Check {
    let t0 = Instant::now();
    let data = Dataset::generate(&PhantomSpec::desk(64, 64), 64).map_err(|e| e.to_string())?.samples;
    let model = Model::<f32>::new(ModelConfig::desk(64, 64), 0).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        max_steps: Some(2000),
        effective_batch: 12,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(model, cfg).map_err(|e| e.to_string())?;
    t.run(&data, &[]).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let log = t.log();
    let first = log.window_mean(10, false, |r| r.l_dose);
    let last = log.window_mean(10, true, |r| r.l_dose);
    let final_sep = |i: usize| log.records[i].separations.last().copied().flatten();
    let start = final_sep(0).ok_or("no margin patch at the final scale on step 1")?;
    let tail: Vec<f64> = (log.records.len() - 10..log.records.len()).filter_map(final_sep).collect();
    let end = tail.iter().sum::<f64>() / tail.len() as f64;
    let summary = format!(
        "L_dose {first:.4} -> {last:.4} (ratio {:.3}), final-scale separation {start:.4} -> {end:.4}, {:.0}s",
        last / first,
        elapsed.as_secs_f64()
    );
    ensure(last <= 0.5 * first, || format!("L_dose not halved: {summary}"))?;
    ensure(end > start, || format!("separation did not increase: {summary}"))?;
    within(elapsed, 1200.0).map_err(|e| format!("{e}: {summary}"))?;
    Ok(summary)
}

fn cli(args: &[&str]) -> Result<(), String> {
    match run(std::iter::once("tctrans").chain(args.iter().copied())) {
        0 => Ok(()),
        code => Err(format!("`tctrans {}` exited with {code}", args.join(" "))),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A phantom whose PTV is exactly one 5x5 tile, so no tile straddles the boundary.
fn tile_aligned_sample(index: u64) -> Sample {
    let spec = PhantomSpec::desk(32, 32);
    let mut s = generate_sample(&spec, index).unwrap();
    s.ptv = Mask::from_fn(32, 32, |r, c| (10..15).contains(&r) && (10..15).contains(&c));
    for o in &mut s.oars {
        for (b, &p) in o.bits_mut().iter_mut().zip(s.ptv.bits()) {
            *b &= !p;
        }
    }
    let d = distance_to_set(&s.ptv).unwrap();
    let two_var = 2.0 * spec.falloff_sigma * spec.falloff_sigma;
    s.dose = Plane::from_fn(32, 32, |r, c| (-(d.get(r, c) as f64).powi(2) / two_var).exp() as f32);
    s
}

fn arm_run(arm: Arm, omega: f64, data: &[Sample]) -> (Vec<u8>, Vec<u8>) {
    let mut c = small_model_config();
    arm.configure(&mut c);
    let cfg = TrainConfig {
        arm,
        omega,
        effective_batch: 3,
        max_steps: Some(4),
        lr0: 1e-3,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(Model::<f32>::new(c, 1).unwrap(), cfg).unwrap();
    t.run(data, &[]).unwrap();
    let mut log = Vec::new();
    t.log().write_csv(&mut log).unwrap();
    (log, checkpoint::encode(t.model()))
}

fn ablation_mechanics() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let small = ["--size", "32x32", "--base_width", "4", "--num_heads", "2"];
    let data = tmp.path().join("data");
    let mut args = vec!["gen-data", "--count", "24", "--out", p(&data)];
    args.extend(small);
    cli(&args)?;
    let mut runs = Vec::new();
    for arm in ["A", "B", "C", "D"] {
        let dir = tmp.path().join(format!("arm{arm}"));
        let mut args = vec![
            "train", "--data", p(&data), "--out", p(&dir), "--arm", arm, "--steps", "3", "--effective_batch", "4",
        ];
        args.extend(small);
        cli(&args)?;
        let (ckpt, pred, eval) = (dir.join("checkpoint.tctc"), dir.join("pred"), dir.join("eval"));
        cli(&["predict", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&pred)])?;
        cli(&["evaluate", "--pred", p(&pred), "--data", p(&data), "--out", p(&eval)])?;
        runs.push(dir);
    }
    let report = tmp.path().join("report");
    cli(&["report", p(&runs[0]), p(&runs[1]), p(&runs[2]), p(&runs[3]), "--out", p(&report)])?;
    let table = std::fs::read_to_string(report.join("ablation.csv")).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = table.lines().collect();
    ensure(lines.len() == 5, || format!("report has {} lines", lines.len()))?;
    for col in ["arm", "method", "hi_mean", "abs_d98_mean", "abs_d95_mean", "abs_dmean_mean", "p_hi"] {
        ensure(lines[0].split(',').any(|h| h == col), || format!("report lacks column {col}"))?;
    }
    for (line, arm) in lines[1..].iter().zip(["A", "B", "C", "D"]) {
        ensure(line.split(',').nth(1) == Some(arm), || format!("row `{line}` is not arm {arm}"))?;
    }

    let aligned: Vec<Sample> = (0..3).map(tile_aligned_sample).collect();
    ensure(aligned.iter().all(|s| margin_patches(&s.ptv, 5).unwrap().is_empty()), || {
        "tile-aligned samples have margin patches".into()
    })?;
    let b = arm_run(Arm::B, 0.0, &aligned);
    ensure(arm_run(Arm::C, 0.01, &aligned) == b, || "arm C differs from arm B on l = 0 samples".into())?;
    Ok("arms A-D trained, predicted, evaluated and reported; B (omega 0) == C bitwise on l = 0".into())
}

fn random_case(seed: u64) -> (Plane, Mask) {
    let mut r = rng(seed);
    let (h, w) = (r.random_range(4..=24), r.random_range(4..=24));
    let levels = [0, 4, 16][r.random_range(0..3)];
    let dose = random_plane(&mut r, h, w, levels);
    let mut mask = random_mask(&mut r, h, w);
    if mask.is_empty() {
        mask.set(h / 2, w / 2, true);
    }
    (dose, mask)
}

fn dosimetry_oracles() -> Check {
    let mut mean_err = 0.0f64;
    for seed in 0..100 {
        let (dose, mask) = random_case(seed);
        let v = masked_values(&dose, &mask);
        for x in [2.0, 50.0, 95.0, 98.0, 100.0, 0.5, 33.3] {
            let got = dose_at_volume(&dose, &mask, x).unwrap();
            ensure(got == dx_oracle(&v, x), || format!("D{x} on plane {seed}: {got} vs {}", dx_oracle(&v, x)))?;
        }
        mean_err = mean_err.max((mean_dose(&dose, &mask).unwrap() - mean_oracle(&v)).abs());
        let (d2, d98, d50) = (dx_oracle(&v, 2.0), dx_oracle(&v, 98.0), dx_oracle(&v, 50.0));
        match heterogeneity_index(&dose, &mask) {
            Ok(hi) => mean_err = mean_err.max((hi - (d2 - d98) / d50).abs()),
            Err(DosimetryError::UndefinedHi) => ensure(d50 == 0.0, || format!("HI undefined on plane {seed}"))?,
            Err(e) => return Err(e.to_string()),
        }
        let curve = dvh(&dose, &mask, 64).unwrap();
        for (&d, &f) in curve.dose_bins.iter().zip(&curve.volume_fraction) {
            ensure(f == coverage_oracle(&v, d), || format!("DVH at {d} on plane {seed}"))?;
        }
        ensure(curve.volume_fraction.windows(2).all(|w| w[1] <= w[0]), || format!("DVH rises on plane {seed}"))?;
    }
    ensure(mean_err < 1e-7, || format!("mean/HI deviation {mean_err:.3e}"))?;

    let mut r = rng(7);
    let mut p_err = 0.0f64;
    for _ in 0..200 {
        let df = r.random_range(2..=60usize);
        let n = df + 1;
        let d: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..2.0)).collect();
        let res = paired_t_test(&d, &vec![0.0; n]).unwrap();
        p_err = p_err.max((res.p - t_test_p_oracle(res.t, df as f64)).abs());
    }
    let worked = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
    p_err = p_err.max((worked.p - t_test_p_oracle(worked.t, 4.0)).abs());
    ensure(p_err < 1e-3, || format!("p deviates from quadrature by {p_err:.3e}"))?;
    ensure((worked.t - 4.2426).abs() < 5e-5 && (worked.p - 0.0132).abs() < 5e-5, || {
        format!("worked case t = {}, p = {}", worked.t, worked.p)
    })?;
    Ok(format!(
        "Dx/DVH exact on 100 planes, mean/HI dev {mean_err:.1e}, p dev {p_err:.1e}, worked t = {:.4} p = {:.4}",
        worked.t, worked.p
    ))
}

fn determinism_and_formats() -> Check {
    let spec = PhantomSpec::desk(32, 32);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sum_a = write_dataset(&Dataset::generate(&spec, 6).unwrap(), a.path()).map_err(|e| e.to_string())?;
    let sum_b = write_dataset(&Dataset::generate(&spec, 6).unwrap(), b.path()).map_err(|e| e.to_string())?;
    ensure(sum_a == sum_b, || "dataset checksums differ across reruns".into())?;

    let data = Dataset::generate(&spec, 6).unwrap().samples;
    let train_once = || {
        let mut c = small_model_config();
        Arm::D.configure(&mut c);
        let cfg = TrainConfig {
            effective_batch: 3,
            max_steps: Some(3),
            lr0: 1e-3,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(Model::<f32>::new(c, 2).unwrap(), cfg).unwrap();
        t.run(&data, &data[..2]).unwrap();
        let mut log = Vec::new();
        t.log().write_csv(&mut log).unwrap();
        (log, checkpoint::encode(t.model()))
    };
    let first = train_once();
    ensure(first == train_once(), || "training log or checkpoint differs across reruns".into())?;

    let bytes = encode_sample(&data[0]);
    match decode_tctd(&bytes).map_err(|e| e.to_string())? {
        TctdContent::Sample(s) => ensure(encode_sample(&s) == bytes, || "TCTD round trip changed bytes".into())?,
        TctdContent::Dose(_) => return Err("sample decoded as dose-only".into()),
    }
    ensure(matches!(decode_tctd(&bytes[..bytes.len() / 2]), Err(TctdError::Truncated { .. })), || {
        "truncated TCTD not reported as truncated".into()
    })?;
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    ensure(matches!(decode_tctd(&bad), Err(TctdError::BadMagic(_))), || "bad TCTD magic accepted".into())?;

    let ckpt = &first.1;
    let back: Model<f32> = checkpoint::decode(ckpt).map_err(|e| e.to_string())?;
    ensure(&checkpoint::encode(&back) == ckpt, || "checkpoint round trip changed bytes".into())?;
    ensure(
        matches!(checkpoint::decode::<f32>(&ckpt[..ckpt.len() - 1]), Err(CheckpointError::Truncated(_))),
        || "truncated checkpoint not reported as truncated".into(),
    )?;
    let mut bad = ckpt.clone();
    bad[0] ^= 0xff;
    ensure(matches!(checkpoint::decode::<f32>(&bad), Err(CheckpointError::BadMagic(_))), || {
        "bad checkpoint magic accepted".into()
    })?;
    Ok(format!("dataset checksum {}, log and checkpoint reproducible, round trips exact", &sum_a[..12]))
}

fn paper_scale() -> Check {
    let t0 = Instant::now();
    let mc = ModelConfig {
        base_width: 16,
        ..ModelConfig::paper_scale()
    };
    let sample = generate_sample(&PhantomSpec::desk(512, 512), 0).map_err(|e| e.to_string())?;
    let model = Model::<f32>::new(mc, 0).map_err(|e| e.to_string())?;
    let params = model.params().num_scalars();
    let cfg = TrainConfig {
        effective_batch: 1,
        max_steps: Some(1),
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(model, cfg).map_err(|e| e.to_string())?;
    let rec = t.step_on(&[&sample], 1).map_err(|e| e.to_string())?.clone();
    ensure(rec.l_total.is_finite(), || format!("non-finite loss {}", rec.l_total))?;
    within(t0.elapsed(), 300.0)?;
    Ok(format!(
        "{params} parameters, 4096 tokens, L_dose {:.4}, L_mtp {:.4}, {:.1}s",
        rec.l_dose,
        rec.l_mtp,
        t0.elapsed().as_secs_f64()
    ))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 9] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "triplet oracle equivalence", triplet_oracle_equivalence),
        (3, "multi-scale decomposition", multiscale_decomposition),
        (4, "transformer invariants", transformer_invariants),
        (5, "training smoke (arm D)", training_smoke),
        (6, "ablation mechanics", ablation_mechanics),
        (7, "dosimetry oracles", dosimetry_oracles),
        (8, "determinism and formats", determinism_and_formats),
        (9, "paper-scale constructability", paper_scale),
    ];
    let positional: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let chosen: Vec<u32> = positional.iter().filter_map(|a| a.parse().ok()).collect();
    let selected = |n: u32| positional.is_empty() || chosen.contains(&n);

    let mut out = std::io::stdout();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !selected(n) {
            continue;
        }
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        let line = match result {
            Ok(detail) => format!("criterion {n} {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                format!("criterion {n} {name}: FAIL ({detail}) [{secs:.1}s]")
            }
        };
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
    }
    if failed > 0 {
        writeln!(out, "acceptance: {failed} criterion(s) failed").unwrap();
        std::process::exit(1);
    }
}
