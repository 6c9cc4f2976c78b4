use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Subset};
use super::CliError;
use crate::autodiff::GradCheckConfig;
use crate::dosimetry::{evaluate_case, mean_sd, paired_t_test, summarize, write_dvh_csv, write_metrics_csv, write_summary_csv};
use crate::gradcheck_suite::run_suite;
use crate::model::{checkpoint, Model};
use crate::phantom::{
    decode_tctd, encode_dose, read_dataset, read_manifest, tensor_plane, write_dataset, Dataset, Manifest, Sample,
    Split, TctdContent,
};
use crate::scalar::{Precision, Scalar};
use crate::training::{train, Arm};

pub const REPORT_FILE: &str = "ablation.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.tctc";
pub const BEST_CHECKPOINT_FILE: &str = "best.tctc";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EPOCH_LOG_FILE: &str = "epochs.csv";

fn snapshot_name(command: &str) -> String {
    format!("{command}.config.toml")
}

/// Creates `dir`, refusing a non-empty one unless `force`.
fn prepare_out(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(CliError::Config(format!("{} exists and is not a directory", dir.display())));
        }
        let non_empty = fs::read_dir(dir).map_err(CliError::io(dir))?.next().is_some();
        if non_empty && !force {
            return Err(CliError::Config(format!(
                "{} is not empty; pass --force to write into it",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_snapshot(dir: &Path, command: &str, config: &RunConfig) -> Result<(), CliError> {
    let p = dir.join(snapshot_name(command));
    fs::write(&p, config.to_toml()).map_err(CliError::io(&p))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(CliError::io(path))
}

fn csv_to_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_file(path, &buf)
}

fn subset_indices(split: &Split, subset: Subset, count: usize) -> Vec<usize> {
    match subset {
        Subset::All => (0..count).collect(),
        Subset::Train => split.train.clone(),
        Subset::Val => split.val.clone(),
        Subset::Test => split.test.clone(),
    }
}

/// Generates `count` phantoms into `out`; returns the dataset checksum.
pub fn cmd_gen_data(c: &RunConfig, force: bool) -> Result<String, CliError> {
    let spec = c.phantom_spec()?;
    let count = c.count()?;
    let out = c.path("out")?;
    prepare_out(&out, force)?;
    let ds = Dataset::generate(&spec, count)?;
    let sum = write_dataset(&ds, &out)?;
    write_snapshot(&out, "gen-data", c)?;
    Ok(sum)
}

pub fn cmd_train(c: &RunConfig, force: bool) -> Result<(), CliError> {
    let data = c.path("data")?;
    let out = c.path("out")?;
    let manifest = read_manifest(&data)?;
    let spec = &manifest.spec;
    let mc = c.model_config(spec.height, spec.width, spec.channels())?;
    let tc = c.train_config()?;
    let precision = c.precision()?;
    prepare_out(&out, force)?;
    let ds = read_dataset(&data)?;
    let split = ds.split();
    let pick = |idx: &[usize]| -> Vec<Sample> { idx.iter().map(|&i| ds.samples[i].clone()).collect() };
    let (train_set, val_set) = (pick(&split.train), pick(&split.val));
    write_snapshot(&out, "train", c)?;
    match precision {
        Precision::Single => train_into::<f32>(mc, tc, &train_set, &val_set, &out),
        Precision::Double => train_into::<f64>(mc, tc, &train_set, &val_set, &out),
    }
}

fn train_into<F: Scalar>(
    mc: crate::model::ModelConfig,
    tc: crate::training::TrainConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    out: &Path,
) -> Result<(), CliError> {
    let model = Model::<F>::new(mc, tc.seed)?;
    let (outcome, failure) = match train(model, tc, train_set, val_set) {
        Ok(o) => (o, None),
        Err((e, o)) => (*o, Some(e)),
    };
    checkpoint::save(&outcome.model, &out.join(CHECKPOINT_FILE))?;
    if let Some(best) = &outcome.best {
        checkpoint::save(&best.model, &out.join(BEST_CHECKPOINT_FILE))?;
    }
    csv_to_file(&out.join(TRAIN_LOG_FILE), |b| outcome.log.write_csv(b))?;
    csv_to_file(&out.join(EPOCH_LOG_FILE), |b| outcome.log.write_epoch_csv(b))?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

/// Writes one dose-only file per sample of the chosen subset; returns the count.
pub fn cmd_predict(c: &RunConfig, force: bool) -> Result<usize, CliError> {
    let ckpt = c.path("checkpoint")?;
    let data = c.path("data")?;
    let out = c.path("out")?;
    let subset = c.subset()?;
    let manifest = read_manifest(&data)?;
    match c.precision()? {
        Precision::Single => predict_into::<f32>(c, &ckpt, &data, &manifest, subset, &out, force),
        Precision::Double => predict_into::<f64>(c, &ckpt, &data, &manifest, subset, &out, force),
    }
}

fn predict_into<F: Scalar>(
    c: &RunConfig,
    ckpt: &Path,
    data: &Path,
    manifest: &Manifest,
    subset: Subset,
    out: &Path,
    force: bool,
) -> Result<usize, CliError> {
    let model: Model<F> = checkpoint::load(ckpt)?;
    let mc = model.config();
    let spec = &manifest.spec;
    if (mc.height, mc.width, mc.in_channels) != (spec.height, spec.width, spec.channels()) {
        return Err(CliError::Data(format!(
            "checkpoint expects {}x{} with {} channels, dataset is {}x{} with {}",
            mc.height,
            mc.width,
            mc.in_channels,
            spec.height,
            spec.width,
            spec.channels()
        )));
    }
    prepare_out(out, force)?;
    let ds = read_dataset(data)?;
    let idx = subset_indices(&ds.split(), subset, ds.len());
    for &i in &idx {
        let s = &ds.samples[i];
        let y = model.predict(s.input_tensor())?;
        if !y.all_finite() {
            return Err(CliError::Numeric(format!("prediction for {} is not finite", manifest.files[i])));
        }
        let plane = tensor_plane(&y, spec.height, spec.width);
        write_file(&out.join(&manifest.files[i]), &encode_dose(&plane))?;
    }
    write_snapshot(out, "predict", c)?;
    Ok(idx.len())
}

/// Writes `metrics.csv`, `dvh.csv` and `summary.csv`; returns the number of cases.
pub fn cmd_evaluate(c: &RunConfig, force: bool) -> Result<usize, CliError> {
    let pred = c.path("pred")?;
    let data = c.path("data")?;
    let out = c.path("out")?;
    let subset = c.subset()?;
    let bins = c.dvh_bins()?;
    let ds = read_dataset(&data)?;
    let idx = subset_indices(&ds.split(), subset, ds.len());
    let present: Vec<String> = fs::read_dir(&pred)
        .map_err(CliError::io(&pred))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".tctd"))
        .collect();
    if present.len() != idx.len() {
        return Err(CliError::Data(format!(
            "{} prediction files for {} cases in subset",
            present.len(),
            idx.len()
        )));
    }
    let mut planes = Vec::with_capacity(idx.len());
    for &i in &idx {
        let name = &ds.manifest.files[i];
        let p = pred.join(name);
        if !p.exists() {
            return Err(CliError::Data(format!("missing prediction {name}")));
        }
        let bytes = fs::read(&p).map_err(CliError::io(&p))?;
        match decode_tctd(&bytes).map_err(|e| CliError::Data(format!("{name}: {e}")))? {
            TctdContent::Dose(d) if d.dims() == ds.samples[i].dims() => planes.push(d),
            TctdContent::Dose(d) => {
                return Err(CliError::Data(format!("{name}: prediction is {:?}, sample is {:?}", d.dims(), ds.samples[i].dims())))
            }
            TctdContent::Sample(_) => return Err(CliError::Data(format!("{name} is a sample, not a prediction"))),
        }
    }
    prepare_out(&out, force)?;
    let cases = idx
        .iter()
        .zip(&planes)
        .map(|(&i, p)| evaluate_case(ds.manifest.files[i].trim_end_matches(".tctd"), p, &ds.samples[i], bins))
        .collect::<Result<Vec<_>, _>>()?;
    csv_to_file(&out.join("metrics.csv"), |b| write_metrics_csv(&cases, b))?;
    csv_to_file(&out.join("dvh.csv"), |b| write_dvh_csv(&cases, b))?;
    let summary = summarize(&cases, None)?;
    csv_to_file(&out.join("summary.csv"), |b| write_summary_csv(&summary, b))?;
    write_snapshot(&out, "evaluate", c)?;
    Ok(cases.len())
}

/// Formatted table and overall pass flag.
pub fn cmd_gradcheck(c: &RunConfig) -> Result<(String, bool), CliError> {
    let precision = c.precision()?;
    let mut cfg = match precision {
        Precision::Single => GradCheckConfig::single(),
        Precision::Double => GradCheckConfig::double(),
    };
    cfg.samples = c.gradcheck_samples()?;
    cfg.seed = c.seed()?;
    let ops = c.ops();
    let results = match precision {
        Precision::Single => run_suite::<f32>(&ops, &cfg, cfg.seed)?,
        Precision::Double => run_suite::<f64>(&ops, &cfg, cfg.seed)?,
    };
    let mut table = format!(
        "{:<22} {:>9} {:>8} {:>8} {:>8} {:>12} {:>8}  status\n",
        "op", "precision", "params", "checked", "skipped", "max_rel_err", "tol"
    );
    let mut ok = true;
    for r in &results {
        let pass = r.passed(cfg.samples);
        ok &= pass;
        let _ = writeln!(
            table,
            "{:<22} {:>9} {:>8} {:>8} {:>8} {:>12.3e} {:>8.0e}  {}",
            r.name,
            r.report.precision,
            r.num_params,
            r.report.checked,
            r.report.skipped_kinks,
            r.report.max_relative_error,
            r.report.tol,
            if pass { "pass" } else { "FAIL" }
        );
    }
    Ok((table, ok))
}

#[derive(Debug, Deserialize)]
struct MetricCsvRow {
    case: String,
    structure: String,
    metric: String,
    predicted: f64,
    abs_error: f64,
}

#[derive(Debug, Default, Clone)]
struct PtvCase {
    d2: f64,
    d98: f64,
    d50: f64,
    abs_d98: f64,
    abs_d95: f64,
    abs_dmean: f64,
}

impl PtvCase {
    fn hi(&self) -> f64 {
        if self.d50 == 0.0 {
            f64::NAN
        } else {
            (self.d2 - self.d98) / self.d50
        }
    }
}

fn metrics_path(run: &Path) -> Option<PathBuf> {
    [run.join("eval").join("metrics.csv"), run.join("metrics.csv")]
        .into_iter()
        .find(|p| p.exists())
}

fn read_ptv_cases(path: &Path) -> Result<BTreeMap<String, PtvCase>, CliError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out: BTreeMap<String, PtvCase> = BTreeMap::new();
    for row in rd.deserialize::<MetricCsvRow>() {
        let row = row.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if row.structure != "PTV" {
            continue;
        }
        let e = out.entry(row.case).or_default();
        match row.metric.as_str() {
            "D2" => e.d2 = row.predicted,
            "D50" => e.d50 = row.predicted,
            "D98" => {
                e.d98 = row.predicted;
                e.abs_d98 = row.abs_error;
            }
            "D95" => e.abs_d95 = row.abs_error,
            "Dmean" => e.abs_dmean = row.abs_error,
            _ => {}
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{} has no PTV rows", path.display())));
    }
    Ok(out)
}

fn run_arm(run: &Path) -> Option<Arm> {
    let text = fs::read_to_string(run.join(snapshot_name("train"))).ok()?;
    let mut c = RunConfig::default();
    c.merge_toml(&text).ok()?;
    c.arm().ok()
}

#[derive(Debug, Serialize)]
struct ReportRow {
    run: String,
    arm: String,
    method: String,
    cases: usize,
    hi_mean: f64,
    hi_sd: f64,
    abs_d98_mean: f64,
    abs_d98_sd: f64,
    abs_d95_mean: f64,
    abs_d95_sd: f64,
    abs_dmean_mean: f64,
    abs_dmean_sd: f64,
    p_hi: Option<f64>,
    p_d98: Option<f64>,
    p_d95: Option<f64>,
    p_dmean: Option<f64>,
}

/// One row per run with PTV HI and errors as mean and sd, plus paired-test
/// p-values against the first run. Written to `out/ablation.csv` when `out`
/// is set, otherwise printed.
pub fn cmd_report(runs: &[PathBuf], c: &RunConfig, force: bool) -> Result<(), CliError> {
    if runs.is_empty() {
        return Err(CliError::Config("report needs at least one run directory".into()));
    }
    let mut loaded = Vec::with_capacity(runs.len());
    for r in runs {
        let p = metrics_path(r)
            .ok_or_else(|| CliError::Data(format!("{} has no evaluation (metrics.csv)", r.display())))?;
        loaded.push((r, run_arm(r), read_ptv_cases(&p)?));
    }
    let fields: [fn(&PtvCase) -> f64; 4] = [PtvCase::hi, |c| c.abs_d98, |c| c.abs_d95, |c| c.abs_dmean];
    let first = &loaded[0].2;
    let mut rows = Vec::with_capacity(loaded.len());
    for (i, (run, arm, cases)) in loaded.iter().enumerate() {
        let stats: Vec<(f64, f64)> = fields
            .iter()
            .map(|f| mean_sd(&cases.values().map(f).collect::<Vec<_>>()))
            .collect();
        let aligned = cases.len() >= 2 && cases.keys().eq(first.keys());
        let p: Vec<Option<f64>> = fields
            .iter()
            .map(|f| {
                if i == 0 || !aligned {
                    return Ok(None);
                }
                let a: Vec<f64> = cases.values().map(f).collect();
                let b: Vec<f64> = first.values().map(f).collect();
                Ok(Some(paired_t_test(&a, &b)?.p))
            })
            .collect::<Result<_, CliError>>()?;
        rows.push(ReportRow {
            run: run.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            arm: arm.map(|a| a.to_string()).unwrap_or_default(),
            method: arm.map(|a| a.label().to_string()).unwrap_or_default(),
            cases: cases.len(),
            hi_mean: stats[0].0,
            hi_sd: stats[0].1,
            abs_d98_mean: stats[1].0,
            abs_d98_sd: stats[1].1,
            abs_d95_mean: stats[2].0,
            abs_d95_sd: stats[2].1,
            abs_dmean_mean: stats[3].0,
            abs_dmean_sd: stats[3].1,
            p_hi: p[0],
            p_d98: p[1],
            p_d95: p[2],
            p_dmean: p[3],
        });
    }
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(CliError::io("report"))?;
    }
    if c.get("out").is_empty() {
        print!("{}", String::from_utf8_lossy(&buf));
        return Ok(());
    }
    let out = c.path("out")?;
    prepare_out(&out, force)?;
    write_file(&out.join(REPORT_FILE), &buf)?;
    write_snapshot(&out, "report", c)
}
