use std::io::Write;

use serde::Serialize;

use super::metrics::{dvh, structure_metrics, HI_FORMULA, DvhCurve, StructureErrors, StructureMetrics};
use super::stats::{mean_sd, paired_t_test};
use super::DosimetryError;
use crate::phantom::Sample;
use crate::plane::Plane;

/// Per-structure metrics written to the per-case CSV, in column order.
pub const REPORT_METRICS: [&str; 5] = ["D98", "D95", "D50", "D2", "Dmean"];

/// Predicted and reference metrics and DVHs for one case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseEvaluation {
    pub case: String,
    pub structures: Vec<String>,
    pub predicted: Vec<StructureMetrics>,
    pub reference: Vec<StructureMetrics>,
    pub dvh_predicted: Vec<DvhCurve>,
    pub dvh_reference: Vec<DvhCurve>,
}

impl CaseEvaluation {
    pub fn errors(&self) -> Vec<StructureErrors> {
        self.structures
            .iter()
            .zip(self.predicted.iter().zip(&self.reference))
            .map(|(name, (p, g))| StructureErrors {
                structure: name.clone(),
                abs_d98: (p.d98 - g.d98).abs(),
                abs_d95: (p.d95 - g.d95).abs(),
                abs_dmean: (p.dmean - g.dmean).abs(),
            })
            .collect()
    }

    /// Predicted PTV heterogeneity index, NaN when undefined.
    pub fn hi(&self) -> f64 {
        self.predicted[0].hi().unwrap_or(f64::NAN)
    }
}

pub fn evaluate_case(case: &str, pred: &Plane, sample: &Sample, dvh_bins: usize) -> Result<CaseEvaluation, DosimetryError> {
    let structures = sample.structures();
    let mut out = CaseEvaluation {
        case: case.to_string(),
        structures: Vec::with_capacity(structures.len()),
        predicted: Vec::with_capacity(structures.len()),
        reference: Vec::with_capacity(structures.len()),
        dvh_predicted: Vec::with_capacity(structures.len()),
        dvh_reference: Vec::with_capacity(structures.len()),
    };
    for (name, mask) in structures {
        out.predicted.push(structure_metrics(pred, mask)?);
        out.reference.push(structure_metrics(&sample.dose, mask)?);
        out.dvh_predicted.push(dvh(pred, mask, dvh_bins)?);
        out.dvh_reference.push(dvh(&sample.dose, mask, dvh_bins)?);
        out.structures.push(name);
    }
    Ok(out)
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

#[derive(Serialize)]
struct MetricRow<'a> {
    case: &'a str,
    structure: &'a str,
    metric: &'a str,
    predicted: f64,
    reference: f64,
    abs_error: f64,
}

/// One row per (case, structure, metric).
pub fn write_metrics_csv<W: Write>(cases: &[CaseEvaluation], out: W) -> csv::Result<()> {
    let mut w = writer(out);
    for c in cases {
        for (s, (p, g)) in c.structures.iter().zip(c.predicted.iter().zip(&c.reference)) {
            for ((metric, pv), (_, gv)) in p.named().into_iter().zip(g.named()) {
                w.serialize(MetricRow {
                    case: &c.case,
                    structure: s,
                    metric,
                    predicted: pv,
                    reference: gv,
                    abs_error: (pv - gv).abs(),
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DvhRow<'a> {
    case: &'a str,
    source: &'a str,
    structure: &'a str,
    bin_dose: f64,
    volume_fraction: f64,
}

/// DVH curves of every structure, prediction and ground truth.
pub fn write_dvh_csv<W: Write>(cases: &[CaseEvaluation], out: W) -> csv::Result<()> {
    let mut w = writer(out);
    for c in cases {
        for (source, curves) in [("predicted", &c.dvh_predicted), ("reference", &c.dvh_reference)] {
            for (s, curve) in c.structures.iter().zip(curves.iter()) {
                for (&d, &v) in curve.dose_bins.iter().zip(&curve.volume_fraction) {
                    w.serialize(DvhRow {
                        case: &c.case,
                        source,
                        structure: s,
                        bin_dose: d,
                        volume_fraction: v,
                    })?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Cohort mean(sd) of one metric, with the paired-test p against a reference run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub metric: String,
    pub structure: String,
    pub definition: String,
    pub mean: f64,
    pub sd: f64,
    pub p_value: Option<f64>,
}

fn per_case(cases: &[CaseEvaluation], metric: &str, idx: usize) -> Vec<f64> {
    cases
        .iter()
        .map(|c| {
            if metric == "HI" {
                return c.hi();
            }
            let e = &c.errors()[idx];
            match metric {
                "abs_D98" => e.abs_d98,
                "abs_D95" => e.abs_d95,
                _ => e.abs_dmean,
            }
        })
        .collect()
}

/// Predicted PTV HI, then `|dD98|`, `|dD95|`, `|dDmean|` for each structure.
///
/// With `reference` (another run over the same cases), each row carries the
/// paired t-test p-value of this run against it.
pub fn summarize(
    cases: &[CaseEvaluation],
    reference: Option<&[CaseEvaluation]>,
) -> Result<Vec<SummaryRow>, DosimetryError> {
    let Some(first) = cases.first() else {
        return Ok(Vec::new());
    };
    if let Some(r) = reference {
        if r.len() != cases.len() {
            return Err(DosimetryError::LengthMismatch(cases.len(), r.len()));
        }
        if r.iter().zip(cases).any(|(a, b)| a.case != b.case || a.structures != b.structures) {
            return Err(DosimetryError::StructureMismatch("reference run covers different cases".into()));
        }
    }
    let mut keys = vec![("HI".to_string(), first.structures[0].clone(), 0)];
    for metric in ["abs_D98", "abs_D95", "abs_Dmean"] {
        for (i, s) in first.structures.iter().enumerate() {
            keys.push((metric.to_string(), s.clone(), i));
        }
    }
    keys.into_iter()
        .map(|(metric, structure, idx)| {
            let values = per_case(cases, &metric, idx);
            let (mean, sd) = mean_sd(&values);
            let p_value = match reference {
                Some(r) if cases.len() >= 2 => Some(paired_t_test(&values, &per_case(r, &metric, idx))?.p),
                _ => None,
            };
            let definition = if metric == "HI" {
                HI_FORMULA.to_string()
            } else {
                format!("|{}(pred) - {}(ref)|", &metric[4..], &metric[4..])
            };
            Ok(SummaryRow {
                metric,
                structure,
                definition,
                mean,
                sd,
                p_value,
            })
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> csv::Result<()> {
    let mut w = writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
