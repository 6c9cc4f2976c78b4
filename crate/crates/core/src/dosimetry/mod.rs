//! Dose-volume metrics, DVH curves, prediction errors and the paired t-test.
//!
//! All doses are in normalized units (prescription = 1). Masks select the
//! voxels of one structure.

mod metrics;
mod report;
mod stats;

pub use metrics::{
    abs_error_metrics, dose_at_volume, dvh, heterogeneity_index, mean_dose, structure_metrics, DvhCurve,
    StructureErrors, StructureMetrics, DEFAULT_DVH_BINS, HI_FORMULA,
};
pub use report::{
    evaluate_case, summarize, write_dvh_csv, write_metrics_csv, write_summary_csv, CaseEvaluation, SummaryRow,
    REPORT_METRICS,
};
pub use stats::{mean_sd, paired_t_test, PairedTTest};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DosimetryError {
    #[error("structure mask is empty")]
    EmptyMask,
    #[error("volume percentage must be in (0, 100], got {0}")]
    InvalidPercent(f64),
    #[error("heterogeneity index undefined: D50 is zero")]
    UndefinedHi,
    #[error("a DVH needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("paired test needs at least 2 cases, got {0}")]
    TooFewCases(usize),
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("plane {plane:?} and mask {mask:?} are not aligned")]
    Misaligned { plane: (usize, usize), mask: (usize, usize) },
    #[error("structure lists differ: {0}")]
    StructureMismatch(String),
}
