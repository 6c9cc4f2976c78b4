//! Finite-difference check of every differentiable operation and the full model,
//! at double and single precision.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use tctrans::autodiff::GradCheckConfig;
use tctrans::gradcheck_suite::{run_suite, CaseResult};

fn print(results: &[CaseResult]) -> bool {
    let mut ok = true;
    for r in results {
        let pass = r.passed(50);
        ok &= pass;
        println!(
            "{:<22} {:>7} checked {:>4}  skipped {:>3}  max rel err {:.2e}  {}",
            r.name,
            r.report.precision,
            r.report.checked,
            r.report.skipped_kinks,
            r.report.max_relative_error,
            if pass { "ok" } else { "FAIL" }
        );
    }
    ok
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let double = run_suite::<f64>(&[], &GradCheckConfig::double(), 0)?;
    let single = run_suite::<f32>(&[], &GradCheckConfig::single(), 0)?;
    let ok = print(&double) & print(&single);
    if !ok {
        std::process::exit(1);
    }
    Ok(())
}
