//! Dose-volume metrics, DVH and the paired t-test on a phantom dose and two
//! perturbed "plans".
//!
//! ```text
//! cargo run --release --example dosimetry_metrics
//! ```

use tctrans::dosimetry::{dvh, mean_dose, paired_t_test, structure_metrics};
use tctrans::phantom::{generate_sample, PhantomSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = PhantomSpec::desk(64, 64);
    let mut hot_errors = Vec::new();
    let mut cold_errors = Vec::new();
    for case in 0..8 {
        let s = generate_sample(&spec, case)?;
        // a plan 3% hot everywhere, and one 5% cold outside the PTV
        let hot = s.dose.map(|v| v * 1.03);
        let cold = s.dose.map(|v| if v < 1.0 { v * 0.95 } else { v });
        let gt = structure_metrics(&s.dose, &s.ptv)?;
        let oar = &s.oars[0];
        let reference = structure_metrics(&s.dose, oar)?.dmean;
        hot_errors.push((structure_metrics(&hot, oar)?.dmean - reference).abs());
        cold_errors.push((structure_metrics(&cold, oar)?.dmean - reference).abs());
        if case == 0 {
            for (name, mask) in s.structures() {
                let m = structure_metrics(&s.dose, mask)?;
                let row: Vec<String> = m.named().iter().map(|(k, v)| format!("{k} {v:.3}")).collect();
                println!("{name:<8} {}", row.join("  "));
            }
            println!("PTV HI = (D2 - D98) / D50 = {:.4}", gt.hi().unwrap_or(f64::NAN));
            // DVH of the most exposed organ at risk
            let structures = s.structures();
            let (name, mask) = structures[1..]
                .iter()
                .max_by(|a, b| mean_dose(&s.dose, a.1).unwrap().total_cmp(&mean_dose(&s.dose, b.1).unwrap()))
                .expect("phantoms have organs at risk");
            let curve = dvh(&s.dose, mask, 8)?;
            for (d, f) in curve.dose_bins.iter().zip(&curve.volume_fraction) {
                println!("  {name} DVH: {f:.3} of volume receives >= {d:.3}");
            }
        }
    }
    let t = paired_t_test(&hot_errors, &cold_errors)?;
    println!("first OAR |dDmean| hot vs cold over 8 cases: t = {:.3}, df = {}, p = {:.4}", t.t, t.df, t.p);
    let worked = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5])?;
    println!("differences [1..5]: t = {:.4}, p = {:.4}", worked.t, worked.p);
    Ok(())
}
