//! Trains briefly, predicts the held-out phantoms and scores them against
//! the reference dose.
//!
//! ```text
//! cargo run --release --example predict_and_evaluate
//! ```

use tctrans::dosimetry::{evaluate_case, mean_sd};
use tctrans::model::{Model, ModelConfig};
use tctrans::phantom::{tensor_plane, Dataset, PhantomSpec};
use tctrans::training::{Arm, TrainConfig, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = Dataset::generate(&PhantomSpec::desk(32, 32), 42)?;
    let split = ds.split();
    let train: Vec<_> = split.train.iter().map(|&i| ds.samples[i].clone()).collect();

    let mut mc = ModelConfig {
        base_width: 4,
        num_heads: 2,
        ..ModelConfig::desk(32, 32)
    };
    Arm::D.configure(&mut mc);
    let cfg = TrainConfig {
        effective_batch: 4,
        max_steps: Some(150),
        lr0: 1e-3,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(Model::<f32>::new(mc, 0)?, cfg)?;
    trainer.run(&train, &[])?;

    let mut d95 = Vec::new();
    let mut his = Vec::new();
    for &i in &split.test {
        let s = &ds.samples[i];
        let y = trainer.model().predict(s.input_tensor())?;
        let (h, w) = s.dims();
        let eval = evaluate_case(&format!("case{i}"), &tensor_plane(&y, h, w), s, 64)?;
        let ptv = &eval.errors()[0];
        println!("case {i:>2}: PTV |dD95| {:.4}  |dDmean| {:.4}  HI {:.4}", ptv.abs_d95, ptv.abs_dmean, eval.hi());
        d95.push(ptv.abs_d95);
        his.push(eval.hi());
    }
    let (m, sd) = mean_sd(&d95);
    let (hm, hsd) = mean_sd(&his);
    println!("PTV |dD95| {m:.4} +- {sd:.4}, HI {hm:.4} +- {hsd:.4} over {} cases", d95.len());
    Ok(())
}
