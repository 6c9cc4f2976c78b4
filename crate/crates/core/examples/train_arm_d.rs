//! Trains the full model (transformer plus multi-scale triplet constraint) on
//! small phantoms, then saves and reloads the checkpoint.
//!
//! ```text
//! cargo run --release --example train_arm_d -- 200
//! ```

use tctrans::model::{checkpoint, Model, ModelConfig};
use tctrans::phantom::{Dataset, PhantomSpec};
use tctrans::training::{train, Arm, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let ds = Dataset::generate(&PhantomSpec::desk(32, 32), 42)?;
    let split = ds.split();
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds.samples[i].clone()).collect::<Vec<_>>();

    let mut mc = ModelConfig {
        base_width: 4,
        num_heads: 2,
        ..ModelConfig::desk(32, 32)
    };
    Arm::D.configure(&mut mc);
    let cfg = TrainConfig {
        arm: Arm::D,
        effective_batch: 4,
        max_steps: Some(steps),
        lr0: 1e-3,
        ..TrainConfig::default()
    };
    let outcome = train(Model::<f32>::new(mc, 0)?, cfg, &pick(&split.train), &pick(&split.val)).map_err(|(e, _)| e)?;

    let log = &outcome.log;
    for r in log.records.iter().step_by((steps / 10).max(1)) {
        let seps: Vec<String> = r.separations.iter().map(|s| s.map_or("-".into(), |v| format!("{v:.3}"))).collect();
        println!(
            "step {:>4}  lr {:.2e}  L_dose {:.4}  L_mtp {:.4}  separation per scale {}",
            r.step,
            r.lr,
            r.l_dose,
            r.l_mtp,
            seps.join(" ")
        );
    }
    println!(
        "L_dose first 10 {:.4}, last 10 {:.4}",
        log.window_mean(10, false, |r| r.l_dose),
        log.window_mean(10, true, |r| r.l_dose)
    );
    if let Some(best) = &outcome.best {
        println!("best validation L_dose {:.4} after epoch {}", best.val_l_dose, best.epoch);
    }

    let path = std::env::temp_dir().join("tctrans_example.tctc");
    checkpoint::save(&outcome.model, &path)?;
    let back: Model<f32> = checkpoint::load(&path)?;
    assert_eq!(back.params(), outcome.model.params());
    println!("checkpoint round trip ok: {}", path.display());
    Ok(())
}
