//! Builds the 512x512, twelve-layer configuration and runs one training step
//! (forward, multi-scale loss, backward, update) on a phantom.
//!
//! ```text
//! cargo run --release --example paper_scale -- 16
//! ```

use std::time::Instant;

use tctrans::model::{Model, ModelConfig};
use tctrans::phantom::{generate_sample, PhantomSpec};
use tctrans::training::{TrainConfig, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base_width: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(16);
    let mc = ModelConfig {
        base_width,
        ..ModelConfig::paper_scale()
    };
    let model = Model::<f32>::new(mc.clone(), 0)?;
    let (bh, bw) = mc.bottleneck_size();
    println!(
        "{} parameters, bottleneck {bh}x{bw} ({} tokens of width {}), {} transformer layers",
        model.params().num_scalars(),
        mc.num_tokens(),
        mc.embed_dim(),
        mc.num_transformer_layers
    );

    let sample = generate_sample(&PhantomSpec::desk(512, 512), 0)?;
    let cfg = TrainConfig {
        effective_batch: 1,
        max_steps: Some(1),
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, cfg)?;
    let t0 = Instant::now();
    let r = trainer.step_on(&[&sample], 1)?;
    println!(
        "one step in {:.1}s: L_dose {:.4}, L_mtp {:.4}",
        t0.elapsed().as_secs_f64(),
        r.l_dose,
        r.l_mtp
    );
    Ok(())
}
