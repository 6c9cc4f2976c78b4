//! Generates a synthetic phantom dataset and writes it as TCTD files plus a manifest.
//!
//! ```text
//! cargo run --release --example generate_phantoms -- /tmp/phantoms 16
//! ```

use std::path::PathBuf;

use tctrans::phantom::{write_dataset, Dataset, PhantomSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "phantoms".into()));
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(16);

    let spec = PhantomSpec::desk(64, 64);
    let ds = Dataset::generate(&spec, count)?;
    let checksum = write_dataset(&ds, &out)?;

    let split = ds.split();
    println!("{} phantoms at {}x{} in {}", ds.len(), spec.height, spec.width, out.display());
    println!("split train/val/test: {}/{}/{}", split.train.len(), split.val.len(), split.test.len());
    println!("checksum {checksum}");
    for (i, s) in ds.samples.iter().take(4).enumerate() {
        let names: Vec<String> = s.structures().iter().map(|(n, m)| format!("{n}={}", m.count())).collect();
        println!("sample {i}: pixels per structure {}", names.join(" "));
    }
    Ok(())
}
