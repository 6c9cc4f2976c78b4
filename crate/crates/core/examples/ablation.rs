//! Runs arms A to D through the command-line pipeline (generate, train,
//! predict, evaluate) and writes the ablation table.
//!
//! ```text
//! cargo run --release --example ablation -- /tmp/ablation 40
//! ```

use std::path::{Path, PathBuf};

use tctrans::cli::run;

fn tctrans(args: &[&str]) -> Result<(), String> {
    match run(std::iter::once("tctrans").chain(args.iter().copied())) {
        0 => Ok(()),
        code => Err(format!("tctrans {} exited with {code}", args.join(" "))),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "ablation".into()));
    let steps = args.next().unwrap_or_else(|| "40".into());
    let small = ["--size", "32x32", "--base_width", "4", "--num_heads", "2", "--force"];

    let data = root.join("data");
    let mut gen = vec!["gen-data", "--count", "42", "--out", s(&data)];
    gen.extend(small);
    tctrans(&gen)?;

    let mut runs = Vec::new();
    for arm in ["A", "B", "C", "D"] {
        let dir = root.join(format!("arm{arm}"));
        let mut train = vec!["train", "--data", s(&data), "--out", s(&dir), "--arm", arm, "--steps", &steps, "--lr0", "1e-3"];
        train.extend(small);
        tctrans(&train)?;
        let (ckpt, pred, eval) = (dir.join("checkpoint.tctc"), dir.join("pred"), dir.join("eval"));
        tctrans(&["predict", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&pred), "--force"])?;
        tctrans(&["evaluate", "--pred", s(&pred), "--data", s(&data), "--out", s(&eval), "--force"])?;
        runs.push(dir);
    }
    let report = root.join("report");
    let mut rep = vec!["report"];
    rep.extend(runs.iter().map(|r| s(r)));
    rep.extend(["--out", s(&report), "--force"]);
    tctrans(&rep)?;
    print!("{}", std::fs::read_to_string(report.join("ablation.csv"))?);
    Ok(())
}
