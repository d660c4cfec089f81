//! The full pipeline on a reduced corpus: synthesize, learn, refine and
//! compare against the perturbed baseline.
//!
//! cargo run --release --example demo [scenes]

use crownrefine::cli::{cmd_demo, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(8);
    let out = std::env::temp_dir().join("crownrefine_demo");
    let demo = cmd_demo(&RunConfig::default(), n, &out)?;
    let kept: usize = demo.scenes.iter().map(|s| s.kept.len()).sum();
    let seeds: usize = demo.scenes.iter().map(|s| s.seeds).sum();
    println!("{seeds} seeds, {kept} detections; outputs under {}", out.display());
    Ok(())
}
