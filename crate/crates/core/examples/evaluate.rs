//! Match detections to references and print the report, the crowding
//! breakdown and a method comparison.
//!
//! cargo run --example evaluate

use crownrefine::evalkit::{comparison_table, match_detections, Detection};
use crownrefine::raster::BinaryMask;

fn disk(cx: f64, cy: f64, r: f64) -> BinaryMask {
    BinaryMask::from_fn(64, 64, |x, y| (x as f64 - cx).hypot(y as f64 - cy) <= r)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let centers = [(12.0, 12.0), (40.0, 14.0), (20.0, 44.0), (48.0, 48.0)];
    let refs: Vec<Detection> = centers.iter().map(|&(x, y)| Detection::new("img", disk(x, y, 7.0))).collect::<Result<_, _>>()?;
    let rough: Vec<Detection> = centers[..3]
        .iter()
        .map(|&(x, y)| Detection::new("img", disk(x + 3.0, y, 5.0)))
        .collect::<Result<_, _>>()?;
    let close: Vec<Detection> = centers
        .iter()
        .map(|&(x, y)| Detection::new("img", disk(x + 0.5, y, 7.0)))
        .collect::<Result<_, _>>()?;

    let a = match_detections(&refs, &rough, 0.5)?;
    let b = match_detections(&refs, &close, 0.5)?;
    print!("{}", b.to_table());
    println!();
    print!("{}", comparison_table(&[("rough", &a), ("close", &b)]));
    println!();
    print!("{}", b.pairs_csv());
    Ok(())
}
