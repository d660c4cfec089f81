//! Masks and probability maps on disk: PGM masks, FRAS float rasters,
//! blurring and connected components.
//!
//! cargo run --example raster_io

use crownrefine::raster::{
    centroid, connected_components, decode_fras, decode_pgm, encode_fras, encode_pgm, gaussian_blur,
    BinaryMask, ProbabilityMap,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mask = BinaryMask::from_fn(48, 32, |x, y| {
        let a = (x as f64 - 12.0).hypot(y as f64 - 16.0) <= 7.0;
        let b = (x as f64 - 34.0).hypot(y as f64 - 14.0) <= 5.0;
        a || b
    });

    let pgm = encode_pgm(&mask);
    assert_eq!(decode_pgm(&pgm)?, mask);
    println!("PGM: {} bytes for a {}x{} mask", pgm.len(), mask.width(), mask.height());

    for (i, part) in connected_components(&mask).iter().enumerate() {
        let (cx, cy) = centroid(part)?;
        println!("component {i}: {} px, centroid ({cx:.2}, {cy:.2})", part.count());
    }

    let posterior = ProbabilityMap::from_grid(gaussian_blur(&mask.to_grid(), 2.0)?);
    let fras = encode_fras(posterior.grid());
    let back = decode_fras(&fras)?;
    println!(
        "FRAS: {} bytes, values in [{:.2e}, {:.4}]",
        fras.len(),
        back.min(),
        back.max()
    );
    Ok(())
}
