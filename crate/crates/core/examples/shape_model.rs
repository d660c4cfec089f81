//! Learn an eigenshape model from synthetic crowns, inspect its spectrum,
//! and project and regenerate a held-out shape.
//!
//! cargo run --example shape_model

use crownrefine::evalkit::iou;
use crownrefine::shapemodel::{align_mask, fit_shape_model, mask_to_sdf, ShapeCoefficients};
use crownrefine::synth::{sample_crown, scene_rng, training_crowns, SceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SceneSpec { radius: (6.0, 14.0), ..SceneSpec::default() };
    let frame = 48;
    let masks = training_crowns(&spec, 30)?;
    let model = fit_shape_model(&masks, frame, 16, 1.0)?;

    let total: f64 = model.eigen.eigenvalues.iter().sum();
    let mut acc = 0.0;
    for (j, l) in model.eigen.eigenvalues.iter().enumerate().take(6) {
        acc += l;
        println!("mode {j}: eigenvalue {l:10.2}  cumulative {:.3}", acc / total);
    }
    println!("orthonormality error {:.2e}", model.eigen.orthonormality_error());
    println!("KDE bandwidth {:.3} over {} samples", model.prior.bandwidth(), model.prior.samples().len());

    let held_out = align_mask(&sample_crown(&mut scene_rng(123, 0), &spec)?.mask, frame)?;
    let alpha = model.eigen.project(&mask_to_sdf(&held_out)?)?;
    let rebuilt = model.eigen.generate(&alpha).threshold(0.5);
    println!("held-out crown rebuilt with IoU {:.3}", iou(&rebuilt, &held_out)?);

    let mean = model.eigen.generate(&ShapeCoefficients::zeros(model.eigen.k())).threshold(0.5);
    println!("mean shape area {} px", mean.count());
    Ok(())
}
