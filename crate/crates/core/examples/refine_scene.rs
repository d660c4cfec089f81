//! Refine the seeds of one synthetic scene and write detections, index and
//! log to a temporary directory.
//!
//! cargo run --example refine_scene

use crownrefine::energy::{EnergyWeights, SceneConfig};
use crownrefine::evalkit::{match_detections, Detection};
use crownrefine::optimizer::{refine, write_detections, OptimizerSettings};
use crownrefine::shapemodel::fit_shape_model;
use crownrefine::synth::{generate_scene, training_crowns, SceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SceneSpec { width: 128, height: 128, crowns: (4, 6), radius: (6.0, 12.0), ..SceneSpec::default() };
    let model = fit_shape_model(&training_crowns(&spec, 30)?, 44, 16, 1.0)?;
    let scene = generate_scene(&spec, 2)?;
    let config = SceneConfig::new(scene.posterior.clone(), scene.seeds.clone(), 8.0, EnergyWeights::default(), &model)?;

    let result = refine(&config, &OptimizerSettings::default())?;
    let first = result.energy_trace.first().unwrap().energy.total;
    println!(
        "{} iterations, stop {:?}, energy {first:.2} -> {:.2}, monotone {} feasible {}",
        result.iterations,
        result.stop_reason,
        result.final_energy().total,
        result.is_monotone(),
        result.is_feasible()
    );

    let dets: Vec<Detection> = result
        .detections
        .iter()
        .map(|d| Detection::new(scene.id.clone(), d.mask.clone()))
        .collect::<Result<_, _>>()?;
    let refined = match_detections(&scene.gt_detections(), &dets, 0.5)?;
    let baseline = match_detections(&scene.gt_detections(), &scene.baseline_detections, 0.5)?;
    println!("mean IoU: baseline {:.3}, refined {:.3}", baseline.mean_iou, refined.mean_iou);

    let out = std::env::temp_dir().join("crownrefine_refine_scene");
    let entries = write_detections(&result, &scene.id, &out)?;
    println!("wrote {} index entries to {}", entries.len(), out.display());
    Ok(())
}
