//! Evaluate the multi-contour energy on a synthetic scene and compare its
//! analytic gradient with central differences.
//!
//! cargo run --example energy_gradient

use crownrefine::cli::relative_error;
use crownrefine::energy::{energy_gradient, finite_difference_gradient, total_energy, EnergyWeights, SceneConfig};
use crownrefine::optimizer::initialize_states;
use crownrefine::shapemodel::fit_shape_model;
use crownrefine::synth::{generate_scene, training_crowns, SceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SceneSpec { width: 96, height: 96, crowns: (3, 3), radius: (5.0, 9.0), ..SceneSpec::default() };
    let model = fit_shape_model(&training_crowns(&spec, 20)?, 40, 8, 1.0)?;
    let scene = generate_scene(&spec, 0)?;
    let config = SceneConfig::new(scene.posterior, scene.seeds, 6.0, EnergyWeights::default(), &model)?;

    let mut state = initialize_states(&config);
    for (i, c) in state.contours.iter_mut().enumerate() {
        c.alpha.0[0] = 3.0 * (i as f64 - 1.0);
        c.offset.0 += 0.3;
    }
    let e = total_energy(&state, &config)?;
    println!(
        "energy {:.4}: shape term {:.4}, image term {:.4}, overlap term {:.4}",
        e.total, e.shape_term, e.image_term, e.overlap_term
    );

    let analytic = energy_gradient(&state, &config)?;
    let numeric = finite_difference_gradient(&state, &config, 1e-4)?;
    let worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, f)| relative_error(*a, *f))
        .fold(0.0, f64::max);
    println!("{} coordinates, max relative error {worst:.2e}", analytic.len());
    Ok(())
}
