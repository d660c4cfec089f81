//! Generate a small synthetic corpus, then rebuild a scene from its
//! manifest line.
//!
//! cargo run --example synth_corpus

use crownrefine::synth::{emit_corpus, load_scene_dir, regenerate_scene, SceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SceneSpec { false_positive_rate: 0.1, ..SceneSpec::default() };
    let out = std::env::temp_dir().join("crownrefine_synth_corpus");
    let entries = emit_corpus(&spec, 5, &out)?;
    for e in &entries {
        println!(
            "{}: {} crowns, {} seeds ({} false positive)",
            e.scene,
            e.crowns,
            e.seeds,
            e.false_positive_seeds.len()
        );
    }
    let files = load_scene_dir(out.join(&entries[0].scene))?;
    let again = regenerate_scene(&entries[0])?;
    assert_eq!(files.gt_masks, again.gt_masks);
    println!("corpus in {}; scene 0 regenerates identically", out.display());
    Ok(())
}
