mod common;

use crownrefine::energy::*;
use crownrefine::evalkit::iou;
use crownrefine::optimizer::*;
use crownrefine::raster::{centroid, decode_pgm, BinaryMask, encode_pgm, load_mask_pgm, Grid, ProbabilityMap, P_MIN};
use crownrefine::shapemodel::{frame_center, mask_to_sdf, EigenshapeModel, KdePrior, ShapeCoefficients, ShapeModel};
use crownrefine::synth::generate_scene;

fn scene_config(index: usize) -> SceneConfig<'static> {
    let scene = generate_scene(&common::small_spec(), index).unwrap();
    SceneConfig::new(scene.posterior, scene.seeds, 6.0, EnergyWeights::default(), common::small_model()).unwrap()
}

#[test]
fn initialization_is_the_mean_shape_at_every_seed() {
    let config = scene_config(0);
    let state = initialize_states(&config);
    assert_eq!(state.len(), config.contour_count());
    for (c, s) in state.contours.iter().zip(config.seeds()) {
        assert!(c.alpha.0.iter().all(|a| *a == 0.0));
        assert_eq!(c.offset, *s);
    }
    assert!(box_excess(&state, &config) <= -config.delta());
    assert!(total_energy(&state, &config).unwrap().total.is_finite());
}

#[test]
fn zero_iterations_return_the_initialization() {
    let config = scene_config(1);
    let settings = OptimizerSettings { max_iters: 0, ..OptimizerSettings::default() };
    let r = refine(&config, &settings).unwrap();
    assert_eq!(r.iterations, 0);
    assert_eq!(r.final_state, initialize_states(&config));
    assert_eq!(r.final_state, r.initial_state);
    assert_eq!(r.energy_trace.len(), 1);
    assert_eq!(r.stop_reason, StopReason::MaxIterations);
    for d in &r.detections {
        assert_eq!(d, &extract_detection(&r.initial_state, d.contour, &config).unwrap());
    }
}

fn centroid_error(r: &RefinementResult, truth: &BinaryMask) -> f64 {
    let (a, b) = (r.detections[0].centroid, centroid(truth).unwrap());
    (a.0 - b.0).hypot(a.1 - b.1)
}

// The object is recovered, but the coefficients can absorb part of the
// translation, so the offset parameter itself may settle a few pixels away.
#[test]
fn placed_mean_shape_is_recovered_without_the_shape_term() {
    let model = common::default_model();
    for stream in 0..4 {
        let fixture = common::known_optimum(model, stream, 160, 0.0, 0.0, true);
        let weights = EnergyWeights { gamma_shp: 0.0, ..EnergyWeights::default() };
        let config = SceneConfig::new(fixture.posterior, vec![fixture.seed], 10.0, weights, model).unwrap();
        let r = refine(&config, &OptimizerSettings::default()).unwrap();
        assert!(r.converged && r.is_monotone() && r.is_feasible());
        assert_eq!(r.detections.len(), 1);
        let score = iou(&r.detections[0].mask, &fixture.mask).unwrap();
        assert!(score >= 0.95, "stream {stream}: IoU {score}");
        let err = centroid_error(&r, &fixture.mask);
        assert!(err <= 1.0, "stream {stream}: centroid error {err}");
    }
}

#[test]
fn generating_parameters_are_not_the_energy_minimum() {
    let model = common::default_model();
    let fixture = common::known_optimum(model, 0, 160, 0.0, 0.0, true);
    let weights = EnergyWeights { gamma_shp: 0.0, ..EnergyWeights::default() };
    let config = SceneConfig::new(fixture.posterior, vec![fixture.seed], 10.0, weights, model).unwrap();
    let truth = ContourState { contours: vec![Contour { alpha: ShapeCoefficients(fixture.alpha), offset: fixture.truth }] };
    let at_truth = total_energy(&truth, &config).unwrap().total;
    let r = refine(&config, &OptimizerSettings::default()).unwrap();
    assert!(r.final_energy().total < at_truth);
}

#[test]
fn displaced_seeds_still_find_the_placed_shape() {
    let model = common::default_model();
    for stream in 0..6 {
        let fixture = common::known_optimum(model, stream, 160, 1.0, 3.0, false);
        let config = SceneConfig::new(fixture.posterior, vec![fixture.seed], 10.0, EnergyWeights::default(), model).unwrap();
        let r = refine(&config, &OptimizerSettings::default()).unwrap();
        let score = iou(&r.detections[0].mask, &fixture.mask).unwrap();
        assert!(score >= 0.9, "stream {stream}: IoU {score}");
        let err = centroid_error(&r, &fixture.mask);
        assert!(err <= 1.0, "stream {stream}: centroid error {err}");
    }
}

#[test]
fn flat_background_posterior_prunes_the_contour() {
    let model = common::small_model();
    let config = SceneConfig::new(ProbabilityMap::uniform(80, 80, P_MIN), vec![(40.0, 40.0)], 6.0, EnergyWeights::default(), model).unwrap();
    let r = refine(&config, &OptimizerSettings::default()).unwrap();
    assert_eq!(r.pruned, vec![0]);
    assert!(r.kept.is_empty() && r.detections.is_empty());
    assert!(r.final_energy().total < r.energy_trace[0].energy.total);
    assert!(r.is_monotone() && r.is_feasible());
}

#[test]
fn prune_boundary_keeps_area_exactly_at_the_minimum() {
    let config = scene_config(2);
    let state = initialize_states(&config);
    let (_, _, areas) = prune_empty(&state, &config, 0.0);
    let area = areas[0] as f64;
    let (kept, pruned, _) = prune_empty(&state, &config, area);
    assert!(kept.contains(&0) && !pruned.contains(&0));
    let (kept, pruned, _) = prune_empty(&state, &config, area + 1.0);
    assert!(pruned.contains(&0) && !kept.contains(&0));
    let (kept, _, _) = prune_empty(&state, &config, DEFAULT_AREA_MIN);
    assert_eq!(kept.len(), state.len());
}

#[test]
fn positive_level_set_is_pruned_even_with_zero_minimum() {
    let frame = 21;
    let mean = mask_to_sdf(&common::disk(frame, frame, 10.0, 10.0, 6.0)).unwrap();
    let constant = Grid::filled(frame, frame, 1.0 / frame as f64);
    let eigen = EigenshapeModel { frame, mean: mean.clone(), modes: vec![constant], eigenvalues: vec![1.0], epsilon: 1.0 };
    let model = ShapeModel { eigen, prior: KdePrior::new(vec![vec![0.0], vec![1.0]], 1.0).unwrap() };
    let config = SceneConfig::new(ProbabilityMap::uniform(40, 40, 0.5), vec![(20.0, 20.0), (20.0, 20.0)], 3.0, EnergyWeights::default(), &model).unwrap();
    let lift = -mean.min() * frame as f64 + 1.0;
    let state = ContourState {
        contours: vec![
            Contour { alpha: ShapeCoefficients(vec![lift]), offset: (20.0, 20.0) },
            Contour { alpha: ShapeCoefficients(vec![0.0]), offset: (20.0, 20.0) },
        ],
    };
    let (kept, pruned, areas) = prune_empty(&state, &config, 0.0);
    assert_eq!((kept, pruned), (vec![1], vec![0]));
    assert_eq!(areas[0], 0);
    assert!(matches!(extract_detection(&state, 0, &config), Err(OptimizerError::EmptyDetection(0))));
}

#[test]
fn extracted_mask_is_the_translated_mean_interior() {
    let model = common::small_model();
    let anchor = frame_center(model.eigen.frame);
    let offset = (37.0 + anchor.fract(), 44.0 + anchor.fract());
    let config = SceneConfig::new(ProbabilityMap::uniform(100, 100, 0.5), vec![offset], 5.0, EnergyWeights::default(), model).unwrap();
    let state = initialize_states(&config);
    let det = extract_detection(&state, 0, &config).unwrap();
    let interior = model.eigen.generate(&ShapeCoefficients::zeros(model.eigen.k())).threshold(0.5);
    let (dx, dy) = ((offset.0 - anchor) as i64, (offset.1 - anchor) as i64);
    assert_eq!(det.mask, interior.translated(dx, dy, 100, 100));

    let field = &place_shapes(&state, &config).unwrap()[0];
    assert_eq!(det.mask.count(), field.values().iter().filter(|v| **v >= 0.5).count());
    assert_eq!(decode_pgm(&encode_pgm(&det.mask)).unwrap(), det.mask);
}

#[test]
fn traces_are_monotone_feasible_and_reproducible() {
    for index in 0..4 {
        let config = scene_config(index);
        let a = refine(&config, &OptimizerSettings::default()).unwrap();
        assert!(a.is_monotone(), "scene {index}");
        assert!(a.is_feasible(), "scene {index}");
        assert!(a.final_energy().total <= a.energy_trace[0].energy.total);
        assert_eq!(a.detections.len() + a.pruned.len(), config.contour_count());
        assert_eq!(a.energy_trace.len(), a.iterations + 1);
        assert_eq!(a.converged, matches!(a.stop_reason, StopReason::RelativeDecrease | StopReason::ProjectedGradient));
        for (c, s) in a.final_state.contours.iter().zip(config.seeds()) {
            assert!((c.offset.0 - s.0).abs() <= config.delta() + 1e-9);
            assert!((c.offset.1 - s.1).abs() <= config.delta() + 1e-9);
        }
        let b = refine(&config, &OptimizerSettings::default()).unwrap();
        assert_eq!(a.energy_trace, b.energy_trace);
        assert_eq!(a.final_state, b.final_state);
    }
}

#[test]
fn tight_boxes_are_respected() {
    let scene = generate_scene(&common::small_spec(), 5).unwrap();
    let config = SceneConfig::new(scene.posterior, scene.seeds, 0.5, EnergyWeights::default(), common::small_model()).unwrap();
    let r = refine(&config, &OptimizerSettings::default()).unwrap();
    assert!(r.is_feasible() && r.is_monotone());
}

#[test]
fn iteration_cap_is_honored() {
    let config = scene_config(3);
    let settings = OptimizerSettings { max_iters: 3, rel_tol: 1e-300, grad_tol: 1e-300, ..OptimizerSettings::default() };
    let r = refine(&config, &settings).unwrap();
    assert!(r.iterations <= 3);
    if r.iterations == 3 {
        assert_eq!(r.stop_reason, StopReason::MaxIterations);
        assert!(!r.converged);
    }
}

#[test]
fn invalid_settings_are_rejected() {
    let config = scene_config(0);
    let base = OptimizerSettings::default();
    let bad = [
        OptimizerSettings { memory: 0, ..base },
        OptimizerSettings { rel_tol: 0.0, ..base },
        OptimizerSettings { grad_tol: -1.0, ..base },
        OptimizerSettings { area_min: -1.0, ..base },
        OptimizerSettings { line_search: LineSearch { shrink: 1.0, ..base.line_search }, ..base },
        OptimizerSettings { line_search: LineSearch { c: 1.0, ..base.line_search }, ..base },
        OptimizerSettings { line_search: LineSearch { max_trials: 0, ..base.line_search }, ..base },
    ];
    for s in bad {
        assert!(matches!(refine(&config, &s), Err(OptimizerError::InvalidSettings(_))), "{s:?}");
    }
}

#[test]
fn detections_and_index_are_written() {
    let config = scene_config(4);
    let r = refine(&config, &OptimizerSettings::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let entries = write_detections(&r, "scene_x", dir.path()).unwrap();
    assert_eq!(entries.len(), config.contour_count());
    assert_eq!(read_detection_index(dir.path().join(DETECTION_INDEX)).unwrap(), entries);
    for e in &entries {
        assert_eq!(e.image_id, "scene_x");
        assert_eq!(e.area, r.areas[e.detection_id]);
        match &e.file {
            Some(name) => {
                assert!(!e.pruned);
                let mask = load_mask_pgm(dir.path().join(name)).unwrap();
                let det = r.detections.iter().find(|d| d.contour == e.detection_id).unwrap();
                assert_eq!(mask, det.mask);
                assert_eq!((e.centroid_x, e.centroid_y), (Some(det.centroid.0), Some(det.centroid.1)));
            }
            None => assert!(e.pruned && e.centroid_x.is_none()),
        }
    }
    let log = r.log();
    assert!(log.starts_with("# iter total shape image overlap grad_norm step\n"));
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), r.energy_trace.len());
    assert!(log.lines().last().unwrap().starts_with("# stop "));
}
