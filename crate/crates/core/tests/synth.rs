use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use crownrefine::raster::{centroid, connected_components, BinaryMask, P_MIN};
use crownrefine::synth::*;
use proptest::prelude::*;

fn quiet_spec() -> SceneSpec {
    SceneSpec {
        blur_sigma: 0.0,
        noise_sigma: 0.0,
        seed_jitter_mean: 0.0,
        baseline_miss_rate: 0.0,
        baseline_erode_dilate: (0, 0),
        ..SceneSpec::default()
    }
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn zero_amplitude_crowns_are_disks() {
    for r0 in [8.0, 13.5, 21.0] {
        let spec = SceneSpec { fourier_amp: 0.0, radius: (r0, r0), ..SceneSpec::default() };
        let crown = sample_crown(&mut scene_rng(3, 1), &spec).unwrap();
        let c = crown.center() as f64;
        let disk = BinaryMask::from_fn(crown.mask.width(), crown.mask.height(), |x, y| (x as f64 - c).hypot(y as f64 - c) <= r0);
        assert_eq!(crown.mask, disk);
        assert_eq!((crown.radius, crown.max_radius), (r0, r0));
    }
}

#[test]
fn crowns_are_reproducible() {
    let spec = SceneSpec::default();
    let a = sample_crown(&mut scene_rng(11, 4), &spec).unwrap();
    let b = sample_crown(&mut scene_rng(11, 4), &spec).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_crown(&mut scene_rng(11, 5), &spec).unwrap());
}

#[test]
fn oversized_crowns_are_scaled_to_the_cap() {
    let spec = SceneSpec { radius: (RADIUS_CAP, RADIUS_CAP), fourier_amp: 0.3, ..SceneSpec::default() };
    let mut rng = scene_rng(0, 0);
    for _ in 0..20 {
        let crown = sample_crown(&mut rng, &spec).unwrap();
        assert!(crown.max_radius <= RADIUS_CAP + 1e-9);
        let c = crown.center() as f64;
        assert!(crown.mask.iter_true().all(|(x, y)| (x as f64 - c).hypot(y as f64 - c) <= RADIUS_CAP + 1e-9));
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let d = SceneSpec::default();
    let bad = [
        SceneSpec { crowns: (4, 3), ..d.clone() },
        SceneSpec { crowns: (0, 3), ..d.clone() },
        SceneSpec { radius: (9.0, 8.0), ..d.clone() },
        SceneSpec { radius: (8.0, RADIUS_CAP + 1.0), ..d.clone() },
        SceneSpec { baseline_miss_rate: -0.1, ..d.clone() },
        SceneSpec { false_positive_rate: 1.1, ..d.clone() },
        SceneSpec { noise_sigma: f64::NAN, ..d.clone() },
        SceneSpec { baseline_erode_dilate: (2, 1), ..d.clone() },
        SceneSpec { width: 4, ..d.clone() },
    ];
    for s in bad {
        assert!(matches!(s.validate(), Err(SynthError::InvalidSpec(_))), "{s:?}");
        assert!(generate_scene(&s, 0).is_err());
    }
    assert_eq!(RADIUS_CAP, 44.0);
}

#[test]
fn quiet_spec_reproduces_the_ground_truth() {
    for index in 0..3 {
        let scene = generate_scene(&quiet_spec(), index).unwrap();
        let union = gt_union(&scene);
        for (p, u) in scene.posterior.grid().values().iter().zip(union.values()) {
            assert_eq!(*p, if *u > 0.5 { 1.0 - P_MIN } else { P_MIN });
        }
        assert_eq!(scene.seeds, scene.gt_centroids);
        assert_eq!(scene.seeds.len(), scene.gt_masks.len());
        for (b, g) in scene.baseline_detections.iter().zip(&scene.gt_masks) {
            assert_eq!(&b.mask, g);
            assert_eq!(b.image_id, scene.id);
        }
        for (c, m) in scene.gt_centroids.iter().zip(&scene.gt_masks) {
            assert_eq!(*c, centroid(m).unwrap());
        }
    }
}

#[test]
fn seed_jitter_matches_the_target_mean_deviation() {
    let spec = SceneSpec::default();
    let (mut total, mut count) = (0.0, 0usize);
    for index in 0..1000 {
        let scene = generate_scene(&spec, index).unwrap();
        for (seed, src) in scene.seeds.iter().zip(&scene.seed_sources) {
            let c = scene.gt_centroids[src.unwrap()];
            total += (seed.0 - c.0).hypot(seed.1 - c.1);
            count += 1;
        }
    }
    let mean = total / count as f64;
    assert!((mean - 3.4).abs() <= 0.2, "mean seed deviation {mean}");
}

#[test]
fn default_corpus_has_about_750_crowns() {
    let dir = tempfile::tempdir().unwrap();
    let entries = emit_corpus(&SceneSpec::default(), 75, dir.path()).unwrap();
    let total: usize = entries.iter().map(|e| e.crowns).sum();
    assert!((675..=825).contains(&total), "{total} crowns");
}

#[test]
fn single_scene_corpus_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let entries = emit_corpus(&SceneSpec::default(), 1, dir.path()).unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!(read_manifest(dir.path().join(MANIFEST_FILE)).unwrap(), entries);
    let scene = generate_scene(&SceneSpec::default(), 0).unwrap();
    let files = load_scene_dir(dir.path().join(&entries[0].scene)).unwrap();
    assert_eq!(files.id, "scene_00000");
    assert_eq!(files.posterior.dims(), (256, 256));
    let stored = files.posterior.values().iter().zip(scene.posterior.grid().values());
    assert!(stored.into_iter().all(|(a, b)| *a == (*b as f32) as f64));
    assert_eq!(files.seeds, scene.seeds);
    assert_eq!(files.gt_masks, scene.gt_masks);
    assert_eq!(files.baseline_masks, scene.baseline_detections.iter().map(|d| d.mask.clone()).collect::<Vec<_>>());
    assert_eq!(entries[0].crowns, scene.gt_masks.len());
    assert_eq!(entries[0].spec, SceneSpec::default());
}

#[test]
fn manifest_regenerates_a_byte_identical_corpus() {
    let spec = SceneSpec { rng_seed: 99, false_positive_rate: 0.2, ..SceneSpec::default() };
    let a = tempfile::tempdir().unwrap();
    let entries = emit_corpus(&spec, 4, a.path()).unwrap();
    let b = tempfile::tempdir().unwrap();
    for e in read_manifest(a.path().join(MANIFEST_FILE)).unwrap() {
        write_scene(&regenerate_scene(&e).unwrap(), b.path().join(&e.scene)).unwrap();
    }
    fs::copy(a.path().join(MANIFEST_FILE), b.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(read_tree(a.path()), read_tree(b.path()));
    let c = tempfile::tempdir().unwrap();
    assert_eq!(emit_corpus(&spec, 4, c.path()).unwrap(), entries);
    assert_eq!(read_tree(a.path()), read_tree(c.path()));
}

#[test]
fn seeds_file_round_trips_and_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("seeds.txt");
    let seeds = vec![(0.1 + 0.2, 1e-17), (255.0, 3.141592653589793)];
    write_seeds(&seeds, &p).unwrap();
    assert_eq!(read_seeds(&p).unwrap(), seeds);
    fs::write(&p, "# header\n\n1 2\n").unwrap();
    assert_eq!(read_seeds(&p).unwrap(), vec![(1.0, 2.0)]);
    for bad in ["1 2 3\n", "1 x\n", "1 inf\n"] {
        fs::write(&p, bad).unwrap();
        assert!(matches!(read_seeds(&p), Err(SynthError::Format { .. })), "{bad:?}");
    }
    assert!(matches!(read_seeds(dir.path().join("missing.txt")), Err(SynthError::Io { .. })));
}

#[test]
fn false_positive_seeds_sit_on_background() {
    let spec = SceneSpec { false_positive_rate: 0.3, ..SceneSpec::default() };
    let mut found = 0;
    for index in 0..10 {
        let scene = generate_scene(&spec, index).unwrap();
        let union = gt_union(&scene);
        for i in scene.false_positive_seeds() {
            let (x, y) = scene.seeds[i];
            found += 1;
            for (u, v) in (0..union.height()).flat_map(|v| (0..union.width()).map(move |u| (u, v))) {
                if union.get(u, v) > 0.5 {
                    assert!((u as f64 - x).hypot(v as f64 - y) >= FALSE_POSITIVE_CLEARANCE);
                }
            }
        }
        assert_eq!(scene.seeds.len(), scene.baseline_detections.len());
    }
    assert!(found > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn crown_area_stays_within_radial_bounds(seed in any::<u64>(), lo in 8.0f64..20.0, span in 0.0f64..20.0, amp in 0.0f64..0.15) {
        let spec = SceneSpec { radius: (lo, lo + span), fourier_amp: amp, ..SceneSpec::default() };
        let crown = sample_crown(&mut scene_rng(seed, 0), &spec).unwrap();
        let k = spec.fourier_orders as f64;
        let outer = (spec.radius.1 * (1.0 + k * amp)).min(RADIUS_CAP);
        let area = crown.mask.count() as f64;
        prop_assert!(area >= PI * (lo - 1.0).powi(2), "area {} below {}", area, PI * lo * lo);
        prop_assert!(area <= PI * (outer + 1.0).powi(2));
        prop_assert!(crown.mask.get(crown.center(), crown.center()));
    }

    #[test]
    fn scenes_are_deterministic_and_well_formed(seed in 0u64..1000, index in 0usize..50) {
        let spec = SceneSpec { rng_seed: seed, false_positive_rate: 0.1, ..SceneSpec::default() };
        let a = generate_scene(&spec, index).unwrap();
        prop_assert_eq!(&a, &generate_scene(&spec, index).unwrap());
        prop_assert!(a.posterior.grid().values().iter().all(|p| (P_MIN..=1.0 - P_MIN).contains(p)));
        prop_assert_eq!(a.seeds.len(), a.baseline_detections.len());
        prop_assert_eq!(a.seeds.len(), a.seed_sources.len());
        let true_seeds = a.seed_sources.iter().filter(|s| s.is_some()).count();
        prop_assert!(true_seeds <= a.gt_masks.len());
        prop_assert!((spec.crowns.0..=spec.crowns.1).contains(&a.gt_masks.len()));
        for (x, y) in &a.seeds {
            prop_assert!((0.0..=255.0).contains(x) && (0.0..=255.0).contains(y));
        }
        prop_assert_eq!(a.gt_masks.iter().map(|m| centroid(m).unwrap()).collect::<Vec<_>>(), a.gt_centroids.clone());
    }

    #[test]
    fn separated_crowns_are_the_connected_components(seed in 0u64..1000, gap in 0.5f64..4.0) {
        let spec = SceneSpec { rng_seed: seed, min_gap: gap, crowns: (3, 8), radius: (8.0, 24.0), ..SceneSpec::default() };
        let scene = generate_scene(&spec, 0).unwrap();
        let mut union = BinaryMask::new(256, 256);
        for m in &scene.gt_masks {
            union.union_with(m);
        }
        let key = |m: &BinaryMask| m.iter_true().next().unwrap();
        let mut gt = scene.gt_masks.clone();
        gt.sort_by_key(key);
        let mut comps = connected_components(&union);
        comps.sort_by_key(key);
        prop_assert_eq!(comps, gt);
    }
}
