mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use crownrefine::cli::*;
use crownrefine::energy::{energy_gradient, EnergyWeights, SceneConfig};
use crownrefine::optimizer::{extract_detection, initialize_states};
use crownrefine::raster::{load_mask_pgm, save_float_raster, save_mask_pgm, ProbabilityMap};
use crownrefine::shapemodel::{load_model, save_model};
use crownrefine::synth::{read_manifest, training_crowns, write_seeds, SceneSpec, MANIFEST_FILE};
use proptest::prelude::*;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crownrefine")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_model_file(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.esm");
    save_model(common::small_model(), &path).unwrap();
    path
}

fn corpus_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().display().to_string(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_and_version_exit_cleanly() {
    let o = bin(&["--help"]);
    assert_eq!(code(&o), 0);
    let help = stdout(&o);
    for cmd in ["synth", "learn", "refine", "eval", "gradcheck", "demo", "config"] {
        assert!(help.contains(cmd), "{cmd}");
    }
    assert!(help.contains("Exit codes"));
    let o = bin(&["--version"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains(VERSION));
    assert_eq!(code(&bin(&["frobnicate"])), EXIT_USAGE);
    assert_eq!(code(&bin(&[])), EXIT_USAGE);
}

#[test]
fn config_prints_every_key_and_reparses() {
    let o = bin(&["config", "--set", "tau=12.5", "--rng-seed", "7"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let parsed = RunConfig::parse(&text).unwrap();
    assert_eq!(parsed.weights.tau, 12.5);
    assert_eq!(parsed.spec.rng_seed, 7);
    assert_eq!(text.lines().count(), KEYS.len());
}

#[test]
fn unknown_keys_fail_with_their_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["synth", "-n", "1", "-o", p(&dir.path().join("c")), "--set", "gamma_foo=1"]);
    assert_eq!(code(&o), EXIT_USAGE);
    assert!(stderr(&o).contains("gamma_foo"));

    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "tau = 4\nblurr_sigma = 2\n").unwrap();
    let o = bin(&["synth", "-n", "1", "-o", p(&dir.path().join("c")), "--config", p(&cfg)]);
    assert_eq!(code(&o), EXIT_USAGE);
    assert!(stderr(&o).contains("blurr_sigma"));
    assert!(!dir.path().join("c").exists());

    let o = bin(&["config", "--set", "tau=-1"]);
    assert_eq!(code(&o), EXIT_USAGE);
    assert_eq!(code(&bin(&["config", "--config", p(&dir.path().join("absent.cfg"))])), EXIT_IO);
    assert!(matches!(RunConfig::parse("tau = 1\ntau = 2\n"), Err(ConfigError::DuplicateKey { line: 2, .. })));
    assert!(matches!(RunConfig::parse("tau 1\n"), Err(ConfigError::Syntax { line: 1, .. })));
    assert!(matches!(RunConfig::parse("modes = two\n"), Err(ConfigError::BadValue { .. })));
}

#[test]
fn synth_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bin(&["synth", "-n", "1", "-o", p(out), "--rng-seed", "5"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let manifest = read_manifest(a.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.len(), 1);
    assert_eq!(manifest[0].rng_seed, 5);
    assert_eq!(corpus_bytes(&a), corpus_bytes(&b));
    let log = fs::read_to_string(a.join("synth.log")).unwrap();
    assert!(log.starts_with(&format!("# crownrefine {VERSION} synth\n")));
    assert!(log.contains("# rng_seed = 5"));

    let c = dir.path().join("c");
    bin(&["synth", "-n", "1", "-o", p(&c), "--rng-seed", "6"]);
    assert_ne!(corpus_bytes(&a), corpus_bytes(&c));
}

#[test]
fn learn_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let masks = dir.path().join("masks");
    fs::create_dir(&masks).unwrap();
    for (i, m) in training_crowns(&common::small_spec(), 40).unwrap().iter().enumerate() {
        save_mask_pgm(m, masks.join(format!("m{i:02}.pgm"))).unwrap();
    }
    let out = dir.path().join("model.esm");
    let o = bin(&["learn", "--masks", p(&masks), "-k", "32", "-o", p(&out), "--set", "frame=40"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let model = load_model(&out).unwrap();
    assert_eq!((model.eigen.frame, model.eigen.k()), (40, 32));
    assert!(model.eigen.orthonormality_error() < 1e-8);
    assert!(model.eigen.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    let text = stdout(&o);
    assert!(text.starts_with("mode  eigenvalue"));
    assert_eq!(text.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), 32);
}

#[test]
fn learn_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let masks = dir.path().join("masks");
    fs::create_dir(&masks).unwrap();
    for (i, m) in training_crowns(&common::small_spec(), 2).unwrap().iter().enumerate() {
        save_mask_pgm(m, masks.join(format!("m{i}.pgm"))).unwrap();
    }
    let out = dir.path().join("model.esm");
    let o = bin(&["learn", "--masks", p(&masks), "-k", "16", "-o", p(&out), "--set", "frame=40"]);
    assert_eq!(code(&o), EXIT_USAGE);
    assert!(!out.exists());

    save_mask_pgm(&common::block(60, 60, 2, 2, 58, 58), masks.join("huge.pgm")).unwrap();
    let o = bin(&["learn", "--masks", p(&masks), "-k", "4", "-o", p(&out), "--set", "frame=40"]);
    assert_eq!(code(&o), EXIT_USAGE);
    assert!(stderr(&o).contains("huge.pgm"));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(code(&bin(&["learn", "--masks", p(&empty), "-o", p(&out)])), EXIT_USAGE);
    assert_eq!(code(&bin(&["learn", "--masks", p(&dir.path().join("nope")), "-o", p(&out)])), EXIT_IO);
}

#[test]
fn refine_reports_io_failures() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model_file(dir.path());
    let scene = dir.path().join("scene");
    fs::create_dir(&scene).unwrap();
    save_float_raster(&ProbabilityMap::uniform(64, 64, 0.5).into_grid(), scene.join("posterior.fras")).unwrap();
    let out = dir.path().join("out");
    let o = bin(&["refine", "--scene", p(&scene), "--model", p(&model), "-o", p(&out)]);
    assert_eq!(code(&o), EXIT_IO);
    assert!(stderr(&o).contains("seeds.txt"));
    write_seeds(&[(32.0, 32.0)], scene.join("seeds.txt")).unwrap();
    let o = bin(&["refine", "--scene", p(&scene), "--model", p(&dir.path().join("none.esm")), "-o", p(&out)]);
    assert_eq!(code(&o), EXIT_IO);
}

#[test]
fn zero_iterations_emit_the_initial_mean_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = small_model_file(dir.path());
    let corpus = dir.path().join("corpus");
    let spec_args = ["--set", "width=96", "--set", "height=96", "--set", "crowns_min=2", "--set", "crowns_max=4", "--set", "radius_min=5", "--set", "radius_max=8"];
    let mut args = vec!["synth", "-n", "1", "-o", p(&corpus)];
    args.extend(spec_args);
    assert_eq!(code(&bin(&args)), 0);
    let scene = corpus.join("scene_00000");
    let out = dir.path().join("out");
    let mut args = vec!["refine", "--scene", p(&scene), "--model", p(&model_path), "-o", p(&out), "--max-iters", "0"];
    args.extend(spec_args);
    let o = bin(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("vs ground truth"));

    let files = crownrefine::synth::load_scene_dir(&scene).unwrap();
    let config = SceneConfig::new(
        ProbabilityMap::from_grid(files.posterior),
        files.seeds,
        RunConfig::default().delta,
        EnergyWeights::default(),
        common::small_model(),
    )
    .unwrap();
    let state = initialize_states(&config);
    for i in 0..config.contour_count() {
        let expected = extract_detection(&state, i, &config).unwrap().mask;
        assert_eq!(load_mask_pgm(out.join(format!("det_{i:03}.pgm"))).unwrap(), expected);
    }
    let log = fs::read_to_string(out.join("refine.log")).unwrap();
    assert!(log.contains("# max_iters = 0"));
    assert!(log.contains("# stop "));
}

#[test]
fn perfect_scene_is_refined_to_high_iou() {
    let dir = tempfile::tempdir().unwrap();
    let model = common::default_model();
    let model_path = dir.path().join("model.esm");
    save_model(model, &model_path).unwrap();
    let fixture = common::known_optimum(model, 0, 160, 0.0, 0.0, true);
    let scene = dir.path().join("scene");
    fs::create_dir(&scene).unwrap();
    save_float_raster(fixture.posterior.grid(), scene.join("posterior.fras")).unwrap();
    write_seeds(&[fixture.seed], scene.join("seeds.txt")).unwrap();
    save_mask_pgm(&fixture.mask, scene.join("gt_000.pgm")).unwrap();
    let out = dir.path().join("out");
    let o = bin(&["refine", "--scene", p(&scene), "--model", p(&model_path), "-o", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("vs ground truth")).unwrap();
    let iou: f64 = line.split_whitespace().nth(5).unwrap().parse().unwrap();
    assert!(iou >= 0.95, "{line}");
}

#[test]
fn eval_of_identical_masks_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    let det = dir.path().join("det");
    fs::create_dir(&gt).unwrap();
    fs::create_dir(&det).unwrap();
    for i in 0..3 {
        let m = common::disk(64, 64, 12.0 + 18.0 * i as f64, 30.0, 6.0);
        save_mask_pgm(&m, gt.join(format!("gt_{i:03}.pgm"))).unwrap();
        save_mask_pgm(&m, det.join(format!("det_{i:03}.pgm"))).unwrap();
    }
    let out = dir.path().join("report");
    let o = bin(&["eval", "--gt", p(&gt), "--det", p(&det), "-o", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!((json["precision"].as_f64(), json["recall"].as_f64(), json["mean_iou"].as_f64()), (Some(1.0), Some(1.0), Some(1.0)));
    assert_eq!(fs::read_to_string(out.join("pairs.csv")).unwrap().lines().count(), 4);

    let empty = dir.path().join("none");
    fs::create_dir(&empty).unwrap();
    let o = bin(&["eval", "--gt", p(&gt), "--det", p(&empty)]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("(no detections)"));
    let json_start = text.find('{').unwrap();
    let json: serde_json::Value = serde_json::from_str(&text[json_start..]).unwrap();
    assert_eq!(json["recall"], 0.0);
    assert_eq!(json["no_detections"], true);

    let o = bin(&["eval", "--gt", p(&gt), "--det", p(&det), "--baseline", p(&empty)]);
    assert!(stdout(&o).contains("baseline"));
    assert_eq!(code(&bin(&["eval", "--gt", p(&dir.path().join("x")), "--det", p(&det)])), EXIT_IO);
}

#[test]
fn gradcheck_passes_and_catches_a_sign_flip() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = small_model_file(dir.path());
    let o = bin(&["gradcheck", "--model", p(&model_path), "--trials", "3"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("PASS"));

    let config = RunConfig::default();
    let flip = |g: &mut [f64]| {
        let i = (0..g.len()).max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs())).unwrap();
        g[i] = -g[i];
    };
    assert_eq!(cmd_gradcheck(&config, &model_path, 2, Some(&flip)).unwrap(), EXIT_CHECK);

    let model = common::small_model();
    let report = gradcheck(&config.spec, model, config.delta, config.fd_step, 2, Some(&flip)).unwrap();
    assert!(!report.passed());
    let worst = report.worst().unwrap();
    let (problem, state) = random_problem(&config.spec, model, config.delta, worst.trial, worst.contours).unwrap();
    let g = energy_gradient(&state, &problem).unwrap();
    let largest = (0..g.len()).max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs())).unwrap();
    assert_eq!(worst.coordinate, largest);
    assert_eq!(worst.analytic, -g[largest]);
    let summary = report.summary(model.eigen.k());
    assert!(summary.contains(&format!("coordinate {largest}")));
    assert!(summary.contains(&format!("analytic {:.12e}", worst.analytic)));
    assert!(summary.contains(&format!("numeric {:.12e}", worst.numeric)));
    assert!(summary.ends_with("FAIL (tolerance 1e-4)\n"));
    assert_eq!(code(&bin(&["gradcheck", "--model", p(&model_path), "--trials", "0"])), EXIT_USAGE);
}

#[test]
fn relative_error_uses_a_unit_floor() {
    assert_eq!(relative_error(2.0, 1.0), 0.5);
    assert_eq!(relative_error(1e-3, 0.0), 1e-3);
    assert_eq!(relative_error(-4.0, 4.0), 2.0);
    assert_eq!(relative_error(0.0, 0.0), 0.0);
}

#[test]
fn jobs_flag_is_validated() {
    assert_eq!(code(&bin(&["--jobs", "0", "config"])), EXIT_USAGE);
    assert_eq!(code(&bin(&["--jobs", "2", "config"])), 0);
}

fn arb_config() -> impl Strategy<Value = Vec<(&'static str, String)>> {
    let floats = prop::sample::select(vec!["fourier_amp", "min_gap", "blur_sigma", "noise_sigma", "gamma_shp", "tau", "delta", "rel_tol", "epsilon", "fd_step", "radius_min"]);
    let ints = prop::sample::select(vec!["rng_seed", "max_iters", "memory", "train_crowns", "width"]);
    (
        prop::collection::vec((floats, any::<f64>().prop_filter("finite", |v| v.is_finite())), 0..6),
        prop::collection::vec((ints, any::<u32>()), 0..4),
        any::<i64>(),
    )
        .prop_map(|(fs, is, signed)| {
            let mut v: Vec<(&'static str, String)> = fs.into_iter().map(|(k, x)| (k, format!("{x:?}"))).collect();
            v.extend(is.into_iter().map(|(k, x)| (k, x.to_string())));
            v.push(("baseline_erode_dilate_min", signed.to_string()));
            v
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_echo_round_trips(settings in arb_config()) {
        let mut c = RunConfig::default();
        for (k, v) in &settings {
            c.set(k, v).unwrap();
        }
        let echoed = c.echo();
        prop_assert_eq!(RunConfig::parse(&echoed).unwrap(), c.clone());
        prop_assert_eq!(RunConfig::parse(&echoed).unwrap().echo(), echoed);
    }
}

#[test]
fn default_config_matches_the_library_defaults() {
    let c = RunConfig::default();
    assert_eq!(c.spec, SceneSpec::default());
    assert_eq!(c.weights, EnergyWeights::default());
    assert_eq!((c.weights.gamma_shp, c.weights.gamma_img, c.weights.gamma_ovp, c.weights.tau), (1.0, 1.0, 5.0, 20.0));
    assert_eq!(c.delta, 10.0);
    c.validate().unwrap();
}
