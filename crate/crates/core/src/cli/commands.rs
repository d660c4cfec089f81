use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::energy::{EnergyError, SceneConfig};
use crate::evalkit::{comparison_table, match_detections, recall_vs_crowding, Detection, EvalError, MatchReport};
use crate::optimizer::{refine, write_detections, OptimizerError, RefinementResult, StopReason};
use crate::raster::{load_float_raster, load_mask_pgm, save_mask_pgm, BinaryMask, ProbabilityMap, RasterError};
use crate::shapemodel::{align_mask, fit_shape_model, load_model, save_model, ShapeModel, ShapeModelError};
use crate::synth::{emit_corpus, read_manifest, read_seeds, training_crowns, SynthError, MANIFEST_FILE};

use super::gradcheck::{gradcheck, GradcheckError};
use super::{RunConfig, EXIT_CHECK, EXIT_IO, EXIT_OK, EXIT_USAGE, VERSION};

/// A failed command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Io(_) => EXIT_IO,
            Self::Check(_) => EXIT_CHECK,
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io { .. } | SynthError::Format { .. } | SynthError::Raster(_) => Self::Io(e.to_string()),
            _ => Self::Usage(e.to_string()),
        }
    }
}

impl From<ShapeModelError> for CliError {
    fn from(e: ShapeModelError) -> Self {
        match e {
            ShapeModelError::Io(_) | ShapeModelError::Format(_) | ShapeModelError::Raster(_) => Self::Io(e.to_string()),
            _ => Self::Usage(e.to_string()),
        }
    }
}

impl From<OptimizerError> for CliError {
    fn from(e: OptimizerError) -> Self {
        match e {
            OptimizerError::Io { .. } | OptimizerError::Raster(_) => Self::Io(e.to_string()),
            OptimizerError::InvalidSettings(_) | OptimizerError::Energy(_) => Self::Usage(e.to_string()),
            _ => Self::Check(e.to_string()),
        }
    }
}

impl From<EnergyError> for CliError {
    fn from(e: EnergyError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<RasterError> for CliError {
    fn from(e: RasterError) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<GradcheckError> for CliError {
    fn from(e: GradcheckError) -> Self {
        match e {
            GradcheckError::Synth(e) => e.into(),
            GradcheckError::Energy(e) => e.into(),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

/// Version line and configuration echo, each line commented.
fn log_header(command: &str, config: &RunConfig) -> String {
    let mut s = format!("# crownrefine {VERSION} {command}\n");
    for line in config.echo().lines() {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s
}

/// `synth`: writes a corpus and `synth.log` into `out`.
pub fn cmd_synth(config: &RunConfig, n: usize, out: &Path) -> Result<i32, CliError> {
    let entries = emit_corpus(&config.spec, n, out)?;
    let crowns: usize = entries.iter().map(|e| e.crowns).sum();
    let seeds: usize = entries.iter().map(|e| e.seeds).sum();
    let summary = format!("scenes {}  crowns {crowns}  seeds {seeds}\n", entries.len());
    write_file(&out.join("synth.log"), log_header("synth", config) + &summary)?;
    print!("{summary}");
    Ok(EXIT_OK)
}

fn pgm_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with(prefix) && n.ends_with(".pgm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Learns a model from masks, naming the offending file on failure.
pub(crate) fn learn_model(config: &RunConfig, masks: &[(PathBuf, BinaryMask)]) -> Result<ShapeModel, CliError> {
    if masks.is_empty() {
        return Err(CliError::Usage("no training masks".into()));
    }
    for (path, mask) in masks {
        align_mask(mask, config.frame).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    let bare: Vec<BinaryMask> = masks.iter().map(|(_, m)| m.clone()).collect();
    let model = fit_shape_model(&bare, config.frame, config.modes, config.epsilon)?;
    let err = model.eigen.orthonormality_error();
    if !(err < 1e-8) {
        return Err(CliError::Check(format!("mode orthonormality error {err:e} exceeds 1e-8")));
    }
    Ok(model)
}

fn spectrum(model: &ShapeModel) -> String {
    let total: f64 = model.eigen.eigenvalues.iter().sum();
    let mut s = String::from("mode  eigenvalue        cumulative\n");
    let mut acc = 0.0;
    for (j, l) in model.eigen.eigenvalues.iter().enumerate() {
        acc += l;
        let frac = if total > 0.0 { acc / total } else { 0.0 };
        s.push_str(&format!("{j:>4}  {l:>16.6}  {frac:>10.6}\n"));
    }
    s.push_str(&format!(
        "kde bandwidth {:.6}  samples {}  orthonormality error {:.3e}\n",
        model.prior.bandwidth(),
        model.prior.samples().len(),
        model.eigen.orthonormality_error()
    ));
    s
}

/// `learn`: fits a model to every `*.pgm` in `masks_dir` and saves it.
pub fn cmd_learn(config: &RunConfig, masks_dir: &Path, out: &Path) -> Result<i32, CliError> {
    let masks = pgm_files(masks_dir, "")?
        .into_iter()
        .map(|p| load_mask_pgm(&p).map(|m| (p.clone(), m)).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let model = learn_model(config, &masks)?;
    save_model(&model, out)?;
    print!("{}", spectrum(&model));
    Ok(EXIT_OK)
}

/// What refining one scene produced.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSummary {
    pub id: String,
    pub seeds: usize,
    pub kept: Vec<usize>,
    pub pruned: Vec<usize>,
    pub iterations: usize,
    pub stop: Option<StopReason>,
    pub trace_totals: Vec<f64>,
    pub monotone: bool,
    pub feasible: bool,
}

impl SceneSummary {
    fn line(&self) -> String {
        let energy = match (self.trace_totals.first(), self.trace_totals.last()) {
            (Some(a), Some(b)) => format!("energy {a:.6e} -> {b:.6e}"),
            _ => "no seeds".to_string(),
        };
        let stop = self.stop.as_ref().map_or("none".to_string(), |s| format!("{s:?}"));
        format!(
            "{}: seeds {} kept {} pruned {} iterations {} {energy} stop {stop}\n",
            self.id,
            self.seeds,
            self.kept.len(),
            self.pruned.len(),
            self.iterations,
        )
    }
}

fn empty_result_log(header: &str) -> String {
    format!("{header}# iter total shape image overlap grad_norm step\n# no seeds\n")
}

fn refine_scene_dir(
    config: &RunConfig,
    model: &ShapeModel,
    scene_dir: &Path,
    out_dir: &Path,
    id: &str,
) -> Result<SceneSummary, CliError> {
    let posterior = load_float_raster(scene_dir.join("posterior.fras"))
        .map_err(|e| CliError::Io(format!("{}: {e}", scene_dir.join("posterior.fras").display())))?;
    let seeds = read_seeds(scene_dir.join("seeds.txt"))?;
    create_dir(out_dir)?;
    let header = log_header("refine", config);
    if seeds.is_empty() {
        write_file(&out_dir.join(crate::optimizer::DETECTION_INDEX), "")?;
        write_file(&out_dir.join("refine.log"), empty_result_log(&header))?;
        return Ok(SceneSummary {
            id: id.to_string(),
            seeds: 0,
            kept: Vec::new(),
            pruned: Vec::new(),
            iterations: 0,
            stop: None,
            trace_totals: Vec::new(),
            monotone: true,
            feasible: true,
        });
    }
    let n_seeds = seeds.len();
    let scene = SceneConfig::new(
        ProbabilityMap::from_grid(posterior),
        seeds,
        config.delta,
        config.weights,
        model,
    )?;
    let result: RefinementResult = refine(&scene, &config.optimizer)?;
    write_detections(&result, id, out_dir)?;
    write_file(&out_dir.join("refine.log"), header + &result.log())?;
    Ok(SceneSummary {
        id: id.to_string(),
        seeds: n_seeds,
        kept: result.kept.clone(),
        pruned: result.pruned.clone(),
        iterations: result.iterations,
        stop: Some(result.stop_reason),
        trace_totals: result.energy_trace.iter().map(|t| t.energy.total).collect(),
        monotone: result.is_monotone(),
        feasible: result.is_feasible(),
    })
}

/// Refines one scene directory, or every scene listed in a corpus manifest,
/// returning summaries in scene order.
pub(crate) fn refine_path(
    config: &RunConfig,
    model: &ShapeModel,
    scene: &Path,
    out: &Path,
) -> Result<Vec<SceneSummary>, CliError> {
    let manifest = scene.join(MANIFEST_FILE);
    if manifest.is_file() {
        let entries = read_manifest(&manifest)?;
        create_dir(out)?;
        entries
            .par_iter()
            .map(|e| refine_scene_dir(config, model, &scene.join(&e.scene), &out.join(&e.scene), &e.scene))
            .collect()
    } else {
        let id = flat_image_id();
        Ok(vec![refine_scene_dir(config, model, scene, out, &id)?])
    }
}

/// `refine`: refines the seeds of a scene or corpus with the model in
/// `model_path` and writes detections and logs under `out`.
pub fn cmd_refine(config: &RunConfig, scene: &Path, model_path: &Path, out: &Path) -> Result<i32, CliError> {
    let model = load_model(model_path)?;
    let summaries = refine_path(config, &model, scene, out)?;
    for s in &summaries {
        print!("{}", s.line());
    }
    let single = !scene.join(MANIFEST_FILE).is_file();
    if single && pgm_files(scene, "gt_").map(|f| !f.is_empty()).unwrap_or(false) {
        let refs = collect_masks(scene, "gt_")?;
        let dets = collect_masks(out, "det_")?;
        let report = match_detections(&refs, &dets, config.iou_threshold)?;
        println!(
            "vs ground truth: mean IoU {:.4}  recall {:.4}  precision {:.4}",
            report.mean_iou, report.recall, report.precision
        );
    }
    Ok(EXIT_OK)
}

fn flat_image_id() -> String {
    "scene".to_string()
}

/// Masks named `prefix*.pgm` from `dir`. When `dir` holds `scene_*`
/// subdirectories each becomes one image named after it; otherwise the
/// masks directly in `dir` form a single image.
pub fn collect_masks(dir: &Path, prefix: &str) -> Result<Vec<Detection>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Io(format!("{}: not a directory", dir.display())));
    }
    let mut scenes: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_error(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("scene_"))
        })
        .collect();
    scenes.sort();
    let groups: Vec<(String, PathBuf)> = if scenes.is_empty() {
        vec![(flat_image_id(), dir.to_path_buf())]
    } else {
        scenes
            .into_iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), p))
            .collect()
    };
    let mut out = Vec::new();
    for (id, path) in groups {
        for file in pgm_files(&path, prefix)? {
            let mask = load_mask_pgm(&file).map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
            let det = Detection::new(id.clone(), mask)
                .map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
            out.push(det);
        }
    }
    Ok(out)
}

/// Arguments of `eval`.
#[derive(Clone, Debug)]
pub struct EvalArgs {
    pub gt: PathBuf,
    pub det: PathBuf,
    pub det_prefix: String,
    pub baseline: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn crowding_text(report: &MatchReport) -> String {
    let mut s = String::from("refs     images  recall     precision\n");
    for b in recall_vs_crowding(report).bins {
        s.push_str(&format!("{:<8} {:>6}  {:<9.4}  {:.4}\n", b.label, b.images, b.recall, b.precision));
    }
    s
}

/// `eval`: matches detections against references and prints the table;
/// with `out` also writes the JSON report and per-pair CSV.
pub fn cmd_eval(config: &RunConfig, args: &EvalArgs) -> Result<i32, CliError> {
    let refs = collect_masks(&args.gt, "gt_")?;
    let dets = collect_masks(&args.det, &args.det_prefix)?;
    let report = match_detections(&refs, &dets, config.iou_threshold)?;
    print!("{}", report.to_table());
    let comparison = match &args.baseline {
        Some(dir) => {
            let base = collect_masks(dir, "baseline_")?;
            let base_report = match_detections(&refs, &base, config.iou_threshold)?;
            let table = comparison_table(&[("baseline", &base_report), ("refined", &report)]);
            println!();
            print!("{table}");
            Some((base_report, table))
        }
        None => None,
    };
    match &args.out {
        Some(out) => {
            create_dir(out)?;
            write_file(&out.join("report.json"), report.to_json() + "\n")?;
            write_file(&out.join("report.txt"), log_header("eval", config) + &report.to_table())?;
            write_file(&out.join("pairs.csv"), report.pairs_csv())?;
            if let Some((base_report, table)) = comparison {
                write_file(&out.join("baseline.json"), base_report.to_json() + "\n")?;
                write_file(&out.join("comparison.txt"), table)?;
            }
        }
        None => println!("{}", report.to_json()),
    }
    Ok(EXIT_OK)
}

/// `gradcheck`: exit 0 iff the worst relative error is below tolerance.
/// `mutate` alters each analytic gradient before comparison.
pub fn cmd_gradcheck(
    config: &RunConfig,
    model_path: &Path,
    trials: usize,
    mutate: Option<&(dyn Fn(&mut [f64]) + Sync)>,
) -> Result<i32, CliError> {
    if trials == 0 {
        return Err(CliError::Usage("trials must be positive".into()));
    }
    let model = load_model(model_path)?;
    let report = gradcheck(&config.spec, &model, config.delta, config.fd_step, trials, mutate)?;
    print!("{}", report.summary(model.eigen.k()));
    Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK })
}

/// Where `demo` put its outputs, and what it measured.
#[derive(Clone, Debug)]
pub struct DemoPaths {
    pub corpus: PathBuf,
    pub train: PathBuf,
    pub model: PathBuf,
    pub refined: PathBuf,
    pub report: PathBuf,
    pub baseline_report: MatchReport,
    pub refined_report: MatchReport,
    pub scenes: Vec<SceneSummary>,
}

/// `demo`: synthesizes a corpus and a disjoint training set, learns the
/// model, refines every scene and evaluates baseline and refined masks.
pub fn cmd_demo(config: &RunConfig, n: usize, out: &Path) -> Result<DemoPaths, CliError> {
    let corpus = out.join("corpus");
    let train = out.join("train");
    let model_path = out.join("model.esm");
    let refined = out.join("refined");
    let report_dir = out.join("report");
    create_dir(out)?;
    let header = log_header("demo", config);
    let mut log = header.clone();

    let entries = emit_corpus(&config.spec, n, &corpus)?;
    let crowns: usize = entries.iter().map(|e| e.crowns).sum();
    log.push_str(&format!("corpus: scenes {} crowns {crowns}\n", entries.len()));

    create_dir(&train)?;
    let masks = training_crowns(&config.spec, config.train_crowns)?;
    let mut named = Vec::with_capacity(masks.len());
    for (i, m) in masks.into_iter().enumerate() {
        let path = train.join(format!("crown_{i:03}.pgm"));
        save_mask_pgm(&m, &path)?;
        named.push((path, m));
    }
    let model = learn_model(config, &named)?;
    save_model(&model, &model_path)?;
    log.push_str(&format!("model: {} training crowns, {} modes\n", named.len(), model.eigen.k()));

    let scenes = refine_path(config, &model, &corpus, &refined)?;
    for s in &scenes {
        log.push_str(&s.line());
    }

    let refs = collect_masks(&corpus, "gt_")?;
    let base = collect_masks(&corpus, "baseline_")?;
    let dets = collect_masks(&refined, "det_")?;
    let baseline_report = match_detections(&refs, &base, config.iou_threshold)?;
    let refined_report = match_detections(&refs, &dets, config.iou_threshold)?;
    let table = comparison_table(&[("baseline", &baseline_report), ("refined", &refined_report)]);
    let seeds: usize = scenes.iter().map(|s| s.seeds).sum();
    let kept: usize = scenes.iter().map(|s| s.kept.len()).sum();
    let crowding = format!(
        "baseline recall by crowns per image\n{}\nrefined recall by crowns per image\n{}",
        crowding_text(&baseline_report),
        crowding_text(&refined_report)
    );

    create_dir(&report_dir)?;
    write_file(&report_dir.join("refined.json"), refined_report.to_json() + "\n")?;
    write_file(&report_dir.join("baseline.json"), baseline_report.to_json() + "\n")?;
    write_file(&report_dir.join("pairs.csv"), refined_report.pairs_csv())?;
    write_file(&report_dir.join("comparison.txt"), table.clone())?;
    write_file(&report_dir.join("crowding.txt"), crowding.clone())?;
    log.push_str(&format!("seeds {seeds} detections {kept}\n\n{table}\n{crowding}"));
    write_file(&out.join("demo.log"), &log)?;
    print!("{table}\n{crowding}");

    Ok(DemoPaths {
        corpus,
        train,
        model: model_path,
        refined,
        report: report_dir,
        baseline_report,
        refined_report,
        scenes,
    })
}
