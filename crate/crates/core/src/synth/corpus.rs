//! On-disk corpus layout:
//!
//! ```text
//! manifest.jsonl              one JSON object per scene
//! scene_00000/posterior.fras
//! scene_00000/gt_000.pgm ...
//! scene_00000/baseline_000.pgm ...
//! scene_00000/seeds.txt       one "x y" pair per line
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::raster::{load_float_raster, load_mask_pgm, save_float_raster, save_mask_pgm, BinaryMask, Grid};

use super::{generate_scene, scene_id, SceneSpec, SynthError, SyntheticScene};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One manifest line. `spec` and `index` regenerate the scene exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene: String,
    pub index: usize,
    pub rng_seed: u64,
    pub stream: u64,
    pub crowns: usize,
    pub seeds: usize,
    pub false_positive_seeds: Vec<usize>,
    pub seed_sources: Vec<Option<usize>>,
    pub spec: SceneSpec,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_seeds(seeds: &[(f64, f64)], path: impl AsRef<Path>) -> Result<(), SynthError> {
    let path = path.as_ref();
    let text: String = seeds.iter().map(|(x, y)| format!("{x} {y}\n")).collect();
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_seeds(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>, SynthError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let format = |line: usize, message: &str| SynthError::Format {
        path: path.display().to_string(),
        message: format!("line {line}: {message}"),
    };
    let mut seeds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(format(i + 1, "expected two numbers"));
        }
        let parse = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
        match (parse(fields[0]), parse(fields[1])) {
            (Some(x), Some(y)) => seeds.push((x, y)),
            _ => return Err(format(i + 1, "not a finite number")),
        }
    }
    Ok(seeds)
}

/// Writes one scene's files into `dir`, creating it if needed.
pub fn write_scene(scene: &SyntheticScene, dir: impl AsRef<Path>) -> Result<(), SynthError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_float_raster(scene.posterior.grid(), dir.join("posterior.fras"))?;
    for (i, m) in scene.gt_masks.iter().enumerate() {
        save_mask_pgm(m, dir.join(format!("gt_{i:03}.pgm")))?;
    }
    for (i, d) in scene.baseline_detections.iter().enumerate() {
        save_mask_pgm(&d.mask, dir.join(format!("baseline_{i:03}.pgm")))?;
    }
    write_seeds(&scene.seeds, dir.join("seeds.txt"))
}

fn manifest_entry(spec: &SceneSpec, index: usize, scene: &SyntheticScene) -> ManifestEntry {
    ManifestEntry {
        scene: scene.id.clone(),
        index,
        rng_seed: spec.rng_seed,
        stream: index as u64,
        crowns: scene.gt_masks.len(),
        seeds: scene.seeds.len(),
        false_positive_seeds: scene.false_positive_seeds(),
        seed_sources: scene.seed_sources.clone(),
        spec: spec.clone(),
    }
}

/// Generates and writes `n_scenes` scenes in parallel, then the manifest in
/// scene order.
pub fn emit_corpus(
    spec: &SceneSpec,
    n_scenes: usize,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestEntry>, SynthError> {
    spec.validate()?;
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(io_err(out))?;
    let entries = (0..n_scenes)
        .into_par_iter()
        .map(|i| {
            let scene = generate_scene(spec, i)?;
            write_scene(&scene, out.join(&scene.id))?;
            Ok(manifest_entry(spec, i, &scene))
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let mut text = String::new();
    for e in &entries {
        text.push_str(&serde_json::to_string(e).expect("manifest entry serializes"));
        text.push('\n');
    }
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(entries)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, SynthError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SynthError::Format {
                path: path.display().to_string(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// The scene a manifest line describes, rebuilt from its spec and index.
pub fn regenerate_scene(entry: &ManifestEntry) -> Result<SyntheticScene, SynthError> {
    debug_assert_eq!(entry.scene, scene_id(entry.index));
    generate_scene(&entry.spec, entry.index)
}

/// Files of one scene directory as loaded from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFiles {
    pub id: String,
    pub posterior: Grid,
    pub seeds: Vec<(f64, f64)>,
    pub gt_masks: Vec<BinaryMask>,
    pub baseline_masks: Vec<BinaryMask>,
}

fn numbered(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, SynthError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(prefix) && n.ends_with(".pgm"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads a scene directory. Ground-truth and baseline masks are optional;
/// the posterior and seeds file are required.
pub fn load_scene_dir(dir: impl AsRef<Path>) -> Result<SceneFiles, SynthError> {
    let dir = dir.as_ref();
    let id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_string();
    let posterior = load_float_raster(dir.join("posterior.fras"))?;
    let seeds = read_seeds(dir.join("seeds.txt"))?;
    let load = |prefix| {
        numbered(dir, prefix)?
            .iter()
            .map(|p| load_mask_pgm(p).map_err(SynthError::from))
            .collect::<Result<Vec<_>, _>>()
    };
    Ok(SceneFiles {
        id,
        posterior,
        seeds,
        gt_masks: load("gt_")?,
        baseline_masks: load("baseline_")?,
    })
}
