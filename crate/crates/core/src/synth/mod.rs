//! Synthetic scenes: star-shaped crowns, a blurred and noisy stand-in for a
//! semantic posterior, jittered seed points and perturbed baseline masks.
//!
//! Every scene draws from its own ChaCha stream derived from
//! `(rng_seed, scene index)`, so scenes can be generated in any order or in
//! parallel and still come out bit-identical.

mod corpus;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalkit::Detection;
use crate::raster::{
    centroid, gaussian_blur, morph, squared_distance_to, BinaryMask, Grid, ProbabilityMap,
    RasterError,
};
use crate::shapemodel::DEFAULT_FRAME;

pub use corpus::{
    emit_corpus, load_scene_dir, read_manifest, read_seeds, regenerate_scene, write_scene,
    write_seeds, ManifestEntry, SceneFiles, MANIFEST_FILE,
};

/// Largest admissible crown radius: half the shape-model frame minus a
/// two-pixel margin.
pub const RADIUS_CAP: f64 = (DEFAULT_FRAME / 2 - 2) as f64;

/// Stream reserved for the training-shape corpus, disjoint from every
/// scene stream.
pub const TRAINING_STREAM: u64 = u64::MAX;

/// False-positive seeds keep at least this distance from every crown pixel.
pub const FALSE_POSITIVE_CLEARANCE: f64 = 24.0;

const CROWN_TRIES: usize = 100;
const POSITION_TRIES: usize = 200;
const CROWN_RESAMPLES: usize = 20;
const ANGLE_SAMPLES: usize = 720;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("no crown with positive radius after {0} tries")]
    CrownSampling(usize),
    #[error("could not place crown {crown} of {total} after bounded retries")]
    Placement { crown: usize, total: usize },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed corpus file {path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Parameters of the scene generator. Ranges are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub crowns: (usize, usize),
    pub radius: (f64, f64),
    pub fourier_orders: usize,
    pub fourier_amp: f64,
    /// Extra clearance between crown discs; negative values allow overlap.
    pub min_gap: f64,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    /// Expected distance between a seed and its crown's centroid.
    pub seed_jitter_mean: f64,
    /// Per-object morphological radius for baseline masks, negative erodes.
    pub baseline_erode_dilate: (i64, i64),
    pub baseline_miss_rate: f64,
    /// Expected false-positive seeds per crown, placed on background.
    pub false_positive_rate: f64,
    pub rng_seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            crowns: (5, 15),
            radius: (8.0, 40.0),
            fourier_orders: 5,
            fourier_amp: 0.15,
            min_gap: -4.0,
            blur_sigma: 2.0,
            noise_sigma: 0.1,
            seed_jitter_mean: 3.4,
            baseline_erode_dilate: (3, 6),
            baseline_miss_rate: 0.05,
            false_positive_rate: 0.0,
            rng_seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.width < 8 || self.height < 8 {
            return bad(format!("scene must be at least 8x8, got {}x{}", self.width, self.height));
        }
        if self.crowns.0 == 0 || self.crowns.0 > self.crowns.1 {
            return bad(format!("crown count range {:?} is empty or starts at 0", self.crowns));
        }
        let (rlo, rhi) = self.radius;
        if !(rlo > 0.0) || !(rlo <= rhi) || !rhi.is_finite() {
            return bad(format!("radius range {:?} is empty or non-positive", self.radius));
        }
        if rhi > RADIUS_CAP {
            return bad(format!("radius max {rhi} exceeds the cap {RADIUS_CAP}"));
        }
        let nonneg = [
            ("fourier_amp", self.fourier_amp),
            ("blur_sigma", self.blur_sigma),
            ("noise_sigma", self.noise_sigma),
            ("seed_jitter_mean", self.seed_jitter_mean),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if !self.min_gap.is_finite() {
            return bad("min_gap must be finite".into());
        }
        for (name, p) in [
            ("baseline_miss_rate", self.baseline_miss_rate),
            ("false_positive_rate", self.false_positive_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.baseline_erode_dilate.0 > self.baseline_erode_dilate.1 {
            return bad(format!("baseline_erode_dilate range {:?} is empty", self.baseline_erode_dilate));
        }
        Ok(())
    }
}

/// RNG for scene `index` of a corpus seeded with `rng_seed`.
pub fn scene_rng(rng_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(index);
    rng
}

/// A rasterized star-shaped crown centered in an odd-sized local raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Crown {
    pub mask: BinaryMask,
    /// Base radius `r0` after any rescaling.
    pub radius: f64,
    /// Largest radius over all angles.
    pub max_radius: f64,
}

impl Crown {
    /// Pixel index of the star center in the local raster.
    pub fn center(&self) -> usize {
        (self.mask.width() - 1) / 2
    }
}

/// Samples `r(t) = r0 (1 + sum_k a_k cos(k t + phi_k))` with `r0` uniform in
/// the radius range, `a_k` uniform in `[0, amp]` and uniform phases, and
/// rasterizes pixel centers with `|p - c| <= r(angle)`. Shapes whose
/// largest radius exceeds [`RADIUS_CAP`] are scaled down to it.
pub fn sample_crown<R: Rng + ?Sized>(rng: &mut R, spec: &SceneSpec) -> Result<Crown, SynthError> {
    sample_crown_in(rng, spec, spec.radius.1)
}

fn sample_crown_in<R: Rng + ?Sized>(rng: &mut R, spec: &SceneSpec, r_hi: f64) -> Result<Crown, SynthError> {
    let k = spec.fourier_orders;
    for _ in 0..CROWN_TRIES {
        let r0: f64 = spec.radius.0 + (r_hi - spec.radius.0) * rng.random::<f64>();
        let amps: Vec<f64> = (0..k).map(|_| spec.fourier_amp * rng.random::<f64>()).collect();
        let phases: Vec<f64> = (0..k).map(|_| 2.0 * PI * rng.random::<f64>()).collect();
        let profile = |t: f64| {
            1.0 + amps
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(i, (a, p))| a * ((i + 1) as f64 * t + p).cos())
                .sum::<f64>()
        };
        let (lo, hi) = (0..ANGLE_SAMPLES)
            .map(|i| profile(2.0 * PI * i as f64 / ANGLE_SAMPLES as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !(lo > 0.0) {
            continue;
        }
        let r0 = if r0 * hi > RADIUS_CAP { RADIUS_CAP / hi } else { r0 };
        let max_radius = r0 * hi;
        let half = max_radius.ceil() as usize + 1;
        let size = 2 * half + 1;
        let c = half as f64;
        let mask = BinaryMask::from_fn(size, size, |x, y| {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            let d = dx.hypot(dy);
            d == 0.0 || d <= r0 * profile(dy.atan2(dx))
        });
        return Ok(Crown {
            mask,
            radius: r0,
            max_radius,
        });
    }
    Err(SynthError::CrownSampling(CROWN_TRIES))
}

/// `n` crowns for learning a shape model, drawn from [`TRAINING_STREAM`] so
/// they never coincide with scene crowns.
pub fn training_crowns(spec: &SceneSpec, n: usize) -> Result<Vec<BinaryMask>, SynthError> {
    spec.validate()?;
    let mut rng = scene_rng(spec.rng_seed, TRAINING_STREAM);
    (0..n).map(|_| sample_crown(&mut rng, spec).map(|c| c.mask)).collect()
}

/// One generated scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub id: String,
    pub gt_masks: Vec<BinaryMask>,
    pub gt_centroids: Vec<(f64, f64)>,
    pub posterior: ProbabilityMap,
    pub seeds: Vec<(f64, f64)>,
    /// Ground-truth index behind each seed; `None` for false positives.
    pub seed_sources: Vec<Option<usize>>,
    pub baseline_detections: Vec<Detection>,
    pub spec_echo: SceneSpec,
}

impl SyntheticScene {
    pub fn false_positive_seeds(&self) -> Vec<usize> {
        (0..self.seeds.len()).filter(|&i| self.seed_sources[i].is_none()).collect()
    }

    pub fn gt_detections(&self) -> Vec<Detection> {
        self.gt_masks
            .iter()
            .map(|m| Detection::new(self.id.clone(), m.clone()).expect("ground-truth masks are nonempty"))
            .collect()
    }
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:05}")
}

/// Scene `index` of the corpus described by `spec`.
pub fn generate_scene(spec: &SceneSpec, index: usize) -> Result<SyntheticScene, SynthError> {
    let mut rng = scene_rng(spec.rng_seed, index as u64);
    let mut scene = render_scene(spec, &mut rng)?;
    scene.id = scene_id(index);
    for d in &mut scene.baseline_detections {
        d.image_id = scene.id.clone();
    }
    Ok(scene)
}

struct Placement {
    mask: BinaryMask,
    center: (f64, f64),
    max_radius: f64,
}

fn place_crowns<R: Rng + ?Sized>(rng: &mut R, spec: &SceneSpec, n: usize) -> Result<Vec<Placement>, SynthError> {
    let (w, h) = (spec.width, spec.height);
    let mut placed: Vec<Placement> = Vec::with_capacity(n);
    for i in 0..n {
        let mut done = false;
        // Each failed crown is replaced by one drawn from a narrower radius
        // range so crowded scenes can always fall back to small crowns.
        for attempt in 0..CROWN_RESAMPLES {
            let t = attempt as f64 / (CROWN_RESAMPLES - 1) as f64;
            let r_hi = spec.radius.1 + (spec.radius.0 - spec.radius.1) * t;
            let crown = sample_crown_in(rng, spec, r_hi)?;
            let half = crown.center();
            let size = crown.mask.width();
            if size > w || size > h {
                continue;
            }
            for _ in 0..POSITION_TRIES {
                let x0 = rng.random_range(0..=w - size);
                let y0 = rng.random_range(0..=h - size);
                let center = ((x0 + half) as f64, (y0 + half) as f64);
                let clear = placed.iter().all(|p| {
                    let d = (p.center.0 - center.0).hypot(p.center.1 - center.1);
                    d >= p.max_radius + crown.max_radius + 1.0 + spec.min_gap
                });
                if clear {
                    placed.push(Placement {
                        mask: crown.mask.translated(x0 as i64, y0 as i64, w, h),
                        center,
                        max_radius: crown.max_radius,
                    });
                    done = true;
                    break;
                }
            }
            if done {
                break;
            }
        }
        if !done {
            return Err(SynthError::Placement { crown: i, total: n });
        }
    }
    Ok(placed)
}

/// Renders one scene from `rng`. The returned scene id is empty; see
/// [`generate_scene`] for corpus-indexed scenes.
pub fn render_scene<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let n = rng.random_range(spec.crowns.0..=spec.crowns.1);
    let placed = place_crowns(rng, spec, n)?;
    let gt_masks: Vec<BinaryMask> = placed.into_iter().map(|p| p.mask).collect();
    let gt_centroids = gt_masks
        .iter()
        .map(centroid)
        .collect::<Result<Vec<_>, _>>()?;

    let mut union = BinaryMask::new(w, h);
    for m in &gt_masks {
        union.union_with(m);
    }
    let mut field = gaussian_blur(&union.to_grid(), spec.blur_sigma)?;
    if spec.noise_sigma > 0.0 {
        for v in field.values_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += spec.noise_sigma * z;
        }
    }
    let posterior = ProbabilityMap::from_grid(field);

    // A 2-D isotropic normal with per-axis scale s has mean norm s sqrt(pi/2).
    let s = spec.seed_jitter_mean / (PI / 2.0).sqrt();
    let clamp = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64);
    let mut seeds = Vec::new();
    let mut seed_sources = Vec::new();
    let mut baseline = Vec::new();
    for (i, (gt, &(cx, cy))) in gt_masks.iter().zip(&gt_centroids).enumerate() {
        let missed = rng.random_bool(spec.baseline_miss_rate);
        let jx: f64 = s * rng.sample::<f64, _>(StandardNormal);
        let jy: f64 = s * rng.sample::<f64, _>(StandardNormal);
        let amount = rng.random_range(spec.baseline_erode_dilate.0..=spec.baseline_erode_dilate.1);
        if missed {
            continue;
        }
        seeds.push((clamp(cx + jx, w), clamp(cy + jy, h)));
        seed_sources.push(Some(i));
        let mut mask = morph(gt, amount as f64).translated(jx.round() as i64, jy.round() as i64, w, h);
        if mask.is_empty() {
            mask = gt.clone();
        }
        baseline.push(Detection::new(String::new(), mask).expect("nonempty baseline mask"));
    }

    if spec.false_positive_rate > 0.0 {
        let count = Binomial::new(n as u64, spec.false_positive_rate)
            .expect("validated rate")
            .sample(rng);
        let d2 = squared_distance_to(&union, true);
        let min_d2 = FALSE_POSITIVE_CLEARANCE * FALSE_POSITIVE_CLEARANCE;
        for _ in 0..count {
            let spot = (0..POSITION_TRIES)
                .map(|_| (rng.random_range(0..w), rng.random_range(0..h)))
                .find(|&(x, y)| d2[y * w + x] >= min_d2);
            let Some((x, y)) = spot else { continue };
            let crown = sample_crown(rng, spec)?;
            let c = crown.center() as i64;
            let mut mask = crown.mask.translated(x as i64 - c, y as i64 - c, w, h);
            if mask.is_empty() {
                mask.set(x, y, true);
            }
            seeds.push((x as f64, y as f64));
            seed_sources.push(None);
            baseline.push(Detection::new(String::new(), mask).expect("nonempty baseline mask"));
        }
    }

    Ok(SyntheticScene {
        id: String::new(),
        gt_masks,
        gt_centroids,
        posterior,
        seeds,
        seed_sources,
        baseline_detections: baseline,
        spec_echo: spec.clone(),
    })
}

/// Rasterized union of the scene's ground truth as a 0/1 grid.
pub fn gt_union(scene: &SyntheticScene) -> Grid {
    let (w, h) = scene.posterior.dims();
    let mut union = BinaryMask::new(w, h);
    for m in &scene.gt_masks {
        union.union_with(m);
    }
    union.to_grid()
}
