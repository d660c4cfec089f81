//! Plain-text `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; unknown or repeated keys are errors. [`RunConfig::echo`] writes
//! every key in a fixed order with round-trip float formatting, so parsing an
//! echo reproduces the configuration exactly.

use std::fmt::Write;
use std::str::FromStr;

use crate::energy::{EnergyWeights, DEFAULT_DELTA};
use crate::evalkit::DEFAULT_IOU_THRESHOLD;
use crate::optimizer::OptimizerSettings;
use crate::shapemodel::{DEFAULT_EPSILON, DEFAULT_FRAME, DEFAULT_MODES};
use crate::synth::SceneSpec;

/// Default number of training crowns for `demo`.
pub const DEFAULT_TRAIN_CROWNS: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub spec: SceneSpec,
    pub weights: EnergyWeights,
    pub delta: f64,
    pub optimizer: OptimizerSettings,
    pub modes: usize,
    pub epsilon: f64,
    pub frame: usize,
    pub train_crowns: usize,
    pub iou_threshold: f64,
    pub fd_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            spec: SceneSpec::default(),
            weights: EnergyWeights::default(),
            delta: DEFAULT_DELTA,
            optimizer: OptimizerSettings::default(),
            modes: DEFAULT_MODES,
            epsilon: DEFAULT_EPSILON,
            frame: DEFAULT_FRAME,
            train_crowns: DEFAULT_TRAIN_CROWNS,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            fd_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    UnknownKey { line: usize, key: String },
    DuplicateKey { line: usize, key: String },
    Syntax { line: usize, text: String },
    BadValue { key: String, value: String },
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::UnknownKey { line: 0, key } => write!(f, "unknown key `{key}`"),
            Self::UnknownKey { line, key } => write!(f, "line {line}: unknown key `{key}`"),
            Self::DuplicateKey { line, key } => write!(f, "line {line}: key `{key}` given twice"),
            Self::Syntax { line: 0, text } => write!(f, "expected `key=value`, got `{text}`"),
            Self::Syntax { line, text } => write!(f, "line {line}: expected `key = value`, got `{text}`"),
            Self::BadValue { key, value } => write!(f, "bad value `{value}` for key `{key}`"),
            Self::Invalid(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

macro_rules! keys {
    ($( $name:literal => ($($field:tt)+) ),* $(,)?) => {
        /// Every accepted key, in echo order.
        pub const KEYS: &[&str] = &[$($name),*];

        impl RunConfig {
            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $($name => self.$($field)+ = parse(key, value)?,)*
                    _ => return Err(ConfigError::UnknownKey { line: 0, key: key.to_string() }),
                }
                Ok(())
            }

            /// All keys with their values, one `key = value` per line.
            pub fn echo(&self) -> String {
                let mut s = String::new();
                $(writeln!(s, "{} = {}", $name, Echo(&self.$($field)+)).unwrap();)*
                s
            }
        }
    };
}

/// Display with `{:?}` for floats so values round-trip exactly.
struct Echo<'a, T>(&'a T);

macro_rules! echo_display {
    ($($t:ty),*) => {$(
        impl std::fmt::Display for Echo<'_, $t> {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    )*};
}
echo_display!(usize, u64, i64);

impl std::fmt::Display for Echo<'_, f64> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

keys! {
    "width" => (spec.width),
    "height" => (spec.height),
    "crowns_min" => (spec.crowns.0),
    "crowns_max" => (spec.crowns.1),
    "radius_min" => (spec.radius.0),
    "radius_max" => (spec.radius.1),
    "fourier_orders" => (spec.fourier_orders),
    "fourier_amp" => (spec.fourier_amp),
    "min_gap" => (spec.min_gap),
    "blur_sigma" => (spec.blur_sigma),
    "noise_sigma" => (spec.noise_sigma),
    "seed_jitter_mean" => (spec.seed_jitter_mean),
    "baseline_erode_dilate_min" => (spec.baseline_erode_dilate.0),
    "baseline_erode_dilate_max" => (spec.baseline_erode_dilate.1),
    "baseline_miss_rate" => (spec.baseline_miss_rate),
    "false_positive_rate" => (spec.false_positive_rate),
    "rng_seed" => (spec.rng_seed),
    "gamma_shp" => (weights.gamma_shp),
    "gamma_img" => (weights.gamma_img),
    "gamma_ovp" => (weights.gamma_ovp),
    "tau" => (weights.tau),
    "delta" => (delta),
    "memory" => (optimizer.memory),
    "max_iters" => (optimizer.max_iters),
    "rel_tol" => (optimizer.rel_tol),
    "grad_tol" => (optimizer.grad_tol),
    "ls_c" => (optimizer.line_search.c),
    "ls_shrink" => (optimizer.line_search.shrink),
    "ls_max_trials" => (optimizer.line_search.max_trials),
    "area_min" => (optimizer.area_min),
    "modes" => (modes),
    "epsilon" => (epsilon),
    "frame" => (frame),
    "train_crowns" => (train_crowns),
    "iou_threshold" => (iou_threshold),
    "fd_step" => (fd_step),
}

impl RunConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        config.apply_text(text)?;
        Ok(config)
    }

    /// Applies configuration text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: line.to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, item: &str) -> Result<(), ConfigError> {
        let (key, value) = item.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: item.to_string(),
        })?;
        self.set(key.trim(), value.trim())
    }

    /// Checks every section's own invariants.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.spec.validate().map_err(|e| invalid(&e))?;
        self.optimizer.validate().map_err(|e| invalid(&e))?;
        let w = self.weights;
        let gammas = [w.gamma_shp, w.gamma_img, w.gamma_ovp];
        if gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) || gammas.iter().all(|&g| g == 0.0) {
            return Err(ConfigError::Invalid(format!("energy weights must be non-negative and not all zero, got {gammas:?}")));
        }
        let positive = [
            ("tau", w.tau),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
            ("fd_step", self.fd_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.modes == 0 || self.frame < 4 {
            return Err(ConfigError::Invalid("modes must be positive and frame at least 4".into()));
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(ConfigError::Invalid(format!("iou_threshold must lie in [0, 1], got {}", self.iou_threshold)));
        }
        Ok(())
    }
}
