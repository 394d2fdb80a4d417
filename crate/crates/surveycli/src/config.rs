//! Run configuration for every subcommand.
//!
//! Each command owns one config struct.  All of them deserialize from the
//! JSON file given with `--config`, with every field optional; command-line
//! flags override whatever the file supplied.  The fully resolved config is
//! echoed to the log before the command runs.

use std::fs;
use std::path::{Path, PathBuf};

use riverlitter::refdetect::DetectorParams;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required setting: {0}")]
    Missing(&'static str),
    #[error("factors must be non-empty, all >= 1, strictly ascending")]
    BadFactors,
    #[error("{name} out of range: {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("config file {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("config file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Load a command config from an optional JSON file; absent file means all
/// defaults.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, ConfigError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = fs::read(p).map_err(|source| ConfigError::Io { path: p.into(), source })?;
            serde_json::from_slice(&bytes)
                .map_err(|source| ConfigError::Parse { path: p.into(), source })
        }
    }
}

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), ConfigError> {
    if !value.is_finite() || value < lo || value > hi {
        return Err(ConfigError::OutOfRange { name, value });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// shared pieces
// ---------------------------------------------------------------------------

/// Detector knobs in config form; mirrors [`DetectorParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorCfg {
    pub color_tol: f64,
    pub merge_radius: usize,
    pub min_area: usize,
}

impl Default for DetectorCfg {
    fn default() -> Self {
        let p = DetectorParams::default();
        DetectorCfg { color_tol: p.color_tol, merge_radius: p.merge_radius, min_area: p.min_area }
    }
}

impl DetectorCfg {
    pub fn to_params(&self) -> DetectorParams {
        DetectorParams {
            color_tol: self.color_tol,
            merge_radius: self.merge_radius,
            min_area: self.min_area,
        }
    }
}

/// How degraded tiles are brought back to tile size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SrMethod {
    Bicubic,
    Network { checkpoint: PathBuf },
}

impl Default for SrMethod {
    fn default() -> Self {
        SrMethod::Bicubic
    }
}

// ---------------------------------------------------------------------------
// per-command configs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub scenes: usize,
    pub height: usize,
    pub width: usize,
    pub objects: usize,
    pub size_min: f64,
    pub size_max: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            scenes: 8,
            height: 512,
            width: 512,
            objects: 5,
            size_min: 32.0,
            size_max: 96.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainCliConfig {
    pub corpus: PathBuf,
    /// Training patch edge in pixels; scenes are cut into these.
    pub tile: usize,
    /// Degradation factor the network learns to undo.
    pub scale: u32,
    pub blur_length: u32,
    pub blur_angle: f64,
    pub noise_sigma: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub halving_interval: usize,
    /// Cap on training pairs; 0 keeps every tile.
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        TrainCliConfig {
            corpus: PathBuf::new(),
            tile: 32,
            scale: 2,
            blur_length: 3,
            blur_angle: 0.0,
            noise_sigma: 0.01,
            epochs: 30,
            learning_rate: 1e-3,
            halving_interval: 200,
            max_pairs: 0,
            seed: 0,
        }
    }
}

impl TrainCliConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.corpus.as_os_str().is_empty() {
            return Err(ConfigError::Missing("corpus"));
        }
        if self.tile == 0 {
            return Err(ConfigError::OutOfRange { name: "tile", value: 0.0 });
        }
        if self.scale == 0 {
            return Err(ConfigError::OutOfRange { name: "scale", value: 0.0 });
        }
        check_range("noise_sigma", self.noise_sigma, 0.0, 1.0)?;
        check_range("learning_rate", self.learning_rate, 1e-12, 1.0)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrCliConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub scale: u32,
    pub sr_method: SrMethod,
}

impl Default for SrCliConfig {
    fn default() -> Self {
        SrCliConfig {
            input: PathBuf::new(),
            output: PathBuf::new(),
            scale: 2,
            sr_method: SrMethod::Bicubic,
        }
    }
}

impl SrCliConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.input.as_os_str().is_empty() {
            return Err(ConfigError::Missing("input"));
        }
        if self.scale == 0 {
            return Err(ConfigError::OutOfRange { name: "scale", value: 0.0 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectCliConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub detector: DetectorCfg,
}

impl Default for DetectCliConfig {
    fn default() -> Self {
        DetectCliConfig {
            input: PathBuf::new(),
            output: PathBuf::new(),
            detector: DetectorCfg::default(),
        }
    }
}

impl DetectCliConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.input.as_os_str().is_empty() {
            return Err(ConfigError::Missing("input"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalCliConfig {
    pub detections: PathBuf,
    pub annotations: PathBuf,
    pub iou_thresh: f64,
}

impl Default for EvalCliConfig {
    fn default() -> Self {
        EvalCliConfig {
            detections: PathBuf::new(),
            annotations: PathBuf::new(),
            iou_thresh: 0.5,
        }
    }
}

impl EvalCliConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.detections.as_os_str().is_empty() {
            return Err(ConfigError::Missing("detections"));
        }
        if self.annotations.as_os_str().is_empty() {
            return Err(ConfigError::Missing("annotations"));
        }
        check_range("iou_thresh", self.iou_thresh, f64::MIN_POSITIVE, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapCliConfig {
    pub panorama: PathBuf,
    pub detections: PathBuf,
    pub tile_size: usize,
    pub merge_seams: bool,
    pub gap_tol: f64,
    pub span_overlap: f64,
}

impl Default for MapCliConfig {
    fn default() -> Self {
        MapCliConfig {
            panorama: PathBuf::new(),
            detections: PathBuf::new(),
            tile_size: 512,
            merge_seams: false,
            gap_tol: 4.0,
            span_overlap: 0.5,
        }
    }
}

impl MapCliConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.panorama.as_os_str().is_empty() {
            return Err(ConfigError::Missing("panorama"));
        }
        if self.detections.as_os_str().is_empty() {
            return Err(ConfigError::Missing("detections"));
        }
        if self.tile_size == 0 {
            return Err(ConfigError::OutOfRange { name: "tile_size", value: 0.0 });
        }
        check_range("gap_tol", self.gap_tol, 0.0, 1e6)?;
        check_range("span_overlap", self.span_overlap, 0.0, 1.0)
    }
}

/// The magnification sweep: which corpus, which factors, how tiles are
/// degraded and brought back, and how detections are scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub corpus: PathBuf,
    pub tile_size: usize,
    /// Magnification factors, each >= 1, strictly ascending.
    pub factors: Vec<u32>,
    pub sr_method: SrMethod,
    pub detector: DetectorCfg,
    pub iou_thresh: f64,
    pub blur_length: u32,
    pub blur_angle: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Collapse detections split by tile seams before scoring.
    pub merge_seams: bool,
    pub gap_tol: f64,
    pub span_overlap: f64,
    /// Worker threads for per-scene processing.
    pub threads: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            corpus: PathBuf::new(),
            tile_size: 512,
            factors: vec![1, 2, 3, 4, 5],
            sr_method: SrMethod::Bicubic,
            detector: DetectorCfg::default(),
            iou_thresh: 0.5,
            blur_length: 3,
            blur_angle: 0.0,
            noise_sigma: 0.01,
            seed: 0,
            merge_seams: false,
            gap_tol: 4.0,
            span_overlap: 0.5,
            threads: 1,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.corpus.as_os_str().is_empty() {
            return Err(ConfigError::Missing("corpus"));
        }
        if self.tile_size == 0 {
            return Err(ConfigError::OutOfRange { name: "tile_size", value: 0.0 });
        }
        let f = &self.factors;
        if f.is_empty() || f[0] == 0 || f.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::BadFactors);
        }
        check_range("iou_thresh", self.iou_thresh, f64::MIN_POSITIVE, 1.0)?;
        if self.blur_length == 0 {
            return Err(ConfigError::OutOfRange { name: "blur_length", value: 0.0 });
        }
        check_range("blur_angle", self.blur_angle, -1e6, 1e6)?;
        check_range("noise_sigma", self.noise_sigma, 0.0, 1.0)?;
        check_range("gap_tol", self.gap_tol, 0.0, 1e6)?;
        check_range("span_overlap", self.span_overlap, 0.0, 1.0)?;
        if self.threads == 0 {
            return Err(ConfigError::OutOfRange { name: "threads", value: 0.0 });
        }
        Ok(())
    }
}
