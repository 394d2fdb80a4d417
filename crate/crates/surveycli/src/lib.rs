//! Command-line survey pipeline over the core library: corpus generation,
//! network training, super-resolution, detection, evaluation, the
//! magnification-factor sweep, and distribution-map rendering.
//!
//! The on-disk JSON schemas (annotations, detections, manifests, reports)
//! live in [`riverlitter::schema`] and are re-exported here as the CLI's
//! public file contract.

pub mod commands;
pub mod config;
pub mod mapview;
pub mod sweep;

pub use riverlitter::schema::{
    CorpusManifest, DetectionRecord, DetectionSet, ManifestEntry, ObjectAnnotation,
    SceneAnnotations,
};
