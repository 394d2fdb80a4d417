//! Core library for a synthetic riverbed-litter imaging study.
//!
//! The pipeline, in dependency order:
//!
//! 1. [`raster`]: planar float images, motion-blur PSFs, bicubic resampling,
//!    seeded Gaussian noise, and the full degradation chain that turns a clean
//!    capture into a low-resolution observation.
//! 2. [`tilemap`]: sliding-window tiling of large canvases, mosaic
//!    reassembly, and promotion of tile-local boxes to canvas coordinates.
//! 3. [`quality`]: MSE / PSNR / SSIM between a reference and a
//!    reconstruction.
//! 4. [`boxeval`]: IoU, greedy detection matching, precision/recall/F1,
//!    average precision and mAP.
//! 5. [`losses`]: BCE and extended-IoU training losses with analytic
//!    gradients, plus a finite-difference gradient checker.
//! 6. [`srnet`]: a small three-layer convolutional super-resolution network
//!    with Adam training and a binary checkpoint format.
//! 7. [`scenegen`]: procedural riverbed scenes with litter objects and tight
//!    ground-truth boxes.
//! 8. [`refdetect`]: a deliberately simple color-prototype detector used as
//!    the fixed reference detector in sweeps.
//!
//! [`schema`] holds the on-disk JSON formats shared by the stages, and
//! [`rng`] the reproducible random generator they all draw from.

pub mod boxeval;
pub mod classes;
pub mod losses;
pub mod quality;
pub mod raster;
pub mod refdetect;
pub mod rng;
pub mod scenegen;
pub mod schema;
pub mod srnet;
pub mod tilemap;

pub use classes::LitterClass;
pub use raster::ImageBuffer;
