//! Multitemporal SAR change detection, classification and visualization.
//!
//! The crate detects changes in stacks of denoised SAR intensity images with
//! a simplified generalized likelihood-ratio (GLR) test, calibrates detection
//! thresholds through a chi-square mixture, classifies per-pixel temporal
//! change types by spectral clustering of a pairwise change criterion matrix,
//! and renders change times as HSV composites. A gamma speckle simulator and
//! an ROC harness make every statistical claim checkable without satellite
//! data.
//!
//! Modules:
//!
//! - [`speckle`]: gamma speckle simulation, change injection, log-cumulant
//!   ENL estimation, temporal multilook baseline.
//! - [`glr`]: the GLR dissimilarity, chi-square change probability,
//!   thresholding, pair detection, weighted variants, cumulative monitoring.
//! - [`magviz`]: signed [−255, 255] change magnitudes and rainbow rendering.
//! - [`classify`]: change criterion matrix, spectral clustering with eigengap
//!   model selection, Table-style change-type recognition.
//! - [`reactiv`]: change-time detectors, temporal coefficient of variation,
//!   HSV compositing.
//! - [`io`]: raster/manifest formats and PNG export.
//! - [`roc`]: ROC curves and AUC for scored masks.
//! - [`cli`]: the `sarglr` command-line pipelines.

pub mod classify;
pub mod cli;
pub mod color;
pub mod error;
pub mod glr;
pub mod io;
pub mod magviz;
pub mod raster;
pub mod reactiv;
pub mod roc;
pub mod special;
pub mod speckle;

pub use error::{Error, Result};
pub use glr::{Domain, ImageStack};
pub use raster::{Raster, RgbRaster};
