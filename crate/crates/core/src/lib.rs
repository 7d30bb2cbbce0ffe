//! Simulation and reconstruction for a pushframe camera: a line-scan
//! architecture in which a scene translates across a static coded mask while
//! a column-integrating linear detector records one sum per mask column each
//! step. Scene columns are multiplexed by Hadamard codes as they cross the
//! mask; full two-dimensional images are recovered afterwards in software.
//!
//! The crate follows the capture pipeline:
//!
//! - [`pattern`]: Sylvester Hadamard matrices, run-limited column scrambling
//!   and the on-disk pattern format.
//! - [`scene`]: scene images (PGM/PPM), height resampling, column sampling
//!   and synthetic test scenes.
//! - [`forward`]: the optical forward model — supersampled frame rendering,
//!   column integration, keyed noise and white calibration.
//! - [`stream`]: measurement streams and frame stacks with their file
//!   formats.
//! - [`recon`]: per-column synthesis (naive and debiased), the fast
//!   Walsh–Hadamard route, calibration corrections and shear correction.
//! - [`metrics`]: PSNR, SSIM and line-artifact scoring.
//!
//! All randomness is drawn from generators keyed by (seed, step, column,
//! lane), so output is bit-identical for any worker count or schedule. The
//! `parallel` feature (default) runs the per-step and per-column loops on
//! rayon; without it the same loops run sequentially and produce the same
//! bytes.

pub mod digest;
pub mod error;
pub mod forward;
pub mod metrics;
pub mod netpbm;
pub mod pattern;
pub mod recon;
pub mod scene;
pub mod stream;

mod noise;
mod par;

pub use error::{Error, Result};
pub use forward::{IlluminationField, OpticsConfig, Readout};
pub use metrics::QualityReport;
pub use pattern::{HadamardMatrix, PatternSpec};
pub use recon::{CalibrationData, ReconImage, Synthesis};
pub use scene::SceneImage;
pub use stream::MeasurementStream;
