//! Alignment of comprehensive two-dimensional gas chromatograms.
//!
//! The pipeline extracts one centroid per significant peak with morphological
//! h-maxima, registers the reference peak cloud onto the target cloud with an
//! EM-fitted Gaussian mixture (similarity on one axis, kernel displacement
//! field on the other), and pushes the fitted transform through template masks
//! and chromatogram images.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`, which is what the file formats, the CLI
//! and the service use.

pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod morphology;
pub mod peaks;
pub mod pipeline;
pub mod quantify;
pub mod registration;
pub mod scalar;
pub mod synthetic;
pub mod warp;

pub use error::{Error, Result};
pub use geometry::{point_in_polygon, Point, Polygon};
pub use grid::{AxisCalibration, Grid};
pub use morphology::{h_maxima_regions, reconstruct_by_dilation, BinaryGrid, Connectivity};
pub use peaks::{extract_peaks, extract_peaks_with, HParameter, Peaks};
pub use registration::{
    register, KernelForm, Mode, RegistrationConfig, RegistrationReport, RegistrationResult,
    Transform,
};
pub use scalar::Scalar;

/// Chromatogram image in `f64`.
pub type IntensityGrid = Grid<f64>;
/// Peak centroid cloud in `f64`.
pub type PeakSet = Peaks<f64>;
pub type AreaOfInterest = io::AreaOfInterest<f64>;
pub type TemplateMask = io::TemplateMask<f64>;
pub type Blob = io::Blob<f64>;
/// Fitted transform in `f64`.
pub type HybridTransform = Transform<f64>;
