//! Change-point detection and regime estimation for balanced panels.
//!
//! The pipeline: store a balanced panel ([`panel`]), reduce it to per-period
//! Gram sums ([`gram`]), search break placements by least squares
//! ([`detect`]), pick the number of breaks with an information criterion
//! ([`select`]), estimate per-regime slopes with fixed-effect transforms and
//! sandwich or structured covariances ([`estimate`]), and test whether
//! adjacent regimes really differ ([`infer`]). The [`simlab`] module houses
//! the simulation experiments used to calibrate all of the above.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

pub mod detect;
pub mod error;
pub mod estimate;
pub mod gram;
pub mod infer;
pub mod panel;
pub mod select;
pub mod simlab;

mod linalg;
mod scalar;

pub use error::{Error, Result};
pub use estimate::VcovKind;
pub use panel::{Partition, RegimeIndex};
pub use scalar::{conv, Scalar};
pub use select::{IcConfig, PenaltyKind};

/// Balanced panel over `f64`.
pub type Panel = panel::PanelData<f64>;
/// Gram prefix table over `f64`.
pub type Gram = gram::GramTable<f64>;
/// Segment score table over `f64`.
pub type SegmentTable = detect::SegmentSseTable<f64>;
/// Detection output over `f64`.
pub type Detection = detect::DetectionResult<f64>;
/// Information-criterion curve over `f64`.
pub type IcCurve = select::IcCurve<f64>;
/// Within-estimator output over `f64`.
pub type FeEstimate = estimate::FeEstimate<f64>;
/// Full-sample-estimator output over `f64`.
pub type FfeEstimate = estimate::FfeEstimate<f64>;
/// Wald test output over `f64`.
pub type WaldResult = infer::WaldResult<f64>;
