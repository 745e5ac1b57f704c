//! Laser-driven Ba+ ion in front of a distant mirror.
//!
//! The eight Zeeman sublevels of S1/2, P1/2 and D3/2 are driven by a green
//! (493 nm) and a red (650 nm) laser. A mirror retro-reflecting the green
//! fluorescence modifies the green decay constant and shifts the P1/2
//! level as a function of the mirror phase `ψ = 2kl`. The crate computes
//! steady states of the resulting Bloch equations, the fringe observables
//! recorded while `ψ` is scanned, fits of model parameters to data, and
//! synthetic photon-count records.
//!
//! The physics is generic over the scalar type ([`num::Real`]); the
//! aliases below fix it to `f64`, which the estimation and count layers use
//! throughout.

// `!(x >= 0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atomic;
pub mod bloch;

pub mod counts;
pub mod drive;
pub mod error;
pub mod estimation;
pub mod num;
pub mod observables;

pub use error::{Error, Result};
pub use num::{Complex, Real};

pub type LevelSchemeF64 = atomic::LevelScheme<f64>;
pub type LaserDriveF64 = drive::LaserDrive<f64>;
pub type PolarizationF64 = drive::Polarization<f64>;
pub type MirrorParamsF64 = drive::MirrorParams<f64>;
pub type DecayRatesF64 = drive::DecayRates<f64>;
pub type SystemParamsF64 = bloch::SystemParams<f64>;
pub type DensityMatrixF64 = bloch::DensityMatrix<f64>;
pub type LiouvillianF64 = bloch::Liouvillian<f64>;
pub type FringeFitF64 = observables::FringeFit<f64>;
pub type FringeScanF64 = observables::FringeScan<f64>;

pub type SystemParamsF32 = bloch::SystemParams<f32>;
pub type DensityMatrixF32 = bloch::DensityMatrix<f32>;
pub type LiouvillianF32 = bloch::Liouvillian<f32>;
