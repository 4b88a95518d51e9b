//! Measurement-only control of a qubit by Zeno dragging.
//!
//! A qubit is continuously and weakly measured along an axis that rotates in
//! the XY plane of the Bloch sphere. When the rotation is slow compared to the
//! measurement-induced dephasing, the state follows the axis. This crate
//! provides the state algebra, a positivity-preserving trajectory propagator,
//! the closed-form ensemble dynamics, jump statistics, calibration estimators,
//! tomography emulation and integrated-voltage post-selection.

pub mod analytics;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod format;
pub mod record;
pub mod sme;
pub mod state;
pub mod tomography;

pub use error::{Error, Result};
pub use record::{DetectorModel, MeasurementRecord};
pub use sme::Trajectory;
pub use state::{AxisSchedule, ExperimentConfig, MeasurementAxis, QubitState};
