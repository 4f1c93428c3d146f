//! Self-supervised, physics-informed reconstruction of sagittal-plane human
//! movement dynamics from inertial sensor data.
//!
//! The crate trains a recurrent estimator to map raw planar IMU sequences to
//! joint angles, joint torques, ground reaction forces, and speed without any
//! labeled data, by jointly minimizing a multibody dynamics residual, a
//! temporal-consistency error, and a virtual-IMU reconstruction error over a
//! 7-segment, 9-DOF planar body.
//!
//! Module map:
//! - [`tensor`], [`optim`]: reverse-mode autodiff tape and Adam.
//! - [`body`], [`kinematics`]: anthropometrics, chain kinematics, virtual IMUs.
//! - [`dynamics`]: the per-DOF dynamics residual and a numeric forward-dynamics
//!   oracle used by tests and the synthetic generator.
//! - [`contact`]: sliding-point spring-damper ground contact.
//! - [`losses`]: the eight training loss terms and their weighted total.
//! - [`network`]: the LSTM estimator, checkpoints, streaming inference.
//! - [`zupt`]: foot-sensor speed reconstruction with zero-velocity updates.
//! - [`data`]: dataset schema, ingestion, resampling, windows, the synthetic
//!   trial generator.
//! - [`train`]: self-supervised training, physics finetuning, sensor placement
//!   optimization.
//! - [`eval`]: metrics, gait-cycle segmentation, report and figure emission.
//! - [`config`], [`runs`]: run configuration files, manifests, run directories.

pub mod body;
pub mod config;
pub mod contact;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod kinematics;
pub mod losses;
pub mod network;
pub mod optim;
pub mod parallel;
pub mod runs;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod zupt;

pub use error::{Error, Result};
