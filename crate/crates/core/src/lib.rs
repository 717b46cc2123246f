//! Stochastic configuration machines (SCM) with binary hidden weights, a
//! linear mechanism model, and a bit-exact emulation of a multiplier-free
//! fixed-point inference datapath.
//!
//! The crate is split along the training/inference boundary:
//!
//! - [`numerics`]: Q7.25 fixed point, dense least squares, LASSO.
//! - [`encoding`]: real inputs in `[0, 1]` to packed bit vectors.
//! - [`mechanism`]: the linear mechanism model fit on encoded inputs.
//! - [`scm`]: constructive training and the full-precision reference path.
//! - [`fpga`]: XNOR-count / conditional-count kernels, the fixed-point
//!   datapath, and cycle/memory cost models.
//! - [`data`]: benchmark generators, CSV ingestion, normalization.
//! - [`model_file`]: the little-endian binary model format.

pub mod data;
pub mod encoding;
pub mod error;
pub mod fpga;
pub mod mechanism;
pub mod model_file;
pub mod numerics;
pub mod scm;

pub use encoding::{BitVec, EncodingSpec};
pub use error::{Result, ScmError};
pub use mechanism::MechanismModel;
pub use numerics::{FixedQ7_25, Matrix, WideAcc};
pub use scm::{ActivationKind, ScmModel, ScmNode, TrainConfig};
