//! Fixed-point arithmetic and the dense solvers used by training.

mod fixed;
mod lasso;
mod linalg;
mod matrix;

pub use fixed::{FixedQ7_25, WideAcc, FRAC_BITS};
pub use lasso::{lasso_fit, lasso_objective, LassoFit, DEFAULT_ALPHA};
pub use linalg::least_squares;
pub use matrix::Matrix;
