//! Matrix-free recovery of a high-resolution image sequence, together
//! with the inter-frame motion fields, from low-resolution observations.
//!
//! The sequence is modeled backward in time: each frame is a spline
//! warp of its successor plus a residual, the final frame is sparse in
//! an orthogonal wavelet dictionary, and the motion fields carry a
//! (weighted) total-variation penalty. Estimation alternates a convex
//! splitting solve over the residuals and coefficients with a quadratic
//! surrogate step over the motion, with all gradients evaluated by an
//! adjoint recursion in time that keeps the per-iteration cost linear
//! in pixels times frames.

pub mod adjoint;
pub mod admm;
pub mod bspline;
pub mod checks;
pub mod config;
pub mod error;
pub mod grid;
pub mod lanczos;
pub mod kalman;
pub mod metrics;
pub mod operators;
pub mod outer;
pub mod pipeline;
pub mod problem;
pub mod prox;
pub mod seq;
pub mod vec_ops;

pub use config::SolverConfig;
pub use error::{Error, Result};
pub use grid::Grid;
pub use problem::SrProblem;
pub use seq::{CoefVec, ImageSeq, MotionSeq, NoiseSeq};
