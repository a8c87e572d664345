//! Mean curvature flow of n-dimensional submanifolds in ℝⁿ⁺ᵐ on periodic
//! grids, with geometric quantities, averaged n-forms and estimate monitors.

// Index loops mirror the tensor notation; `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimates;
pub mod flow;
pub mod forms;
pub mod geometry;
pub mod initdata;

pub use error::{Error, Result};
pub use estimates::{EstimateReport, Status};
pub use flow::{run, FlowConfig, RunResult, Scheme, State, Trajectory};
pub use forms::{AveragedForm, ConstantNForm, ConstantPipeline};
pub use geometry::{GeometrySample, GraphGrid, ImmersionGrid, Lattice, Surface};

/// Crate version, recorded in run artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
