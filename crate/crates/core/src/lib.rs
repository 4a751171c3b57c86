//! Dense two-frame optical flow with a horizontal-vertical-diagonal (HVD)
//! sparse regularizer.
//!
//! The flow `v = (vx, vy)` minimizes a Huber-smoothed data term (brightness
//! constancy, gradient constancy, or a contrast/offset model) plus `λ` times
//! the Huber norm of four finite-difference operators applied to the flow:
//! horizontal, vertical, and the two diagonal continuity differences. The
//! objective is solved with an accelerated first-order scheme on an image
//! pyramid, optionally from a subset of pixels chosen by a measurement
//! selection scheme.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, with `*32` variants for single precision.
//!
//! ```
//! use hvdflow::{synthetic, solve_coarse_to_fine, mepe, SolverConfig};
//!
//! let spec = synthetic::TextureSpec { width: 24, height: 24, ..Default::default() };
//! let case = synthetic::translation::<f64>(&spec, 0.5, 0.0).unwrap();
//! let config = SolverConfig { max_iter: 50, min_side: 12, ..Default::default() };
//! let est = solve_coarse_to_fine(&case.pair, &config).unwrap();
//! assert!(mepe(&est.flow, &case.ground_truth).unwrap() < 0.5);
//! ```

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data_terms;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod io;
pub mod regularizer;
pub mod scalar;
pub mod selection;
pub mod solver;
pub mod sweep;
pub mod synthetic;

pub use config::RunConfig;
pub use data_terms::{build_system, compute_derivatives, DataKind, DataTermSystem, DerivativeStack, Unknowns};
pub use error::{FlowError, Result};
pub use evaluation::{colorize_flow, mepe, sparsity_report, MaxMagnitude, SparsityReport};
pub use grid::{FlowField, ImagePair, ScalarGrid};
pub use io::{read_flo, read_image, write_flo};
pub use regularizer::{DiagonalConvention, HuberParams, Hvd, RegularizerWeights, TvVariant};
pub use scalar::Scalar;
pub use selection::{select, MeasurementMask, SchemeKind, SelectionScheme};
pub use solver::{solve_coarse_to_fine, solve_level, Blend, FlowEstimate, Objective, SolverConfig};
pub use sweep::{sweep_ratios, SweepTable};

pub type Grid = ScalarGrid<f64>;
pub type Grid32 = ScalarGrid<f32>;
pub type Flow = FlowField<f64>;
pub type Flow32 = FlowField<f32>;
pub type Pair = ImagePair<f64>;
pub type Pair32 = ImagePair<f32>;
pub type System = DataTermSystem<f64>;
pub type Estimate = FlowEstimate<f64>;
