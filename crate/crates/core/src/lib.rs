//! Reduced-order Kalman filtering for discretized linear-Gaussian systems.
//!
//! The crate provides the full-state Kalman filter, the one-step optimal
//! reduced-order filter on a fixed subspace, a naive coarse-model filter and
//! an approximate stationary reduced filter, together with Riccati/Lyapunov
//! solvers, discretization-error bounds and a damped 1D wave benchmark.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix `f64`.

pub mod bounds;
pub mod error;
pub mod filters;
pub mod lgss;
pub mod linalg;
pub mod oracle;
pub mod random;
pub mod riccati;
pub mod scalar;
pub mod wave;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub type SymmetricMatrixF64 = linalg::SymmetricMatrix<f64>;
pub type PsdMatrixF64 = linalg::PsdMatrix<f64>;
pub type CoordinateMapF64 = linalg::CoordinateMap<f64>;
pub type ProjectionPairF64 = linalg::ProjectionPair<f64>;
pub type LgssModelF64 = lgss::LgssModel<f64>;
pub type TrajectoryF64 = lgss::Trajectory<f64>;
pub type JointGaussianF64 = lgss::JointGaussian<f64>;
pub type FullKfScheduleF64 = filters::FullKfSchedule<f64>;
pub type ReducedGainScheduleF64 = filters::ReducedGainSchedule<f64>;
pub type StationaryFilterF64 = filters::StationaryFilter<f64>;
pub type DareSolutionF64 = riccati::DareSolution<f64>;
pub type StabilityReportF64 = bounds::StabilityReport<f64>;
pub type BoundSetupF64 = bounds::BoundSetup<f64>;
pub type DeltaPDecompositionF64 = bounds::DeltaPDecomposition<f64>;
pub type StationaryDiscrepancyF64 = riccati::StationaryDiscrepancy<f64>;
