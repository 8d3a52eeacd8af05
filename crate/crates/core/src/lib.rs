//! Forward-backward splitting with geometric convergence certificates.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`, which is what the experiment
//! runner uses.

pub mod error;
pub mod funcs;
pub mod geometry;
pub mod invprob;
pub mod linops;
pub mod rates;
pub mod sampling;
pub mod scalar;
pub mod solver;
pub mod vecops;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Operator = linops::Operator<f64>;
pub type DenseOperator = linops::DenseOperator<f64>;
pub type DiagonalOperator = linops::DiagonalOperator<f64>;
pub type SymMatrix = linops::SymMatrix<f64>;
pub type SmoothFn = funcs::SmoothFn<f64>;
pub type ProxFn = funcs::ProxFn<f64>;
pub type CompositeProblem = funcs::CompositeProblem<f64>;
pub type ProblemSpec = funcs::ProblemSpec<f64>;
pub type Trace = solver::Trace<f64>;
pub type SolveConfig = solver::SolveConfig<f64>;
pub type DomainDesc = geometry::DomainDesc<f64>;
pub type GeometryCertificate = geometry::GeometryCertificate<f64>;
pub type RatePrediction = rates::RatePrediction<f64>;
pub type CertReport = rates::CertReport<f64>;
pub type DiagonalInverseProblem = invprob::DiagonalInverseProblem<f64>;
pub type SourceSpec = invprob::SourceSpec<f64>;
pub type LandweberSpec = invprob::LandweberSpec<f64>;
pub type SparseSpec = invprob::SparseSpec<f64>;
