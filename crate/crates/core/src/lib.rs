pub mod environment;
pub mod error;
pub mod experiments;
pub mod fastmath;
pub mod kernels;
pub mod polymer;
pub mod quadrature;
pub mod seed;
pub mod special;
pub mod stats;
pub mod theory;

pub use environment::{EnvMode, EnvironmentRealization};
pub use error::{Error, Result};
pub use kernels::CovarianceKernel;
pub use polymer::{PathEnsemble, PolymerRun};
