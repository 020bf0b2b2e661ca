pub mod analysis;
pub mod cli;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod policies;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod sweep;
pub mod workload;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations used by the sweep driver and the CLI.
pub type Workload64 = workload::Workload<f64>;
pub type ClusterConfig64 = workload::ClusterConfig<f64>;
pub type WeibullParams64 = workload::WeibullParams<f64>;
pub type Distribution64 = analysis::Distribution<f64>;
pub type CardThresholds64 = analysis::CardThresholds<f64>;
pub type PolicySpec64 = policies::PolicySpec<f64>;
pub type RunResult64 = metrics::RunResult<f64>;
