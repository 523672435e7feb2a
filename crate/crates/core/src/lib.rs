//! Robust subspace recovery from incomplete, outlier-corrupted data by
//! stochastic gradient descent on the Grassmannian with an adaptive
//! multi-level step size, plus a K-subspaces extension for clustering.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod gasg21;
pub mod grassmann;
pub mod io;
pub mod ksubspaces;
pub mod metrics;
pub mod rng;
pub mod stepsize;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use gasg21::{run, RecoveryConfig, StepConfig, StepRule, StreamingRecovery};
pub use grassmann::{principal_angle, ObservedVector, Subspace};
pub use ksubspaces::{cluster, ClusterConfig, ClusterModel};
pub use stepsize::{AdaptiveStepState, StepParams};
