//! Stability selection with observation and covariate subsampling over an
//! elastic-net base learner, together with comparator methods, a synthetic
//! benchmark generator and evaluation protocols.

pub mod baselines;
pub mod data;
pub mod elastic_net;
pub mod error;
pub mod evaluation;
pub mod seed;
pub mod stability;
pub mod svm;
pub mod synthetic;
pub mod tuning;

pub use data::{Dataset, IndexSet};
pub use elastic_net::{FitResult, Loss, PenaltyConfig};
pub use error::{Error, Result};
