//! Risk-seeking policy-gradient search over hybrid discrete-continuous
//! sequences.
//!
//! A recurrent policy emits designs as `(token, parameter)` pairs. Tokens
//! are drawn from a masked categorical and each parameterized token gets a
//! value from a truncated normal whose window the task supplies. Tasks
//! ([`task::Task`]) define the token library, the prefix constraints and
//! the reward. Training keeps only the top quantile of each batch and
//! ascends the log-probability of those samples.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

pub mod baselines;
pub mod design_io;
pub mod envs;
pub mod error;
pub mod harness;
pub mod library;
pub mod policy;
pub mod sampler;
pub mod scalar;
pub mod sequence;
pub mod task;
pub mod tasks;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Policy = policy::PolicyParams<f64>;
pub type Gradient = policy::GradientVector<f64>;
pub type Sequence = sequence::HybridSequence<f64>;
pub type Design = sequence::Design<f64>;
pub type Bounds = sampler::TruncBounds<f64>;
pub type Prior = sequence::PriorVector<f64>;
pub type TokenLibrary = library::Library<f64>;
