//! Post-quantum security analysis toolkit for the Bitcoin backbone.
//!
//! - [`bounds`]: closed-form query-complexity bounds and the honest-majority
//!   and settlement formulas.
//! - [`backbone`]: blocks, chains, the PoW predicate and honest mining.
//! - [`recording_sim`]: exact state-vector simulation of the Bernoulli
//!   recording oracle.
//! - [`execution`]: round-based protocol executions with rate-calibrated
//!   adversaries, plus the typical-execution, common-prefix and
//!   chain-quality checks.

// `!(a < b)` is used on purpose so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backbone;
pub mod bounds;
pub mod execution;
pub mod recording_sim;
pub mod scalar;

pub use scalar::Real;

pub type BoundParams64 = bounds::BoundParams<f64>;
pub type BoundValue64 = bounds::BoundValue<f64>;
pub type SystemConfig64 = recording_sim::SystemConfig<f64>;
pub type QuantumSystem64 = recording_sim::QuantumSystem<f64>;
pub type QuantumSystem32 = recording_sim::QuantumSystem<f32>;
