//! Synthesis and certification of suboptimal distributed H2 protocols for
//! homogeneous linear multi-agent networks with dynamic output feedback.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod graphs;
pub mod h2cert;
pub mod matkit;
pub mod netsim;
pub mod riccati;
pub mod settings;
pub mod synthesis;
#[cfg(feature = "testkit")]
pub mod testkit;

pub use settings::NumericSettings;
