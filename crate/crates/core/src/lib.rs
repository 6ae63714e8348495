//! Binary label aggregation for crowdsourcing with finite-sample error-rate
//! bounds.
//!
//! Aggregation rules live in [`rules`] and [`em`], bound calculators in
//! [`bounds`], and the simulation and exact-enumeration harness in
//! [`montecarlo`].

// range checks are written so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod em;
pub mod error;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod rules;

pub use error::{Error, Result};
pub use model::{DawidSkeneParams, GoldLabels, Label, LabelMatrix, OneCoinParams, Prediction, SamplingDesign};
pub use rules::HyperplaneRule;
