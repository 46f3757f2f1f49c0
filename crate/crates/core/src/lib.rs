#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amplitude;
pub mod config;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod phase;
pub mod projector;
pub mod quadrature;
pub mod report;
pub mod sampling;
pub mod tseries;
pub mod weight;

pub use error::{Error, Result};
pub use tseries::{HGradedSeries, MultiIndex, TruncatedSeries, C64};
