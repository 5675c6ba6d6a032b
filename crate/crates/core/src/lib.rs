//! Profit-oriented loan scoring: derive annualized returns from loan
//! outcomes, fit a default-probability model, feed its estimate into a
//! return regressor, and compare top-k selections.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod gbdt;
pub mod loan_model;
pub mod pipeline;
pub mod preprocess;
pub(crate) mod textfmt;

pub use error::{Error, ErrorClass, Result};
