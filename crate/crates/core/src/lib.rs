//! H-type deviation of step-two Carnot groups and sub-Riemannian operators on
//! Kaplan-type quasinorms.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod anisotropic;
pub mod calculus;
pub mod cli;
pub mod error;
pub mod deviation;
pub mod metric;
pub mod optim;
mod ser;

pub use error::{Error, Result};
