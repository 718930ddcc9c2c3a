#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod grid;
pub mod ladder;
pub mod morrey;
pub mod orlicz;
pub mod oscillation;
pub mod potentials;
pub mod quadrature;
pub mod report;
pub mod riesz;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
