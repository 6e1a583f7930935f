// `!(a < b)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod disorder;
pub mod error;
pub mod fss;
pub mod geometry;
pub mod mc;
pub mod scalar;
pub mod observables;
pub mod oracle;
pub mod smallworld;
pub mod stats;
pub mod topology;

pub use error::{Error, Result};
