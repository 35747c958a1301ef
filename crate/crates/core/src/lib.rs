#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod config;
pub mod controller;
pub mod error;
pub mod kernels;
pub mod krr;
pub mod linalg;
pub mod pipeline;
pub mod plant;
pub mod synthesis;
