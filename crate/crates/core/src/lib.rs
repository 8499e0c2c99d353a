//! Detecting coordinated capacity reductions from public earnings-call
//! communication.
//!
//! The pipeline runs from transcript coding ([`text`]) through panel
//! construction ([`panel`]) to fixed-effects, Poisson and control-function
//! estimation ([`econ`]), with auxiliary metrics ([`metrics`]), hub detection
//! ([`network`]), word embeddings ([`embed`]) and synthetic ground-truth data
//! ([`synth`]). File schemas live in [`io`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod domain;
pub mod econ;
pub mod embed;
pub mod error;
pub mod io;
pub mod metrics;
pub mod network;
pub mod panel;
pub mod pipeline;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
