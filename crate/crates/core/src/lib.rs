//! Decompositional rule extraction from binary-activation convolutional
//! networks.
//!
//! A small CNN with sign activations is trained on dithered images; each
//! convolutional filter, pooling layer and the dense output are then
//! approximated by k-term DNF formulas learned with stochastic local search.
//! Convolutional rules slide over bit planes exactly like the filters they
//! replace, and can be rendered as images.

pub mod binarize;
pub mod bnn;
pub mod boolcore;
pub mod convrules;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod extraction;
pub mod metrics;
pub mod rng;
pub mod sls;

pub use error::{Error, Result};
