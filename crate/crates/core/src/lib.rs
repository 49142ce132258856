//! Hybrid quantum-classical classifiers in which a variational circuit
//! generates the first-layer weights of a multilayer perceptron.
//!
//! The crate bundles an exact statevector simulator, Kraus noise channels,
//! reverse-mode training, neural-tangent-kernel diagnostics, closed-form error
//! bound evaluators, and synthetic data generators.

#![allow(clippy::needless_range_loop)]

pub mod backend;
pub mod bounds;
pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod noise;
pub mod ntk;
pub mod simulator;
pub mod train;

pub use error::{Error, Result};
