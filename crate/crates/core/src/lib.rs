//! Reconstruction of dynamical systems from measured time series.
//!
//! The crate covers the reference systems and their measurements, delay and
//! reservoir embeddings, least-squares feedback models, direct and iterative
//! forecasts with their error laws, matrix cocycles and Lyapunov spectra,
//! and Ulam-style Markov/Koopman matrices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cocycle;
pub mod config;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod forecast;
pub mod learning;
pub mod markov;
pub mod numerics;
pub mod output;
pub mod systems;

pub use error::{Error, Result};
