//! Certified reduced-basis toolkit for parameterized PDEs whose offline
//! snapshots are computed by an adaptive wavelet Galerkin method, with a
//! wavelet-expansion surrogate for the dual norm of the infinite-dimensional
//! residual.

pub mod error;
pub mod estimator;
pub mod index;
pub mod awgm;
pub mod operator;
pub mod wavelet;

pub use error::{Error, Result};
