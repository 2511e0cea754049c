//! Semiclassical mean-field dynamics: Hartree and Vlasov solvers on periodic grids,
//! velocity-moment observables, propagation certificates and phase-space semimetrics.

pub mod certificates;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod grid;
pub mod hartree;
pub mod kernels;
pub mod output;
pub mod runner;
pub mod observables;
pub mod semimetrics;
pub mod state;
pub mod transport;
pub mod vlasov;

pub use error::{Error, Result};
