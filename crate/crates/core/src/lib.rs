//! Discrete feature-learning simulator and neural warm-start toolkit.
//!
//! The crate is `no_std` and only needs `alloc`. It has two halves:
//!
//! * a discrete model of training in which a learner picks up class features
//!   by frequency and memorizes the point-specific noise of whatever it cannot
//!   explain ([`framework`], [`strategies`], [`instance`], [`theorems`]);
//! * a small dense network with manual backpropagation ([`nn`]), the
//!   reinitialization methods applied between experiments ([`reinit`]) and the
//!   expanding-dataset protocol that ties them together ([`expanding`]).
//!
//! IO, configuration files and the command line live in the `plasticity-lab`
//! crate.
#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod error;
pub mod expanding;
pub mod framework;
pub mod instance;
pub mod nn;
pub mod reinit;
pub mod rng;
pub mod strategies;
pub mod theorems;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
