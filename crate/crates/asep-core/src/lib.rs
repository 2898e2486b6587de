//! Open-boundary asymmetric simple exclusion process with accelerated,
//! time-dependent reservoirs, an entropy-solution reference solver for the
//! limiting Burgers equation with Otto/BLN boundary data, and the
//! diagnostics connecting the two at finite lattice size.

pub mod entropy;
pub mod error;
pub mod harness;
pub mod kmc;
pub mod model;
pub mod observables;
pub mod solver;

pub use error::{Error, Result};
