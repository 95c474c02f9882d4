pub mod effective;
pub mod eigenmodes;
pub mod ensemble;
pub mod error;
pub mod lattice;
pub mod observables;
pub mod commands;
pub mod config;
pub mod dynamics;
pub mod spectral;
pub mod stiff;
pub mod tridiag;

pub use error::{Error, Result};
