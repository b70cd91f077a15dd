//! Structured unitary simulation of measurement chains: composite
//! system–apparatus–environment registers, random coupling ensembles, exact
//! staged propagation, reduced-state diagnostics, and the standard /
//! two-laboratory interference protocols built on them.

pub mod cli;
pub mod error;
mod gemm;
pub mod hambuilder;
pub mod observe;
pub mod protocols;
pub mod propagate;
pub mod randmat;
pub mod tensorspace;
#[cfg(test)]
pub(crate) mod testkit;
pub mod tol;

pub use error::{Result, WfError};
