//! Scenario loading, output writers, and the invariant suite behind the
//! `dpnp` binary.

pub mod config;
pub mod csv_out;
pub mod verify;
pub mod vtk;
