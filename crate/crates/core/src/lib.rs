//! Finite-volume core for coupled Darcy flow, electrostatics (Gauss's law),
//! and multicomponent Nernst-Planck ion transport on 2D rectangular grids.
//!
//! The time step is a fixed-point splitting: solve Gauss's law for the
//! electric field from the current charge density, Darcy flow driven by the
//! Coulomb body force, then an implicit upwind transport step per species,
//! iterating until the species fields stop moving. Each analytic a-priori
//! estimate of the continuous system (non-negativity, entropy bound, energy
//! bound, mass balance, uniqueness of the step) has a runtime-checkable
//! discrete counterpart in [`diagnostics`] and the solvers' post-conditions.
//!
//! All numerics are generic over the [`Scalar`] precision; concrete `f64`
//! aliases for the main entry points are exported at the crate root.

pub mod coupling;
pub mod darcy;
pub mod diagnostics;
pub mod elliptic;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod poisson;
pub mod transport;
pub mod scalar;

pub use scalar::Scalar;

/// f64 aliases for the common entry points.
pub type Grid2D64 = grid::Grid2D<f64>;
pub type CellField64 = grid::CellField<f64>;
pub type FaceField64 = grid::FaceField<f64>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type SystemState64 = coupling::SystemState<f64>;
pub type FixedPointConfig64 = coupling::FixedPointConfig<f64>;
pub type Trajectory64 = coupling::Trajectory<f64>;
pub type DiagnosticsRecord64 = diagnostics::DiagnosticsRecord<f64>;
