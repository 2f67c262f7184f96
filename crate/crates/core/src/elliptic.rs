//! Shared machinery for the two zero-flux elliptic subproblems (potential
//! and pressure): the TPFA cell operator, the compatibility policy for
//! pure-Neumann data, and the projected-CG solve with a zero-mean gauge.

use crate::grid::{CellField, DiagTensorField, FaceNeighbors, FieldRole, Grid2D};
use crate::linalg::{conjugate_gradient, LinalgError};
use crate::model::ModelError;
use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldSolveError {
    #[error("{what}: source/boundary imbalance {imbalance:e} exceeds repair limit {limit:e}")]
    CompatibilityViolation { what: &'static str, imbalance: f64, limit: f64 },
    #[error(transparent)]
    Linear(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Settings for the elliptic sub-solves.
#[derive(Debug, Clone, Copy)]
pub struct EllipticConfig<S = f64> {
    /// CG relative residual tolerance.
    pub rel_tol: S,
    pub max_iters: usize,
    /// Switch on diagonal (Jacobi) preconditioning.
    pub jacobi: bool,
    /// Compatibility tolerance per unit domain area.
    pub compat_tol_factor: S,
    /// Extra headroom added to the 10x repair limit. Zero keeps the limit
    /// strict; the time stepper widens it for in-step electrostatics when
    /// reaction splitting moves charge transiently within one step.
    pub drift_allowance: S,
}

impl<S: Scalar> Default for EllipticConfig<S> {
    fn default() -> Self {
        Self {
            rel_tol: S::cast(1e-10),
            max_iters: 20_000,
            jacobi: false,
            compat_tol_factor: S::cast(1e-10),
            drift_allowance: S::zero(),
        }
    }
}

/// Matrix-free cell operator `u -> integrated divergence of (-coeff grad u)`
/// with zero flux through the boundary. Symmetric positive semidefinite;
/// kernel spanned by the constants. Built from the same harmonic-mean
/// transmissibilities as `Grid2D::tpfa_gradient_flux`.
#[derive(Debug, Clone)]
pub struct NeumannOperator<S = f64> {
    n_cells: usize,
    /// (lo cell, hi cell, transmissibility * face length / spacing) per interior face.
    links: Vec<(usize, usize, S)>,
}

impl<S: Scalar> NeumannOperator<S> {
    pub fn new(grid: &Grid2D<S>, coeff: &DiagTensorField<S>) -> Self {
        let mut links = Vec::with_capacity(grid.n_interior_faces());
        for face in grid.interior_faces() {
            if let FaceNeighbors::Interior { lo, hi } = grid.face_neighbors(face) {
                let axis = grid.face_axis(face);
                let k = crate::grid::harmonic_mean(coeff.along(axis, lo), coeff.along(axis, hi));
                let t = k * grid.face_length(face) / grid.face_spacing(face);
                links.push((lo, hi, t));
            }
        }
        Self { n_cells: grid.n_cells(), links }
    }

    pub fn n(&self) -> usize {
        self.n_cells
    }

    pub fn apply(&self, u: &[S], out: &mut [S]) {
        debug_assert_eq!(u.len(), self.n_cells);
        out.iter_mut().for_each(|o| *o = S::zero());
        for &(lo, hi, t) in &self.links {
            let d = t * (u[lo] - u[hi]);
            out[lo] += d;
            out[hi] -= d;
        }
    }

    pub fn diagonal(&self) -> Vec<S> {
        let mut d = vec![S::zero(); self.n_cells];
        for &(lo, hi, t) in &self.links {
            d[lo] += t;
            d[hi] += t;
        }
        d
    }
}

/// Result of one zero-flux elliptic solve.
#[derive(Debug, Clone)]
pub struct NeumannSolution<S = f64> {
    pub u: CellField<S>,
    /// Final CG residual relative to the right-hand side.
    pub residual_norm: S,
    pub cg_iterations: usize,
    /// Set when the imbalance exceeded compat_tol but stayed within the
    /// 10x repair window and was spread uniformly over the cells.
    pub compat_repaired: bool,
}

/// Solve `op u = integrated_rhs` in the zero-mean gauge.
///
/// The rhs must integrate to zero for the problem to be solvable. Within
/// `compat_tol = compat_tol_factor * domain_area` the defect is accepted as
/// rounding; within ten times that it is subtracted uniformly from the
/// cells and flagged; beyond, the data is rejected.
pub fn solve_neumann<S: Scalar>(
    grid: &Grid2D<S>,
    op: &NeumannOperator<S>,
    mut integrated_rhs: Vec<S>,
    role: FieldRole,
    cfg: &EllipticConfig<S>,
    what: &'static str,
) -> Result<NeumannSolution<S>, FieldSolveError> {
    let imbalance: S = integrated_rhs.iter().copied().sum();
    let compat_tol = cfg.compat_tol_factor * grid.domain_area();
    let mut compat_repaired = false;
    if imbalance.abs() > compat_tol {
        let limit = S::cast(10.0) * compat_tol + cfg.drift_allowance;
        if imbalance.abs() > limit {
            return Err(FieldSolveError::CompatibilityViolation {
                what,
                imbalance: imbalance.to_f64_lossy(),
                limit: limit.to_f64_lossy(),
            });
        }
        let shift = imbalance / S::cast(integrated_rhs.len() as f64);
        for r in &mut integrated_rhs {
            *r -= shift;
        }
        compat_repaired = true;
    }

    let diag;
    let jacobi = if cfg.jacobi {
        diag = op.diagonal();
        Some(diag.as_slice())
    } else {
        None
    };
    let mut x = vec![S::zero(); op.n()];
    let stats = conjugate_gradient(
        |u, out| op.apply(u, out),
        &integrated_rhs,
        &mut x,
        jacobi,
        cfg.rel_tol,
        cfg.max_iters,
        true,
        what,
    )?;

    Ok(NeumannSolution {
        u: CellField::new(role, x),
        residual_norm: stats.relative_residual,
        cg_iterations: stats.iterations,
        compat_repaired,
    })
}
