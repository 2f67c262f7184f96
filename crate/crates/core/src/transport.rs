//! One backward-Euler step of the ion transport equations: implicit TPFA
//! diffusion, implicit first-order upwind drift by `q + alpha_l E`, and
//! reactions linearized at the outer iterate with gains kept explicit and
//! losses moved to the diagonal.
//!
//! Structure the step relies on. Every off-diagonal entry is nonpositive
//! and every column of the advection and diffusion parts sums to zero, so
//! adding `theta area / dt` to the diagonal makes the transpose strictly
//! diagonally dominant: the matrix is an M-matrix (inverse is entrywise
//! nonnegative, hence the step preserves non-negativity unconditionally)
//! and LU elimination without pivoting is stable. Summing all equations
//! telescopes the interior fluxes away, so total mass changes only through
//! reactions, to solver rounding: that is why the systems are solved
//! directly instead of iteratively.
//!
//! No boundary flux is ever assembled: the model prescribes zero total
//! (advective plus diffusive) normal flux per species, so the boundary
//! terms cancel identically and the scheme conserves mass exactly. The
//! same cancellation is what the equivalent homogeneous Robin condition
//! `D grad(c).nu = -c (f + alpha sigma)` expresses pointwise.

use crate::grid::{CellField, FaceField, FaceNeighbors, FieldRole, Grid2D};
use crate::linalg::{BandedMatrix, LinalgError, MatrixSink};
use crate::model::{BoundaryData, ModelParams, ReactionSpec};
use crate::scalar::Scalar;
use rayon::prelude::*;
use thiserror::Error;

/// Concentrations may round slightly below zero in a correct step; anything
/// below this is a scheme bug and is reported as an error rather than
/// clamped.
pub const NEGATIVE_TOLERANCE: f64 = -1e-14;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Linear(#[from] LinalgError),
    #[error("species {species} fell to {value:e} at cell {cell}, below the rounding tolerance")]
    NegativeConcentration { species: usize, cell: usize, value: f64 },
}

/// Inputs of one transport step at fixed fields.
#[derive(Debug, Clone, Copy)]
pub struct TransportStepInput<'a, S = f64> {
    /// Start-of-step concentrations (the backward-Euler anchor), >= 0.
    pub c_old: &'a [CellField<S>],
    /// Outer-iterate concentrations at which reactions are linearized.
    pub c_frozen: &'a [CellField<S>],
    pub e: &'a FaceField<S>,
    pub q: &'a FaceField<S>,
    pub dt: S,
    pub t: S,
}

/// Post-step bookkeeping for the invariant monitors.
#[derive(Debug, Clone, Copy)]
pub struct TransportStats<S = f64> {
    /// Smallest concentration over all species and cells before clamping.
    pub min_before_clamp: S,
    /// Number of cells whose rounding-level negatives were clamped to zero.
    pub clamp_events: usize,
}

/// Drift-plus-advection velocity of species `l`: `v = q + alpha_l E`.
pub fn species_velocity<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    e: &FaceField<S>,
    q: &FaceField<S>,
    l: usize,
) -> FaceField<S> {
    let alpha = params.drift_coefficient(l);
    let mut v = FaceField::zeros(grid);
    for f in grid.faces() {
        v[f] = q[f] + alpha * e[f];
    }
    v
}

/// Assemble the linear system of one species into any matrix backend:
/// `theta area / dt + theta area loss_coeff` on the diagonal, implicit TPFA
/// diffusion, implicit upwind advection on interior faces, nothing on
/// boundary faces.
pub fn assemble_species_system<S: Scalar, M: MatrixSink<S>>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    l: usize,
    velocity: &FaceField<S>,
    loss_coeff: &[S],
    dt: S,
    matrix: &mut M,
) {
    let area = grid.cell_area();
    let theta = params.porosity;
    for cell in 0..grid.n_cells() {
        matrix.add(cell, cell, theta * area * (dt.recip() + loss_coeff[cell]));
    }
    let d = params.species[l].diffusivity;
    for face in grid.interior_faces() {
        if let FaceNeighbors::Interior { lo, hi } = grid.face_neighbors(face) {
            let len = grid.face_length(face);
            let d_axis = match grid.face_axis(face) {
                crate::grid::Axis::X => d.0,
                crate::grid::Axis::Y => d.1,
            };
            let t_d = d_axis * len / grid.face_spacing(face);
            matrix.add(lo, lo, t_d);
            matrix.add(lo, hi, -t_d);
            matrix.add(hi, hi, t_d);
            matrix.add(hi, lo, -t_d);

            let v = velocity[face] * len;
            if v > S::zero() {
                // donor cell lo exports mass to hi
                matrix.add(lo, lo, v);
                matrix.add(hi, lo, -v);
            } else if v < S::zero() {
                // donor cell hi exports mass to lo
                matrix.add(lo, hi, v);
                matrix.add(hi, hi, -v);
            }
        }
    }
}

/// Right-hand side of one species system: backward-Euler anchor plus the
/// explicit reaction gains.
pub fn species_rhs<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    c_old: &CellField<S>,
    gains: &[S],
    dt: S,
) -> Vec<S> {
    let w = params.porosity * grid.cell_area();
    (0..grid.n_cells())
        .map(|i| w * (c_old[i] / dt + gains[i]))
        .collect()
}

/// Pointwise Patankar split of the reactions at the frozen iterate:
/// returns (gains, loss_coeffs), each per species per cell.
pub fn split_reactions_at<S: Scalar>(
    reactions: &ReactionSpec<S>,
    c_frozen: &[CellField<S>],
) -> (Vec<Vec<S>>, Vec<Vec<S>>) {
    let l_count = c_frozen.len();
    let n = c_frozen[0].len();
    let mut gains = vec![vec![S::zero(); n]; l_count];
    let mut loss = vec![vec![S::zero(); n]; l_count];
    if reactions.is_none() {
        return (gains, loss);
    }
    let mut point = vec![S::zero(); l_count];
    let mut g = vec![S::zero(); l_count];
    let mut lo = vec![S::zero(); l_count];
    for cell in 0..n {
        for (l, c) in c_frozen.iter().enumerate() {
            point[l] = c[cell];
        }
        reactions.split_rates(&point, &mut g, &mut lo);
        for l in 0..l_count {
            gains[l][cell] = g[l];
            loss[l][cell] = lo[l];
        }
    }
    (gains, loss)
}

/// Advance all species by one implicit step. `tol` bounds the accepted
/// relative residual of each direct solve (a safety net, not an iteration
/// control). The boundary data argument is part of the step's contract but
/// is never consulted: the zero-total-flux condition removes every boundary
/// term from the discrete system.
pub fn step_species<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    input: &TransportStepInput<'_, S>,
    reactions: &ReactionSpec<S>,
    _bc: &BoundaryData<S>,
    tol: S,
) -> Result<(Vec<CellField<S>>, TransportStats<S>), TransportError> {
    let l_count = params.n_species();
    assert_eq!(input.c_old.len(), l_count);
    assert_eq!(input.c_frozen.len(), l_count);
    assert!(input.dt > S::zero(), "dt must be positive");
    for (l, c) in input.c_old.iter().enumerate() {
        for i in 0..c.len() {
            assert!(c[i] >= S::zero(), "c_old must be non-negative (species {l}, cell {i})");
        }
    }

    let (gains, loss) = split_reactions_at(reactions, input.c_frozen);

    let results: Result<Vec<(Vec<S>, S, usize)>, TransportError> = (0..l_count)
        .into_par_iter()
        .map(|l| {
            let velocity = species_velocity(grid, params, input.e, input.q, l);
            let mut matrix: BandedMatrix<S> = BandedMatrix::zeros(grid.n_cells(), grid.nx);
            assemble_species_system(grid, params, l, &velocity, &loss[l], input.dt, &mut matrix);
            let rhs = species_rhs(grid, params, &input.c_old[l], &gains[l], input.dt);

            let lu = matrix.clone().factorize()?;
            let mut c_new = rhs.clone();
            lu.solve_in_place(&mut c_new);

            // residual safety net for the direct solve
            let mut mc = vec![S::zero(); c_new.len()];
            matrix.matvec(&c_new, &mut mc);
            let mut res = S::zero();
            let mut scale = S::zero();
            for i in 0..c_new.len() {
                res = res.max((mc[i] - rhs[i]).abs());
                scale = scale.max(rhs[i].abs());
            }
            if res > tol * scale.max(S::cast(1e-300)) {
                return Err(TransportError::Linear(LinalgError::NonConvergence {
                    what: "transport direct solve",
                    iterations: 1,
                    residual: (res / scale.max(S::cast(1e-300))).to_f64_lossy(),
                }));
            }

            // non-negativity post-check: rounding noise is clamped, anything
            // worse is a bug in the assembly
            let mut min_c = S::infinity();
            let mut clamps = 0usize;
            for (i, v) in c_new.iter_mut().enumerate() {
                min_c = min_c.min(*v);
                if *v < S::zero() {
                    if *v < S::cast(NEGATIVE_TOLERANCE) {
                        return Err(TransportError::NegativeConcentration {
                            species: l,
                            cell: i,
                            value: v.to_f64_lossy(),
                        });
                    }
                    *v = S::zero();
                    clamps += 1;
                }
            }
            Ok((c_new, min_c, clamps))
        })
        .collect();

    let results = results?;
    let mut stats = TransportStats { min_before_clamp: S::infinity(), clamp_events: 0 };
    let mut fields = Vec::with_capacity(l_count);
    for (values, min_c, clamps) in results {
        stats.min_before_clamp = stats.min_before_clamp.min(min_c);
        stats.clamp_events += clamps;
        fields.push(CellField::new(FieldRole::Concentration, values));
    }
    Ok((fields, stats))
}
