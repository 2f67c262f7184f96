//! Incompressible Darcy flow driven by pressure and the Coulomb body force
//! on the free charge: `q = K(-grad(p)/mu + force)` with `div q = 0` and
//! prescribed normal flux on the boundary.
//!
//! The velocity is eliminated into one SPD cell system for the pressure
//! (zero-mean gauge), then reconstructed; boundary faces carry the
//! prescribed flux exactly, so the force only acts through interior faces.

use crate::elliptic::{solve_neumann, EllipticConfig, FieldSolveError, NeumannOperator};
use crate::grid::{Axis, CellField, DiagTensorField, FaceField, FaceNeighbors, FieldRole, Grid2D};
use crate::model::{BoundaryData, ModelParams};
use crate::scalar::Scalar;

/// Velocity and pressure satisfying the discrete flow problem.
#[derive(Debug, Clone)]
pub struct DarcySolution<S = f64> {
    /// Normal velocity per face; boundary faces hold the prescribed flux.
    pub q: FaceField<S>,
    /// Pressure, zero-mean gauge.
    pub p: CellField<S>,
    pub residual_norm: S,
    pub cg_iterations: usize,
    pub compat_repaired: bool,
}

/// Face-normal Coulomb force density `rho_f E / (mu eps)`, with the charge
/// averaged arithmetically onto faces (one-sided at the boundary, where the
/// value never enters the flow solve).
pub fn electric_body_force<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    rho_f: &CellField<S>,
    e: &FaceField<S>,
) -> FaceField<S> {
    let scale = (params.viscosity * params.permittivity).recip();
    let mut force = FaceField::zeros(grid);
    for face in grid.faces() {
        let rho_face = match grid.face_neighbors(face) {
            FaceNeighbors::Interior { lo, hi } => (rho_f[lo] + rho_f[hi]) * S::half(),
            FaceNeighbors::Boundary { cell, .. } => rho_f[cell],
        };
        force[face] = scale * rho_face * e[face];
    }
    force
}

/// Mobility `K / mu` as a face-averaged tensor, shared between the pressure
/// operator and the velocity reconstruction.
pub fn mobility_tensor<S: Scalar>(grid: &Grid2D<S>, params: &ModelParams<S>) -> DiagTensorField<S> {
    DiagTensorField::uniform(
        grid,
        params.permeability.0 / params.viscosity,
        params.permeability.1 / params.viscosity,
    )
}

/// Permeability-weighted face source `K * force` on interior faces.
fn force_flux<S: Scalar>(grid: &Grid2D<S>, params: &ModelParams<S>, force: &FaceField<S>) -> FaceField<S> {
    let mut s = FaceField::zeros(grid);
    for face in grid.interior_faces() {
        let k = match grid.face_axis(face) {
            Axis::X => params.permeability.0,
            Axis::Y => params.permeability.1,
        };
        s[face] = k * force[face];
    }
    s
}

/// Integrated divergence of the permeability-weighted force through
/// interior faces: the cell source the force contributes to the pressure
/// system. Shared with the dense reference solver.
pub(crate) fn integrated_force_divergence<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    force: &FaceField<S>,
) -> Vec<S> {
    let kf = force_flux(grid, params, force);
    let div_kf = grid.divergence(&kf);
    let area = grid.cell_area();
    (0..grid.n_cells()).map(|i| div_kf[i] * area).collect()
}

/// Reconstruct the velocity from a pressure: `q = -mobility grad(p) + K
/// force` on interior faces, the prescribed flux exactly on boundary faces.
/// Shared by the iterative path and the dense reference solver.
pub fn darcy_flux<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    p: &CellField<S>,
    force: &FaceField<S>,
    bc: &BoundaryData<S>,
    t: S,
) -> Result<FaceField<S>, FieldSolveError> {
    let mobility = mobility_tensor(grid, params);
    let kf = force_flux(grid, params, force);
    let mut q = grid.tpfa_gradient_flux(p, &mobility, crate::grid::zero_boundary);
    for face in grid.interior_faces() {
        q[face] += kf[face];
    }
    for (ordinal, face) in grid.boundary_faces().enumerate() {
        if let FaceNeighbors::Boundary { side, .. } = grid.face_neighbors(face) {
            q[face] = bc.fluid_flux.eval_face(grid, face, ordinal, side, t)?;
        }
    }
    Ok(q)
}

/// Solve the incompressible flow problem for a given body force.
pub fn solve_darcy<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    force: &FaceField<S>,
    bc: &BoundaryData<S>,
    t: S,
    cfg: &EllipticConfig<S>,
) -> Result<DarcySolution<S>, FieldSolveError> {
    let mobility = mobility_tensor(grid, params);
    let op = NeumannOperator::new(grid, &mobility);

    // div q = 0 with q = -mobility grad(p) + K force:
    // op(p) = -(integrated divergence of K force) - boundary flux
    let mut rhs = integrated_force_divergence(grid, params, force);
    for v in rhs.iter_mut() {
        *v = -*v;
    }
    for (ordinal, face) in grid.boundary_faces().enumerate() {
        if let FaceNeighbors::Boundary { cell, side } = grid.face_neighbors(face) {
            let f = bc.fluid_flux.eval_face(grid, face, ordinal, side, t)?;
            rhs[cell] -= f * grid.face_length(face);
        }
    }

    let sol = solve_neumann(grid, &op, rhs, FieldRole::Pressure, cfg, "darcy solve")?;
    let q = darcy_flux(grid, params, &sol.u, force, bc, t)?;

    Ok(DarcySolution {
        q,
        p: sol.u,
        residual_norm: sol.residual_norm,
        cg_iterations: sol.cg_iterations,
        compat_repaired: sol.compat_repaired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundaryProfile, SpeciesParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ModelParams<f64> {
        ModelParams {
            porosity: 1.0,
            viscosity: 1.0,
            permittivity: 1.0,
            elementary_charge: 1.0,
            thermal_energy: 1.0,
            charge_prefactor: 1.0,
            permeability: (1.0, 1.0),
            species: vec![SpeciesParams {
                name: "s".into(),
                valency: 1,
                diffusivity: (1.0, 1.0),
            }],
        }
    }

    #[test]
    fn body_force_is_charge_times_field_over_mu_eps() {
        let grid: Grid2D<f64> = Grid2D::new(3, 3, 1.0, 1.0).unwrap();
        let rho = CellField::constant(&grid, FieldRole::Charge, 2.0);
        let mut e = FaceField::zeros(&grid);
        for f in grid.faces() {
            e[f] = 3.0;
        }
        let force = electric_body_force(&grid, &params(), &rho, &e);
        for f in grid.faces() {
            assert_eq!(force[f], 6.0);
        }

        // either factor zero kills the force
        let zero_rho = CellField::zeros(&grid, FieldRole::Charge);
        assert_eq!(electric_body_force(&grid, &params(), &zero_rho, &e).max_abs(), 0.0);
        let zero_e = FaceField::zeros(&grid);
        assert_eq!(electric_body_force(&grid, &params(), &rho, &zero_e).max_abs(), 0.0);
    }

    #[test]
    fn zero_data_gives_zero_flow() {
        let grid: Grid2D<f64> = Grid2D::new(6, 6, 1.0, 1.0).unwrap();
        let force = FaceField::zeros(&grid);
        let sol = solve_darcy(
            &grid,
            &params(),
            &force,
            &BoundaryData::zero(),
            0.0,
            &EllipticConfig::default(),
        )
        .unwrap();
        assert_eq!(sol.q.max_abs(), 0.0);
        assert_eq!(sol.p.max_abs(), 0.0);
    }

    #[test]
    fn uniform_through_flow_reproduces_unit_velocity_and_linear_pressure() {
        let grid: Grid2D<f64> = Grid2D::new(8, 5, 1.0, 1.0).unwrap();
        let mut bc = BoundaryData::zero();
        bc.fluid_flux = BoundaryProfile::PerSide { west: -1.0, east: 1.0, south: 0.0, north: 0.0 };
        bc.fluid_flux_bound = 1.0;
        let force = FaceField::zeros(&grid);
        let cfg = EllipticConfig { rel_tol: 1e-13, ..Default::default() };
        let sol = solve_darcy(&grid, &params(), &force, &bc, 0.0, &cfg).unwrap();

        // unit flux through every x-face, nothing through y-faces
        for face in grid.faces() {
            let expect = match (grid.face_axis(face), grid.face_neighbors(face)) {
                (Axis::X, FaceNeighbors::Interior { .. }) => 1.0,
                (Axis::X, FaceNeighbors::Boundary { side, .. }) => {
                    if side == crate::grid::Side::West {
                        -1.0 // outward normal component of +x flow
                    } else {
                        1.0
                    }
                }
                (Axis::Y, _) => 0.0,
            };
            assert!(
                (sol.q[face] - expect).abs() < 1e-10,
                "face {face}: {} vs {expect}",
                sol.q[face]
            );
        }
        // pressure drops linearly: p_i - p_{i+1} = hx * mu / K
        let (nx, hx) = (grid.nx, grid.hx);
        for j in 0..grid.ny {
            for i in 0..nx - 1 {
                let a = sol.p[grid.cell_index(i, j)];
                let b = sol.p[grid.cell_index(i + 1, j)];
                assert!((a - b - hx).abs() < 1e-10);
            }
        }
        // incompressibility
        let div = grid.divergence(&sol.q);
        assert!(div.max_abs() < 1e-9);
    }

    #[test]
    fn random_compatible_data_yields_divergence_free_velocity() {
        let grid: Grid2D<f64> = Grid2D::new(9, 6, 1.2, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut force = FaceField::zeros(&grid);
        for f in grid.faces() {
            force[f] = rng.gen_range(-1.0..1.0);
        }
        // random boundary flux, balanced over the boundary
        let n_b = grid.n_boundary_faces();
        let mut values: Vec<f64> = (0..n_b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let total: f64 = grid
            .boundary_faces()
            .zip(&values)
            .map(|(face, v)| v * grid.face_length(face))
            .sum();
        let perimeter = 2.0 * (grid.lx + grid.ly);
        values.iter_mut().for_each(|v| *v -= total / perimeter);
        let mut bc = BoundaryData::zero();
        bc.fluid_flux = BoundaryProfile::Uniform(crate::model::Profile::Tabulated { values });
        bc.fluid_flux_bound = 2.0;

        let cfg = EllipticConfig { rel_tol: 1e-12, ..Default::default() };
        let sol = solve_darcy(&grid, &params(), &force, &bc, 0.0, &cfg).unwrap();
        assert!(!sol.compat_repaired);
        let div = grid.divergence(&sol.q);
        assert!(div.max_abs() < 1e-9, "max divergence {}", div.max_abs());
    }

    #[test]
    fn solution_is_jointly_linear_in_force_and_boundary_flux() {
        let grid: Grid2D<f64> = Grid2D::new(6, 6, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = params();
        let cfg = EllipticConfig { rel_tol: 1e-13, ..Default::default() };

        let mk = |rng: &mut ChaCha8Rng| {
            let mut force = FaceField::zeros(&grid);
            for f in grid.faces() {
                force[f] = rng.gen_range(-1.0..1.0);
            }
            let n_b = grid.n_boundary_faces();
            let mut values: Vec<f64> = (0..n_b).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let total: f64 = grid
                .boundary_faces()
                .zip(&values)
                .map(|(face, v)| v * grid.face_length(face))
                .sum();
            values.iter_mut().for_each(|v| *v -= total / 4.0);
            (force, values)
        };
        let (f1, v1) = mk(&mut rng);
        let (f2, v2) = mk(&mut rng);
        let (a, b) = (0.9, -1.4);

        let bc_of = |values: Vec<f64>| {
            let mut bc = BoundaryData::zero();
            bc.fluid_flux = BoundaryProfile::Uniform(crate::model::Profile::Tabulated { values });
            bc.fluid_flux_bound = 5.0;
            bc
        };
        let combo_force = {
            let mut f = FaceField::zeros(&grid);
            for face in grid.faces() {
                f[face] = a * f1[face] + b * f2[face];
            }
            f
        };
        let combo_values: Vec<f64> =
            v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();

        let s1 = solve_darcy(&grid, &p, &f1, &bc_of(v1), 0.0, &cfg).unwrap();
        let s2 = solve_darcy(&grid, &p, &f2, &bc_of(v2), 0.0, &cfg).unwrap();
        let sc = solve_darcy(&grid, &p, &combo_force, &bc_of(combo_values), 0.0, &cfg).unwrap();
        for f in grid.faces() {
            let expect = a * s1.q[f] + b * s2.q[f];
            assert!((sc.q[f] - expect).abs() < 1e-8);
        }
        for i in 0..grid.n_cells() {
            let expect = a * s1.p[i] + b * s2.p[i];
            assert!((sc.p[i] - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn unbalanced_boundary_flux_is_rejected()  {
        let grid: Grid2D<f64> = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let mut bc = BoundaryData::zero();
        bc.fluid_flux = BoundaryProfile::constant(1.0); // pumps in everywhere
        bc.fluid_flux_bound = 1.0;
        let force = FaceField::zeros(&grid);
        let r = solve_darcy(&grid, &params(), &force, &bc, 0.0, &EllipticConfig::default());
        assert!(matches!(r, Err(FieldSolveError::CompatibilityViolation { .. })));
    }
}
