//! Electrostatics subproblem: given the free charge density, solve the
//! mixed zero-flux form of Gauss's law for the electric field on faces and
//! the potential on cells.
//!
//! The field is eliminated through `E = -eps grad(phi)`, leaving one SPD
//! cell system `-div(eps grad phi) = rho_f + rho_b` with prescribed normal
//! field `sigma` on the boundary; the potential is gauged to zero mean and
//! `E` is reconstructed afterwards, boundary faces carrying `sigma` exactly.

use crate::elliptic::{solve_neumann, EllipticConfig, FieldSolveError, NeumannOperator};
use crate::grid::{CellField, DiagTensorField, FaceField, FaceNeighbors, FieldRole, Grid2D};
use crate::model::{BoundaryData, ModelParams};
use crate::scalar::Scalar;

/// Field and potential satisfying the discrete Gauss law.
#[derive(Debug, Clone)]
pub struct PoissonSolution<S = f64> {
    /// Normal field components per face; boundary faces hold the prescribed
    /// surface data exactly.
    pub e: FaceField<S>,
    /// Potential, zero-mean gauge.
    pub phi: CellField<S>,
    pub residual_norm: S,
    pub cg_iterations: usize,
    pub compat_repaired: bool,
}

/// Integrated right-hand side of the potential system: cell charge minus
/// the boundary flux of the field.
pub(crate) fn gauss_rhs<S: Scalar>(
    grid: &Grid2D<S>,
    rho_f: &CellField<S>,
    bc: &BoundaryData<S>,
    t: S,
) -> Result<Vec<S>, FieldSolveError> {
    let rho_b = bc.background_charge.cell_field(grid, FieldRole::Charge, t)?;
    let area = grid.cell_area();
    let mut rhs: Vec<S> = (0..grid.n_cells())
        .map(|i| (rho_f[i] + rho_b[i]) * area)
        .collect();
    for (ordinal, face) in grid.boundary_faces().enumerate() {
        if let FaceNeighbors::Boundary { cell, side } = grid.face_neighbors(face) {
            let sigma = bc.sigma.eval_face(grid, face, ordinal, side, t)?;
            rhs[cell] -= sigma * grid.face_length(face);
        }
    }
    Ok(rhs)
}

/// Permittivity as a (uniform) face-averaged tensor; kept as a shared
/// helper so the reconstruction and the operator agree exactly.
pub fn permittivity_tensor<S: Scalar>(grid: &Grid2D<S>, params: &ModelParams<S>) -> DiagTensorField<S> {
    DiagTensorField::uniform(grid, params.permittivity, params.permittivity)
}

/// Reconstruct the field from a potential: `E = -eps grad(phi)` on interior
/// faces, the prescribed surface data exactly on boundary faces. Shared by
/// the iterative path and the dense reference solver.
pub fn electric_field<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    phi: &CellField<S>,
    bc: &BoundaryData<S>,
    t: S,
) -> Result<FaceField<S>, FieldSolveError> {
    let eps = permittivity_tensor(grid, params);
    let mut e = grid.tpfa_gradient_flux(phi, &eps, crate::grid::zero_boundary);
    for (ordinal, face) in grid.boundary_faces().enumerate() {
        if let FaceNeighbors::Boundary { side, .. } = grid.face_neighbors(face) {
            e[face] = bc.sigma.eval_face(grid, face, ordinal, side, t)?;
        }
    }
    Ok(e)
}

/// Solve the zero-flux Gauss law for the given free charge.
pub fn solve_gauss<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    rho_f: &CellField<S>,
    bc: &BoundaryData<S>,
    t: S,
    cfg: &EllipticConfig<S>,
) -> Result<PoissonSolution<S>, FieldSolveError> {
    let eps = permittivity_tensor(grid, params);
    let op = NeumannOperator::new(grid, &eps);
    let rhs = gauss_rhs(grid, rho_f, bc, t)?;
    let sol = solve_neumann(grid, &op, rhs, FieldRole::Potential, cfg, "gauss solve")?;
    let e = electric_field(grid, params, &sol.u, bc, t)?;

    Ok(PoissonSolution {
        e,
        phi: sol.u,
        residual_norm: sol.residual_norm,
        cg_iterations: sol.cg_iterations,
        compat_repaired: sol.compat_repaired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundaryProfile, Profile, SpeciesParams};
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

    fn l2(grid: &Grid2D<f64>, v: &CellField<f64>) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() * grid.cell_area()).sqrt()
    }

    #[test]
    fn zero_data_gives_zero_fields() {
        let grid: Grid2D<f64> = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
        let rho = CellField::zeros(&grid, FieldRole::Charge);
        let sol = solve_gauss(
            &grid,
            &params(),
            &rho,
            &BoundaryData::zero(),
            0.0,
            &EllipticConfig::default(),
        )
        .unwrap();
        assert_eq!(sol.phi.max_abs(), 0.0);
        assert_eq!(sol.e.max_abs(), 0.0);
        assert_eq!(sol.cg_iterations, 0);
    }

    #[test]
    fn global_balance_with_uniform_background_and_surface_charge() {
        // rho_b = 1 on the unit square against sigma = 1/4 on every wall:
        // compatible, and the divergence of E integrates back to 1.
        let grid: Grid2D<f64> = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
        let mut bc = BoundaryData::zero();
        bc.background_charge = Profile::Constant { value: 1.0 };
        bc.background_bound = 1.0;
        bc.sigma = BoundaryProfile::constant(0.25);
        bc.sigma_bound = 0.25;
        let rho = CellField::zeros(&grid, FieldRole::Charge);
        let sol = solve_gauss(&grid, &params(), &rho, &bc, 0.0, &EllipticConfig::default())
            .unwrap();
        assert!(!sol.compat_repaired);

        let div = grid.divergence(&sol.e);
        let total: f64 = div.iter().sum::<f64>() * grid.cell_area();
        assert!((total - 1.0).abs() < 1e-12, "total divergence {total}");
        // cell-wise Gauss law to solver tolerance
        for i in 0..grid.n_cells() {
            assert!((div[i] - 1.0).abs() < 1e-8, "cell {i}: {}", div[i]);
        }
        // gauge and boundary reconstruction
        assert!(sol.phi.mean().abs() <= 1e-12 * sol.phi.max_abs().max(1.0));
        for face in grid.boundary_faces() {
            assert_eq!(sol.e[face], 0.25);
        }
    }

    #[test]
    fn solution_is_linear_in_the_charge() {
        let grid: Grid2D<f64> = Grid2D::new(10, 7, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let mk_rho = |rng: &mut ChaCha8Rng| {
            let mut v: Vec<f64> = (0..grid.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= mean); // compatible with sigma = 0
            CellField::new(FieldRole::Charge, v)
        };
        let rho1 = mk_rho(&mut rng);
        let rho2 = mk_rho(&mut rng);
        let (a, b) = (1.7, -0.6);
        let combo = CellField::new(
            FieldRole::Charge,
            (0..grid.n_cells()).map(|i| a * rho1[i] + b * rho2[i]).collect(),
        );
        let cfg = EllipticConfig { rel_tol: 1e-13, ..Default::default() };
        let p = params();
        let bc = BoundaryData::zero();
        let s1 = solve_gauss(&grid, &p, &rho1, &bc, 0.0, &cfg).unwrap();
        let s2 = solve_gauss(&grid, &p, &rho2, &bc, 0.0, &cfg).unwrap();
        let sc = solve_gauss(&grid, &p, &combo, &bc, 0.0, &cfg).unwrap();
        for i in 0..grid.n_cells() {
            let expect = a * s1.phi[i] + b * s2.phi[i];
            assert!((sc.phi[i] - expect).abs() < 1e-8);
        }
        for f in grid.faces() {
            let expect = a * s1.e[f] + b * s2.e[f];
            assert!((sc.e[f] - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn norm_ratio_against_data_stays_bounded() {
        // discrete counterpart of the a-priori bound: ||phi|| + ||E|| is
        // controlled by the data norms, with a mesh-independent constant
        let grid: Grid2D<f64> = Grid2D::new(16, 16, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(777);
        let p = params();
        let cfg = EllipticConfig::default();
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let mut v: Vec<f64> =
                (0..grid.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            let rho = CellField::new(FieldRole::Charge, v);
            let sol = solve_gauss(&grid, &p, &rho, &BoundaryData::zero(), 0.0, &cfg).unwrap();
            let e_l2 = (sol.e.max_abs().powi(2) * grid.domain_area()).sqrt(); // crude bound on ||E||
            let ratio = (l2(&grid, &sol.phi) + e_l2) / l2(&grid, &rho).max(1e-300);
            worst = worst.max(ratio);
        }
        assert!(worst < 10.0, "ratio {worst}");
    }
}
