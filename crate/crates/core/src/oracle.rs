//! Brute-force references: a dense monolithic solver for tiny grids and
//! manufactured analytic solutions.
//!
//! The monolithic solver assembles one backward-Euler step as a single
//! dense system over all cell unknowns (potential, pressure, every species)
//! with the faces eliminated through the same flux relations the modular
//! path uses, and iterates Picard on the nonlinear couplings with plain
//! Gaussian elimination for every linear solve. It shares the operator
//! assembly code with the modular path but none of the solution strategy:
//! no splitting, no Krylov iteration, no banded factorization. Agreement
//! between the two is therefore evidence about the splitting and the
//! iterative solvers, while the hand-formula tests at the bottom guard the
//! shared assembly itself.

use crate::darcy::{
    darcy_flux, electric_body_force, integrated_force_divergence, mobility_tensor,
};
use crate::coupling::{ForceModel, FixedPointConfig, SystemState};
use crate::elliptic::{FieldSolveError, NeumannOperator};
use crate::grid::{CellField, FaceField, FieldRole, Grid2D};
use crate::linalg::{DenseMatrix, LinalgError, MatrixSink};
use crate::model::{BoundaryData, ModelError, ModelParams, ReactionSpec};
use crate::poisson::{electric_field, gauss_rhs, permittivity_tensor, solve_gauss};
use crate::scalar::Scalar;
use crate::transport::{
    assemble_species_system, species_rhs, species_velocity, split_reactions_at, step_species,
    TransportStepInput, NEGATIVE_TOLERANCE,
};
use crate::elliptic::EllipticConfig;
use crate::model::SpeciesParams;
use thiserror::Error;

/// Largest grid the dense reference accepts.
pub const MAX_ORACLE_CELLS: usize = 16;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("dense reference is restricted to {MAX_ORACLE_CELLS} cells, got {cells}")]
    GridTooLarge { cells: usize },
    #[error("dense iteration stalled after {iterations} sweeps (change {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Linear(#[from] LinalgError),
    #[error(transparent)]
    Field(#[from] FieldSolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Routes a sub-block assembly into a dense matrix at a row/column offset.
struct OffsetSink<'a, S> {
    inner: &'a mut DenseMatrix<S>,
    row0: usize,
    col0: usize,
}

impl<S: Scalar> MatrixSink<S> for OffsetSink<'_, S> {
    fn add(&mut self, row: usize, col: usize, value: S) {
        self.inner.add(self.row0 + row, self.col0 + col, value);
    }
}

/// Unknown layout of the dense system: potential block, pressure block,
/// one block per species, then one Lagrange multiplier per gauge.
struct Layout {
    n: usize,
    l_count: usize,
}

impl Layout {
    fn phi(&self, i: usize) -> usize {
        i
    }
    fn p(&self, i: usize) -> usize {
        self.n + i
    }
    fn c(&self, l: usize, i: usize) -> usize {
        (2 + l) * self.n + i
    }
    fn lambda_phi(&self) -> usize {
        (2 + self.l_count) * self.n
    }
    fn lambda_p(&self) -> usize {
        (2 + self.l_count) * self.n + 1
    }
    fn total(&self) -> usize {
        (2 + self.l_count) * self.n + 2
    }
}

/// One backward-Euler step solved as a single dense system over all
/// unknowns, Picard-iterated to machine-level stagnation. Same equations,
/// same gauges (zero-mean potential and pressure), different strategy.
pub fn monolithic_step<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    bc: &BoundaryData<S>,
    reactions: &ReactionSpec<S>,
    state: &SystemState<S>,
    cfg: &FixedPointConfig<S>,
) -> Result<SystemState<S>, OracleError> {
    let n = grid.n_cells();
    if n > MAX_ORACLE_CELLS {
        return Err(OracleError::GridTooLarge { cells: n });
    }
    let l_count = params.n_species();
    let layout = Layout { n, l_count };
    let total = layout.total();
    let dt = cfg.dt;
    let t_new = state.t + dt;
    let area = grid.cell_area();

    let eps = permittivity_tensor(grid, params);
    let op_eps = NeumannOperator::new(grid, &eps);
    let mobility = mobility_tensor(grid, params);
    let op_mob = NeumannOperator::new(grid, &mobility);

    // iterate vector: start from the incoming state, multipliers at zero
    let mut u = vec![S::zero(); total];
    for i in 0..n {
        u[layout.phi(i)] = state.phi[i];
        u[layout.p(i)] = state.p[i];
        for l in 0..l_count {
            u[layout.c(l, i)] = state.c[l][i];
        }
    }

    let zero_rho = CellField::zeros(grid, FieldRole::Charge);
    let gauss_data = gauss_rhs(grid, &zero_rho, bc, t_new)?;
    let charge_scale = params.charge_prefactor * params.porosity;

    let max_picard = 200;
    let mut converged = false;
    let mut last_residual = f64::NAN;
    for _ in 0..max_picard {
        // frozen quantities from the current iterate
        let phi_bar = CellField::new(FieldRole::Potential, u[..n].to_vec());
        let p_bar = CellField::new(FieldRole::Pressure, u[n..2 * n].to_vec());
        let c_bar: Vec<CellField<S>> = (0..l_count)
            .map(|l| {
                CellField::new(
                    FieldRole::Concentration,
                    u[(2 + l) * n..(3 + l) * n].to_vec(),
                )
            })
            .collect();
        let rho_bar = params.charge_density(&c_bar);
        let e_bar = electric_field(grid, params, &phi_bar, bc, t_new)?;
        let force_bar = match cfg.force_model {
            ForceModel::Coulomb => electric_body_force(grid, params, &rho_bar, &e_bar),
            ForceModel::Zero => FaceField::zeros(grid),
        };
        let q_bar = darcy_flux(grid, params, &p_bar, &force_bar, bc, t_new)?;
        let (gains, loss) = split_reactions_at(reactions, &c_bar);

        let mut m = DenseMatrix::zeros(total, total);
        let mut rhs = vec![S::zero(); total];

        // potential rows: probe the shared operator column by column, move
        // the (linear) charge of the unknown concentrations to the left
        let mut probe = vec![S::zero(); n];
        let mut out = vec![S::zero(); n];
        for j in 0..n {
            probe[j] = S::one();
            op_eps.apply(&probe, &mut out);
            for i in 0..n {
                if out[i] != S::zero() {
                    m.add(layout.phi(i), layout.phi(j), out[i]);
                }
            }
            probe[j] = S::zero();
        }
        for i in 0..n {
            for (l, spec) in params.species.iter().enumerate() {
                let z = S::cast(spec.valency as f64);
                if z != S::zero() {
                    m.add(layout.phi(i), layout.c(l, i), -area * charge_scale * z);
                }
            }
            m.add(layout.phi(i), layout.lambda_phi(), S::one());
            rhs[layout.phi(i)] = gauss_data[i];
        }

        // pressure rows: probe the mobility operator, then the affine
        // dependence of the force divergence on the potential (through the
        // interior field reconstruction at frozen charge)
        for j in 0..n {
            probe[j] = S::one();
            op_mob.apply(&probe, &mut out);
            for i in 0..n {
                if out[i] != S::zero() {
                    m.add(layout.p(i), layout.p(j), out[i]);
                }
            }
            probe[j] = S::zero();
        }
        if cfg.force_model == ForceModel::Coulomb {
            // interior part of the field map, probed column by column
            // (boundary faces stay zero in this part)
            let mut unit_phi = CellField::zeros(grid, FieldRole::Potential);
            for j in 0..n {
                unit_phi[j] = S::one();
                let e_j = grid.tpfa_gradient_flux(&unit_phi, &eps, crate::grid::zero_boundary);
                unit_phi[j] = S::zero();
                let force_j = electric_body_force(grid, params, &rho_bar, &e_j);
                let div_j = integrated_force_divergence(grid, params, &force_j);
                for i in 0..n {
                    if div_j[i] != S::zero() {
                        m.add(layout.p(i), layout.phi(j), div_j[i]);
                    }
                }
            }
            // boundary part of the field enters the right-hand side
            let zero_phi = CellField::zeros(grid, FieldRole::Potential);
            let e_boundary = electric_field(grid, params, &zero_phi, bc, t_new)?;
            let force_boundary = electric_body_force(grid, params, &rho_bar, &e_boundary);
            let div_b = integrated_force_divergence(grid, params, &force_boundary);
            for i in 0..n {
                rhs[layout.p(i)] = -div_b[i];
            }
        }
        for (ordinal, face) in grid.boundary_faces().enumerate() {
            if let crate::grid::FaceNeighbors::Boundary { cell, side } = grid.face_neighbors(face)
            {
                let f = bc.fluid_flux.eval_face(grid, face, ordinal, side, t_new)?;
                rhs[layout.p(cell)] -= f * grid.face_length(face);
            }
        }
        for i in 0..n {
            m.add(layout.p(i), layout.lambda_p(), S::one());
        }

        // species rows: the shared assembly, velocities frozen
        for l in 0..l_count {
            let v = species_velocity(grid, params, &e_bar, &q_bar, l);
            let mut sink = OffsetSink { inner: &mut m, row0: layout.c(l, 0), col0: layout.c(l, 0) };
            assemble_species_system(grid, params, l, &v, &loss[l], dt, &mut sink);
            let r = species_rhs(grid, params, &state.c[l], &gains[l], dt);
            for i in 0..n {
                rhs[layout.c(l, i)] = r[i];
            }
        }

        // gauge rows
        for i in 0..n {
            m.add(layout.lambda_phi(), layout.phi(i), S::one());
            m.add(layout.lambda_p(), layout.p(i), S::one());
        }

        let lu = m.factorize()?;
        let mut u_new = vec![S::zero(); total];
        lu.solve(&rhs, &mut u_new);

        let mut num = S::zero();
        let mut den = S::zero();
        for (a, b) in u_new.iter().zip(&u) {
            let d = *a - *b;
            num += d * d;
            den += *b * *b;
        }
        let residual = num.sqrt() / den.sqrt().max(S::cast(1e-14));
        last_residual = residual.to_f64_lossy();
        u = u_new;
        if residual <= S::cast(1e-12) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(OracleError::NonConvergence {
            iterations: max_picard,
            residual: last_residual,
        });
    }

    // unpack, restore gauges exactly, rebuild faces with the shared
    // reconstruction code
    let mut phi = CellField::new(FieldRole::Potential, u[..n].to_vec());
    let mut p = CellField::new(FieldRole::Pressure, u[n..2 * n].to_vec());
    phi.remove_mean();
    p.remove_mean();
    let c: Vec<CellField<S>> = (0..l_count)
        .map(|l| {
            let mut f = CellField::new(
                FieldRole::Concentration,
                u[(2 + l) * n..(3 + l) * n].to_vec(),
            );
            for i in 0..n {
                // same rounding-negative policy as the modular transport
                if f[i] < S::zero() {
                    debug_assert!(f[i] >= S::cast(NEGATIVE_TOLERANCE));
                    f[i] = S::zero();
                }
            }
            f
        })
        .collect();
    let rho_f = params.charge_density(&c);
    let e = electric_field(grid, params, &phi, bc, t_new)?;
    let force = match cfg.force_model {
        ForceModel::Coulomb => electric_body_force(grid, params, &rho_f, &e),
        ForceModel::Zero => FaceField::zeros(grid),
    };
    let q = darcy_flux(grid, params, &p, &force, bc, t_new)?;

    Ok(SystemState { t: t_new, c, e, q, phi, p, rho_f })
}

/// Which manufactured solution to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManufacturedCase {
    /// Potential `cos(pi x) cos(pi y)` on the unit square.
    PoissonCos,
    /// Flow driven by a gradient force, exact pressure `cos(pi x) cos(pi y)`.
    DarcyGradientForce,
    /// A bump advected by a uniform unit velocity, first-order upwind.
    TransportTranslate,
}

/// L2 errors per refinement level and the observed orders between levels.
#[derive(Debug, Clone)]
pub struct ErrorTable {
    pub sizes: Vec<usize>,
    pub errors: Vec<f64>,
    /// `log2(errors[k] / errors[k+1])`, one entry per refinement.
    pub orders: Vec<f64>,
}

fn l2_diff<S: Scalar>(grid: &Grid2D<S>, a: &CellField<S>, b: &CellField<S>) -> f64 {
    let mut acc = S::zero();
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    (acc * grid.cell_area()).sqrt().to_f64_lossy()
}

fn single_species_params<S: Scalar>(diffusivity: S) -> ModelParams<S> {
    ModelParams {
        porosity: S::one(),
        viscosity: S::one(),
        permittivity: S::one(),
        elementary_charge: S::one(),
        thermal_energy: S::one(),
        charge_prefactor: S::one(),
        permeability: (S::one(), S::one()),
        species: vec![SpeciesParams {
            name: "s".into(),
            valency: 0,
            diffusivity: (diffusivity, diffusivity),
        }],
    }
}

fn poisson_cos_error<S: Scalar>(n: usize) -> Result<f64, OracleError> {
    let grid: Grid2D<S> = Grid2D::new(n, n, S::one(), S::one()).expect("valid grid");
    let pi = S::PI();
    let rho = CellField::from_fn(&grid, FieldRole::Charge, |x, y| {
        S::two() * pi * pi * (pi * x).cos() * (pi * y).cos()
    });
    let params = single_species_params(S::one());
    let cfg = EllipticConfig { rel_tol: S::cast(1e-13), ..EllipticConfig::default() };
    let sol = solve_gauss(&grid, &params, &rho, &BoundaryData::zero(), S::zero(), &cfg)?;
    let mut exact = CellField::from_fn(&grid, FieldRole::Potential, |x, y| {
        (pi * x).cos() * (pi * y).cos()
    });
    exact.remove_mean();
    Ok(l2_diff(&grid, &sol.phi, &exact))
}

fn darcy_gradient_force_error<S: Scalar>(n: usize) -> Result<f64, OracleError> {
    let grid: Grid2D<S> = Grid2D::new(n, n, S::one(), S::one()).expect("valid grid");
    let pi = S::PI();
    // force = grad(cos(pi x) cos(pi y)), sampled at face centers; its
    // normal component vanishes on the boundary, matching zero flux
    let mut force = FaceField::zeros(&grid);
    for j in 0..grid.ny {
        for i in 1..grid.nx {
            let x = grid.hx * S::cast(i as f64);
            let y = grid.hy * (S::cast(j as f64) + S::half());
            force[grid.x_face(i, j)] = -pi * (pi * x).sin() * (pi * y).cos();
        }
    }
    for j in 1..grid.ny {
        for i in 0..grid.nx {
            let x = grid.hx * (S::cast(i as f64) + S::half());
            let y = grid.hy * S::cast(j as f64);
            force[grid.y_face(i, j)] = -pi * (pi * x).cos() * (pi * y).sin();
        }
    }
    let params = single_species_params(S::one());
    let cfg = EllipticConfig { rel_tol: S::cast(1e-13), ..EllipticConfig::default() };
    let sol = crate::darcy::solve_darcy(&grid, &params, &force, &BoundaryData::zero(), S::zero(), &cfg)?;
    let mut exact = CellField::from_fn(&grid, FieldRole::Pressure, |x, y| {
        (pi * x).cos() * (pi * y).cos()
    });
    exact.remove_mean();
    Ok(l2_diff(&grid, &sol.p, &exact))
}

fn transport_translate_error<S: Scalar>(n: usize) -> Result<f64, OracleError> {
    assert!(n % 4 == 0, "level must be a multiple of 4");
    // domain [0,2] x [0,1] with square cells of h = 1/n
    let grid: Grid2D<S> = Grid2D::new(2 * n, n, S::two(), S::one()).expect("valid grid");
    let params = single_species_params(S::cast(1e-12));
    // wide enough for the coarsest level to resolve, far enough from the
    // walls for the tails to stay below the discretization error
    let bump = |x: S, y: S, cx: f64| {
        let w = S::cast(0.25);
        let dx = x - S::cast(cx);
        let dy = y - S::half();
        (-(dx * dx + dy * dy) / (S::two() * w * w)).exp()
    };
    let c0 = CellField::from_fn(&grid, FieldRole::Concentration, |x, y| bump(x, y, 0.9));

    // uniform unit x-velocity through interior faces; walls stay closed
    let mut q = FaceField::zeros(&grid);
    for j in 0..grid.ny {
        for i in 1..2 * n {
            q[grid.x_face(i, j)] = S::one();
        }
    }
    let e = FaceField::zeros(&grid);
    let t_end = 0.25;
    let steps = n / 4; // dt = h, unit advective step per cell
    let dt = S::cast(t_end) / S::cast(steps as f64);
    let bc = BoundaryData::zero();

    let mut c = vec![c0];
    let mut t = S::zero();
    for _ in 0..steps {
        let input = TransportStepInput {
            c_old: &c,
            c_frozen: &c,
            e: &e,
            q: &q,
            dt,
            t,
        };
        let (next, _) = step_species(&grid, &params, &input, &ReactionSpec::None, &bc, S::cast(1e-10))
            .map_err(|e| match e {
                crate::transport::TransportError::Linear(l) => OracleError::Linear(l),
                _ => OracleError::NonConvergence { iterations: 0, residual: f64::NAN },
            })?;
        c = next;
        t += dt;
    }
    let exact = CellField::from_fn(&grid, FieldRole::Concentration, |x, y| {
        bump(x, y, 0.9 + t_end)
    });
    Ok(l2_diff(&grid, &c[0], &exact))
}

/// Run one manufactured case over a list of grid sizes.
pub fn manufactured_errors<S: Scalar>(
    case: ManufacturedCase,
    levels: &[usize],
) -> Result<ErrorTable, OracleError> {
    let mut errors = Vec::with_capacity(levels.len());
    for &n in levels {
        let e = match case {
            ManufacturedCase::PoissonCos => poisson_cos_error::<S>(n)?,
            ManufacturedCase::DarcyGradientForce => darcy_gradient_force_error::<S>(n)?,
            ManufacturedCase::TransportTranslate => transport_translate_error::<S>(n)?,
        };
        errors.push(e);
    }
    let orders = errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    Ok(ErrorTable { sizes: levels.to_vec(), errors, orders })
}
