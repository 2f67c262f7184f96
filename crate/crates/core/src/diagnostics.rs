//! Runtime monitors: the entropy functional, discrete norms, the closed-form
//! Gronwall envelopes that bound entropy and energy along any valid run, and
//! the per-step record the observers serialize.
//!
//! The envelopes are monitors, never controllers: they are evaluated from
//! model constants and declared data bounds alone, and the simulation is
//! checked against them after the fact. Their constants stack exponentials,
//! so everything is computed in log space first; the plain values may
//! legitimately be infinite in double precision and are reported as such,
//! while the log forms stay finite and are what the domination checks use.

use crate::grid::{CellField, FaceField, FaceNeighbors, Grid2D};
use crate::model::{BoundaryData, ModelError, ModelParams, ReactionSpec};
use crate::scalar::{ln_one_plus_mul_exp, Scalar};

/// Entropy density `x (ln x - 1) + e`, continuously extended to `x = 0`
/// where it takes the value `e`. Non-negative, and `lyapunov(x) >= x`.
pub fn lyapunov<S: Scalar>(x: S) -> S {
    assert!(x >= S::zero(), "lyapunov needs non-negative input, got {x}");
    if x == S::zero() {
        S::E()
    } else {
        x * (x.ln() - S::one()) + S::E()
    }
}

/// Total entropy `sum_l sum_cells lyapunov(c_l) * area`.
pub fn entropy_total<S: Scalar>(
    grid: &Grid2D<S>,
    concentrations: &[CellField<S>],
) -> Result<S, ModelError> {
    let mut total = S::zero();
    for (l, c) in concentrations.iter().enumerate() {
        for i in 0..c.len() {
            if c[i] < S::zero() {
                return Err(ModelError::NegativeConcentration {
                    species: l,
                    cell: i,
                    value: c[i].to_f64_lossy(),
                });
            }
            total += lyapunov(c[i]);
        }
    }
    Ok(total * grid.cell_area())
}

/// The pointwise quantity `(sum_l z_l c_l) * (sum_l sign(z_l) (|z_l| c_l)^2)`
/// that appears when the electric drift is tested against the concentration:
/// non-negative for two species with opposite unit valencies, but of
/// indefinite sign in general (three species with z = (1, 1, -1) at
/// c = (1, 1, sqrt(3)) give `-(2 - sqrt(3))`), which is why the energy bound
/// needs the entropy bound first instead of a direct sign argument.
pub fn drift_sign_term<S: Scalar>(valencies: &[i32], concentrations: &[S]) -> S {
    assert_eq!(valencies.len(), concentrations.len());
    let mut charge = S::zero();
    let mut quad = S::zero();
    for (&z, &c) in valencies.iter().zip(concentrations) {
        let zf = S::cast(z as f64);
        charge += zf * c;
        let m = zf.abs() * c;
        quad += S::cast(z.signum() as f64) * m * m;
    }
    charge * quad
}

/// Closed-form a-priori bounds at time `t`, in both log and plain form.
#[derive(Debug, Clone, Copy)]
pub struct GronwallEnvelopes<S = f64> {
    /// Bound on the total entropy.
    pub entropy: S,
    /// Bound on the total squared concentration norm `sum_l ||c_l||^2`.
    pub energy: S,
    /// `ln(entropy)`: always finite.
    pub ln_entropy: S,
    /// `ln(energy)`: finite whenever the inner constant fits in a double.
    pub ln_energy: S,
}

/// Growth rate of the entropy bound, assembled from declared data bounds:
/// `b = (8/alpha_D) ||f||^2 + (8 e^2 max|z|^2 / (alpha_D (eps kT)^2)) ||sigma||^2 + max_l C_R,l`.
pub fn entropy_growth_rate<S: Scalar>(
    params: &ModelParams<S>,
    bc: &BoundaryData<S>,
    reactions: &ReactionSpec<S>,
) -> S {
    let alpha_d = params.min_diffusivity();
    let e = params.elementary_charge;
    let ekt = params.permittivity * params.thermal_energy;
    let zmax = params.max_abs_valency();
    let eight = S::cast(8.0);
    eight / alpha_d * bc.fluid_flux_bound * bc.fluid_flux_bound
        + eight * e * e * zmax * zmax / (alpha_d * ekt * ekt)
            * bc.sigma_bound
            * bc.sigma_bound
        + reactions.max_lipschitz(params.n_species())
}

/// Evaluate both envelopes at time `t` for a run started from `initial`.
///
/// Entropy: `[1 + b t e^{bt}] * sum_l ||lyapunov(c_l0)||_L1`.
/// Energy: `e^{B0 t} * exp(K * C_L^2) * sum_l ||c_l0||^2` with
/// `K = 12 e^2 max|z|^2 / (alpha_D (eps kT)^2)`,
/// `B0 = K/A0 * [||sigma||^2 + ||rho_b|| + ||f||^2 + 3 theta max C_R]`,
/// `A0 = min(theta/2, alpha_D/2)`, and `C_L` the charge-norm constant
/// produced by the entropy bound at the same time.
pub fn gronwall_envelopes<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    bc: &BoundaryData<S>,
    reactions: &ReactionSpec<S>,
    initial: &[CellField<S>],
    t: S,
) -> Result<GronwallEnvelopes<S>, ModelError> {
    assert!(t >= S::zero());
    let entropy0 = entropy_total(grid, initial)?;
    let ln_entropy0 = entropy0.ln();
    let b = entropy_growth_rate(params, bc, reactions);

    // ln([1 + bt e^{bt}] entropy0)
    let bt = b * t;
    let ln_entropy_env = ln_entropy0 + ln_one_plus_mul_exp(bt, bt);

    // charge-norm constant C_L = 2 max(C_L1, C_L2) with
    // C_L1 = (eps kT / e) [1 + b Ctilde] entropy0,
    // C_L2 = (2/alpha_D) [1 + b Ctilde] entropy0, Ctilde = entropy envelope
    let ekt = params.permittivity * params.thermal_energy;
    let alpha_d = params.min_diffusivity();
    let ln_c_tilde = ln_entropy_env;
    let ln_bracket = ln_one_plus_mul_exp(b, ln_c_tilde);
    let ln_cl1 = (ekt / params.elementary_charge).ln() + ln_bracket + ln_entropy0;
    let ln_cl2 = (S::two() / alpha_d).ln() + ln_bracket + ln_entropy0;
    let ln_cl = S::two().ln() + ln_cl1.max(ln_cl2);

    let zmax = params.max_abs_valency();
    let k = S::cast(12.0) * params.elementary_charge * params.elementary_charge * zmax * zmax
        / (alpha_d * ekt * ekt);
    let a0 = (params.porosity * S::half()).min(alpha_d * S::half());
    let b0 = k / a0
        * (bc.sigma_bound * bc.sigma_bound
            + bc.background_bound
            + bc.fluid_flux_bound * bc.fluid_flux_bound
            + S::cast(3.0) * params.porosity * reactions.max_lipschitz(params.n_species()));

    let area = grid.cell_area();
    let energy0: S = initial
        .iter()
        .map(|c| c.iter().map(|&v| v * v).sum::<S>() * area)
        .sum();
    // ln(e^{B0 t} exp(K C_L^2) energy0); K C_L^2 may overflow to +inf,
    // which is the honest value of an astronomically large bound
    let k_cl2 = k * (S::two() * ln_cl).exp();
    let ln_energy_env = if energy0 > S::zero() {
        b0 * t + k_cl2 + energy0.ln()
    } else {
        S::neg_infinity()
    };

    Ok(GronwallEnvelopes {
        entropy: ln_entropy_env.exp(),
        energy: ln_energy_env.exp(),
        ln_entropy: ln_entropy_env,
        ln_energy: ln_energy_env,
    })
}

/// Area-weighted L2 norm of a cell field.
pub fn cell_l2<S: Scalar>(grid: &Grid2D<S>, field: &CellField<S>) -> S {
    (field.iter().map(|&v| v * v).sum::<S>() * grid.cell_area()).sqrt()
}

/// L2 norm of a face field with the staggered weight spacing x length per
/// face (a monitor-grade quadrature of the vector field's square).
pub fn face_l2<S: Scalar>(grid: &Grid2D<S>, field: &FaceField<S>) -> S {
    let mut acc = S::zero();
    for f in grid.faces() {
        let w = grid.face_spacing(f) * grid.face_length(f);
        acc += field[f] * field[f] * w;
    }
    acc.sqrt()
}

/// L2 norm of the TPFA gradient: face differences over interior faces.
pub fn grad_l2<S: Scalar>(grid: &Grid2D<S>, field: &CellField<S>) -> S {
    let mut acc = S::zero();
    for f in grid.interior_faces() {
        if let FaceNeighbors::Interior { lo, hi } = grid.face_neighbors(f) {
            let h = grid.face_spacing(f);
            let g = (field[hi] - field[lo]) / h;
            acc += g * g * h * grid.face_length(f);
        }
    }
    acc.sqrt()
}

/// Porosity-weighted total mass of one species.
pub fn species_mass<S: Scalar>(grid: &Grid2D<S>, porosity: S, c: &CellField<S>) -> S {
    porosity * c.sum() * grid.cell_area()
}

/// Per-species slice of a diagnostics record.
#[derive(Debug, Clone)]
pub struct SpeciesDiagnostics<S = f64> {
    pub name: String,
    pub mass: S,
    pub l2: S,
    pub linf: S,
    pub grad_l2: S,
}

/// Everything the monitors track about one accepted time step.
#[derive(Debug, Clone)]
pub struct DiagnosticsRecord<S = f64> {
    pub t: S,
    pub species: Vec<SpeciesDiagnostics<S>>,
    pub entropy: S,
    /// `sum_l ||c_l||_L2^2`, the quantity the energy envelope bounds.
    pub energy: S,
    pub charge_l2: S,
    pub e_l2: S,
    pub phi_l2: S,
    pub q_l2: S,
    pub p_l2: S,
    pub envelopes: GronwallEnvelopes<S>,
    pub outer_iters: usize,
    pub clamp_events: usize,
    pub compat_repairs: usize,
    pub halvings: usize,
}

impl<S: Scalar> DiagnosticsRecord<S> {
    /// Both monitored quantities stay below their envelopes (compared in
    /// log space with a relative slack for rounding).
    pub fn within_envelopes(&self) -> bool {
        let slack = S::cast(1e-12);
        let entropy_ok = self.entropy.ln() <= self.envelopes.ln_entropy + slack;
        let energy_ok = self.energy <= S::zero()
            || self.energy.ln() <= self.envelopes.ln_energy + slack;
        entropy_ok && energy_ok
    }
}

/// Assemble a record from a state snapshot; pure bookkeeping.
#[allow(clippy::too_many_arguments)]
pub fn collect_record<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    t: S,
    c: &[CellField<S>],
    e: &FaceField<S>,
    q: &FaceField<S>,
    phi: &CellField<S>,
    p: &CellField<S>,
    rho_f: &CellField<S>,
    envelopes: GronwallEnvelopes<S>,
    outer_iters: usize,
    clamp_events: usize,
    compat_repairs: usize,
    halvings: usize,
) -> Result<DiagnosticsRecord<S>, ModelError> {
    let species = params
        .species
        .iter()
        .zip(c)
        .map(|(spec, field)| SpeciesDiagnostics {
            name: spec.name.clone(),
            mass: species_mass(grid, params.porosity, field),
            l2: cell_l2(grid, field),
            linf: field.max_abs(),
            grad_l2: grad_l2(grid, field),
        })
        .collect::<Vec<_>>();
    let energy = species.iter().map(|s| s.l2 * s.l2).sum();
    Ok(DiagnosticsRecord {
        t,
        entropy: entropy_total(grid, c)?,
        energy,
        charge_l2: cell_l2(grid, rho_f),
        e_l2: face_l2(grid, e),
        phi_l2: cell_l2(grid, phi),
        q_l2: face_l2(grid, q),
        p_l2: cell_l2(grid, p),
        species,
        envelopes,
        outer_iters,
        clamp_events,
        compat_repairs,
        halvings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldRole;
    use crate::model::SpeciesParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn lyapunov_matches_hand_values() {
        assert!((lyapunov(1.0_f64) - (E - 1.0)).abs() < 1e-15);
        assert_eq!(lyapunov(0.0_f64), E);
        assert!((lyapunov(E) - E).abs() < 1e-15); // minimum of lyapunov(x) - x
        assert!((lyapunov(2.0_f64) - 2.1045761895789359).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_dominates_identity_and_stays_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(0.0..50.0);
            let v = lyapunov(x);
            assert!(v >= 0.0);
            assert!(v - x >= -1e-12, "lyapunov({x}) - x = {}", v - x);
        }
    }

    #[test]
    fn entropy_matches_hand_values() {
        let g: Grid2D<f64> = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        // c = 0, one species, unit domain: e
        let zero = vec![CellField::zeros(&g, FieldRole::Concentration)];
        assert!((entropy_total(&g, &zero).unwrap() - E).abs() < 1e-14);
        // c = 1, two species: 2(e - 1)
        let ones = vec![
            CellField::constant(&g, FieldRole::Concentration, 1.0),
            CellField::constant(&g, FieldRole::Concentration, 1.0),
        ];
        assert!((entropy_total(&g, &ones).unwrap() - 2.0 * (E - 1.0)).abs() < 1e-14);
        // c = e on half the domain, 0 elsewhere: 0.5 lyapunov(e) + 0.5 lyapunov(0) = e
        let mut vals = vec![0.0; 16];
        vals[..8].fill(E);
        let half = vec![CellField::new(FieldRole::Concentration, vals)];
        assert!((entropy_total(&g, &half).unwrap() - E).abs() < 1e-14);

        // negative input is rejected
        let bad = vec![CellField::constant(&g, FieldRole::Concentration, -0.1)];
        assert!(entropy_total(&g, &bad).is_err());
    }

    #[test]
    fn entropy_dominates_total_concentration() {
        let g: Grid2D<f64> = Grid2D::new(5, 5, 2.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..20 {
            let c: Vec<CellField<f64>> = (0..3)
                .map(|_| {
                    CellField::new(
                        FieldRole::Concentration,
                        (0..g.n_cells()).map(|_| rng.gen_range(0.0..30.0)).collect(),
                    )
                })
                .collect();
            let entropy = entropy_total(&g, &c).unwrap();
            let total: f64 = c.iter().map(|f| f.sum() * g.cell_area()).sum();
            assert!(entropy >= total - 1e-12);
        }
    }

    #[test]
    fn drift_sign_term_hand_values() {
        // two species, opposite unit valencies: (c1 - c2)(c1^2 - c2^2)
        assert_eq!(drift_sign_term(&[1, -1], &[2.0, 1.0]), 3.0);
        assert_eq!(drift_sign_term::<f64>(&[1, -1], &[0.0, 0.0]), 0.0);

        // the three-species counterexample: z = (1, 1, -1), c = (1, 1, sqrt 3)
        let s3 = 3.0_f64.sqrt();
        let v = drift_sign_term(&[1, 1, -1], &[1.0, 1.0, s3]);
        assert!(
            (v - (-(2.0 - s3))).abs() < 1e-15,
            "expected -(2 - sqrt 3) = {}, got {v}",
            -(2.0 - s3)
        );
        assert!(v < 0.0);
    }

    #[test]
    fn two_species_drift_term_never_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        for _ in 0..1000 {
            let c = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
            assert!(drift_sign_term(&[1, -1], &c) >= 0.0);
        }
    }

    fn simple_params(diffusivity: f64) -> ModelParams<f64> {
        ModelParams {
            porosity: 1.0,
            viscosity: 1.0,
            permittivity: 1.0,
            elementary_charge: 1.0,
            thermal_energy: 1.0,
            charge_prefactor: 1.0,
            permeability: (1.0, 1.0),
            species: vec![
                SpeciesParams { name: "a".into(), valency: 1, diffusivity: (diffusivity, diffusivity) },
                SpeciesParams { name: "b".into(), valency: -1, diffusivity: (diffusivity, diffusivity) },
            ],
        }
    }

    #[test]
    fn envelope_is_flat_without_sources_and_reactions() {
        let g: Grid2D<f64> = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let p = simple_params(1.0);
        let bc = BoundaryData::zero();
        let c0 = vec![
            CellField::constant(&g, FieldRole::Concentration, 1.0),
            CellField::constant(&g, FieldRole::Concentration, 1.0),
        ];
        assert_eq!(entropy_growth_rate(&p, &bc, &ReactionSpec::None), 0.0);
        let e0 = entropy_total(&g, &c0).unwrap();
        for t in [0.0, 0.5, 10.0] {
            let env = gronwall_envelopes(&g, &p, &bc, &ReactionSpec::None, &c0, t).unwrap();
            assert!((env.entropy - e0).abs() < 1e-12 * e0, "t = {t}");
        }
    }

    #[test]
    fn envelope_is_continuous_at_zero_and_monotone() {
        let g: Grid2D<f64> = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let p = simple_params(10.0);
        let mut bc = BoundaryData::zero();
        bc.sigma_bound = 0.25;
        bc.fluid_flux_bound = 0.5;
        let c0 = vec![
            CellField::constant(&g, FieldRole::Concentration, 1.0),
            CellField::constant(&g, FieldRole::Concentration, 2.0),
        ];
        let e0 = entropy_total(&g, &c0).unwrap();
        let near0 = gronwall_envelopes(&g, &p, &bc, &ReactionSpec::None, &c0, 1e-12).unwrap();
        assert!((near0.entropy - e0).abs() < 1e-9 * e0);

        let mut prev = near0;
        for t in [0.1, 0.5, 1.0, 2.0] {
            let env = gronwall_envelopes(&g, &p, &bc, &ReactionSpec::None, &c0, t).unwrap();
            assert!(env.ln_entropy >= prev.ln_entropy);
            assert!(env.ln_energy >= prev.ln_energy);
            prev = env;
        }
    }

    #[test]
    fn log_and_plain_envelopes_agree_when_finite() {
        let g: Grid2D<f64> = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let p = simple_params(10.0); // large diffusivity keeps constants tame
        let bc = BoundaryData::zero();
        let c0 = vec![
            CellField::constant(&g, FieldRole::Concentration, 1.0),
            CellField::constant(&g, FieldRole::Concentration, 1.0),
        ];
        let env = gronwall_envelopes(&g, &p, &bc, &ReactionSpec::None, &c0, 1.0).unwrap();
        assert!(env.energy.is_finite(), "energy envelope {:e}", env.energy);
        assert!((env.entropy.ln() - env.ln_entropy).abs() < 1e-12);
        assert!((env.energy.ln() - env.ln_energy).abs() < 1e-9 * env.ln_energy.abs());

        // stiff data blows the plain value up to infinity while the log
        // form stays usable
        let p_stiff = simple_params(0.01);
        let mut bc_stiff = BoundaryData::zero();
        bc_stiff.sigma_bound = 2.0;
        let env = gronwall_envelopes(&g, &p_stiff, &bc_stiff, &ReactionSpec::None, &c0, 5.0)
            .unwrap();
        assert!(env.energy.is_infinite());
        assert!(env.ln_entropy.is_finite());
    }

    #[test]
    fn norms_match_hand_values() {
        let g: Grid2D<f64> = Grid2D::new(2, 2, 1.0, 1.0).unwrap();
        let f = CellField::new(FieldRole::Auxiliary, vec![1.0, 1.0, 1.0, 1.0]);
        assert!((cell_l2(&g, &f) - 1.0).abs() < 1e-15);
        assert_eq!(f.max_abs(), 1.0);
        assert_eq!(grad_l2(&g, &f), 0.0);
        assert!((species_mass(&g, 0.5, &f) - 0.5).abs() < 1e-15);

        // gradient of c = x on a 2x2 grid: one unit x-difference per row
        let linear = CellField::from_fn(&g, FieldRole::Auxiliary, |x, _| x);
        let expect = (2.0_f64 * 1.0 * 0.5 * 0.5).sqrt(); // 2 faces, g = 1, w = h*len = 0.25
        assert!((grad_l2(&g, &linear) - expect).abs() < 1e-14);
    }
}
