//! Physical model data: constants, species, reaction kinetics, boundary
//! data, and the validation that turns the solver's standing assumptions
//! into explicit pass/fail checks.
//!
//! Conventions. The free charge density is
//! `rho_f = charge_prefactor * theta * sum_l z_l c_l`; the prefactor
//! defaults to the elementary charge but is an explicit parameter so the
//! dimensionless convention `rho_f = sum_l z_l c_l` is reachable. The drift
//! velocity of species `l` is `alpha_l * E` with
//! `alpha_l = e * z_l / (permittivity * thermal_energy)`.

use crate::grid::{CellField, FaceField, FieldRole, Grid2D, Side};
use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model input failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("expected {expected} species, got {got} ({what})")]
    SpeciesMismatch { expected: usize, got: usize, what: &'static str },
    #[error("tabulated profile has {got} values, expected {expected} ({what})")]
    TabulatedLength { expected: usize, got: usize, what: &'static str },
    #[error("negative concentration in species {species} at cell {cell}: {value}")]
    NegativeConcentration { species: usize, cell: usize, value: f64 },
}

/// Per-species constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesParams<S = f64> {
    pub name: String,
    /// Signed charge number z_l.
    pub valency: i32,
    /// Diagonal diffusivity tensor (xx, yy).
    pub diffusivity: (S, S),
}

/// Global constants plus the species table.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S = f64> {
    /// Porosity theta.
    pub porosity: S,
    /// Fluid viscosity mu.
    pub viscosity: S,
    /// Dielectric permittivity eps.
    pub permittivity: S,
    /// Elementary charge e.
    pub elementary_charge: S,
    /// Boltzmann constant times temperature.
    pub thermal_energy: S,
    /// Factor in `rho_f = charge_prefactor * theta * sum_l z_l c_l`.
    pub charge_prefactor: S,
    /// Diagonal permeability tensor (xx, yy).
    pub permeability: (S, S),
    pub species: Vec<SpeciesParams<S>>,
}

impl<S: Scalar> ModelParams<S> {
    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// Drift coefficient `alpha_l = e z_l / (eps kT)`.
    pub fn drift_coefficient(&self, l: usize) -> S {
        self.elementary_charge * S::cast(self.species[l].valency as f64)
            / (self.permittivity * self.thermal_energy)
    }

    pub fn max_abs_valency(&self) -> S {
        self.species
            .iter()
            .map(|s| S::cast(s.valency.unsigned_abs() as f64))
            .fold(S::zero(), S::max)
    }

    /// Smallest diagonal diffusivity entry over species and axes (the
    /// ellipticity constant of the diffusion operator).
    pub fn min_diffusivity(&self) -> S {
        self.species
            .iter()
            .map(|s| s.diffusivity.0.min(s.diffusivity.1))
            .fold(S::infinity(), S::min)
    }

    /// Free charge density `rho_f = prefactor * theta * sum_l z_l c_l`.
    pub fn charge_density(&self, concentrations: &[CellField<S>]) -> CellField<S> {
        assert_eq!(concentrations.len(), self.n_species(), "species count");
        let n = concentrations[0].len();
        let scale = self.charge_prefactor * self.porosity;
        let mut rho = vec![S::zero(); n];
        for (spec, c) in self.species.iter().zip(concentrations) {
            debug_assert_eq!(c.len(), n);
            let z = S::cast(spec.valency as f64);
            for (r, &ci) in rho.iter_mut().zip(c.iter()) {
                *r += z * ci;
            }
        }
        for r in &mut rho {
            *r *= scale;
        }
        CellField::new(FieldRole::Charge, rho)
    }
}

/// One irreversible mass-action reaction with integer stoichiometry,
/// rate `k * prod_m c_m^{reactants[m]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassActionReaction<S = f64> {
    pub rate: S,
    pub reactants: Vec<u32>,
    pub products: Vec<u32>,
}

/// Tabulated reaction rates on a tensor-product grid of concentrations,
/// evaluated by clamped multilinear interpolation (hence globally
/// Lipschitz), with declared per-species Lipschitz constants.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomReaction<S = f64> {
    /// Breakpoints per species, ascending, starting at 0.
    pub axes: Vec<Vec<S>>,
    /// values[l] is a row-major tensor over the axes grid: rate of species l.
    pub values: Vec<Vec<S>>,
    /// Declared Lipschitz constant per species.
    pub lipschitz: Vec<S>,
}

impl<S: Scalar> CustomReaction<S> {
    fn table_len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    /// Clamped multilinear interpolation of species `l`'s rate at `c`.
    pub fn interpolate(&self, l: usize, c: &[S]) -> S {
        let dims = self.axes.len();
        debug_assert_eq!(c.len(), dims);
        // per-axis bracket (i, weight toward i+1)
        let mut lo_idx = vec![0usize; dims];
        let mut w = vec![S::zero(); dims];
        for (d, axis) in self.axes.iter().enumerate() {
            let x = c[d];
            if x <= axis[0] {
                lo_idx[d] = 0;
                w[d] = S::zero();
            } else if x >= *axis.last().unwrap() {
                lo_idx[d] = axis.len().saturating_sub(2);
                w[d] = if axis.len() > 1 { S::one() } else { S::zero() };
            } else {
                let k = axis.partition_point(|&a| a <= x) - 1;
                lo_idx[d] = k;
                w[d] = (x - axis[k]) / (axis[k + 1] - axis[k]);
            }
        }
        let strides: Vec<usize> = {
            let mut s = vec![1usize; dims];
            for d in (0..dims.saturating_sub(1)).rev() {
                s[d] = s[d + 1] * self.axes[d + 1].len();
            }
            s
        };
        let table = &self.values[l];
        let mut acc = S::zero();
        for corner in 0..(1usize << dims) {
            let mut weight = S::one();
            let mut idx = 0usize;
            for d in 0..dims {
                let hi = (corner >> d) & 1 == 1;
                let axis_len = self.axes[d].len();
                let i = if hi { (lo_idx[d] + 1).min(axis_len - 1) } else { lo_idx[d] };
                weight *= if hi { w[d] } else { S::one() - w[d] };
                idx += i * strides[d];
            }
            acc += weight * table[idx];
        }
        acc
    }
}

/// Reaction kinetics. All kinds satisfy R(0) = 0 and quasi-positivity
/// (R_l >= 0 whenever c_l = 0 and the other entries are non-negative);
/// `validate` enforces this structurally or by sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum ReactionSpec<S = f64> {
    None,
    /// R_l = -rates[l] * c_l, rates >= 0.
    LinearDecay { rates: Vec<S> },
    /// Sum of irreversible mass-action channels. `concentration_cap` is the
    /// box on which the stored Lipschitz constants are valid (polynomial
    /// rates are only locally Lipschitz).
    MassAction { reactions: Vec<MassActionReaction<S>>, concentration_cap: S },
    Custom(CustomReaction<S>),
}

impl<S: Scalar> ReactionSpec<S> {
    /// Split form `R_l(c) = gain_l(c) - loss_coeff_l(c) * c_l` with
    /// `gain, loss_coeff >= 0` for non-negative `c`. The transport step
    /// treats the loss implicitly (diagonal shift), which preserves
    /// non-negativity; at a fixed point the split is exactly R.
    pub fn split_rates(&self, c: &[S], gains: &mut [S], loss_coeffs: &mut [S]) {
        gains.iter_mut().for_each(|g| *g = S::zero());
        loss_coeffs.iter_mut().for_each(|g| *g = S::zero());
        match self {
            ReactionSpec::None => {}
            ReactionSpec::LinearDecay { rates } => {
                loss_coeffs.copy_from_slice(rates);
            }
            ReactionSpec::MassAction { reactions, .. } => {
                for r in reactions {
                    let mut rate = r.rate;
                    for (m, &nu) in r.reactants.iter().enumerate() {
                        rate *= c[m].max(S::zero()).powi(nu as i32);
                    }
                    for (l, (&nu_p, &nu_r)) in r.products.iter().zip(&r.reactants).enumerate() {
                        if nu_p > 0 {
                            gains[l] += S::cast(nu_p as f64) * rate;
                        }
                        if nu_r > 0 {
                            // rate / c_l without the division: drop one factor of c_l
                            let mut coeff = r.rate * S::cast(nu_r as f64);
                            for (m, &nu) in r.reactants.iter().enumerate() {
                                let p = if m == l { nu - 1 } else { nu };
                                coeff *= c[m].max(S::zero()).powi(p as i32);
                            }
                            loss_coeffs[l] += coeff;
                        }
                    }
                }
            }
            ReactionSpec::Custom(custom) => {
                // generic Patankar split of a black-box rate
                let floor = S::cast(1e-300);
                for l in 0..gains.len() {
                    let r = custom.interpolate(l, c);
                    if r >= S::zero() {
                        gains[l] = r;
                    } else if c[l] > floor {
                        loss_coeffs[l] = -r / c[l];
                    }
                    // c_l ~ 0 with r < 0 contradicts quasi-positivity up to
                    // interpolation error; dropping the term clips it to 0.
                }
            }
        }
    }

    /// Pointwise rates R(c); by construction identical to
    /// `gains - loss_coeffs * c` from `split_rates`.
    pub fn rates(&self, c: &[S], out: &mut [S]) {
        let n = c.len();
        let mut gains = vec![S::zero(); n];
        let mut loss = vec![S::zero(); n];
        self.split_rates(c, &mut gains, &mut loss);
        for l in 0..n {
            out[l] = gains[l] - loss[l] * c[l];
        }
    }

    /// Lipschitz constant per species (C_R,l): exact for linear decay, a box
    /// bound for mass action, the declared constants for custom tables.
    pub fn lipschitz_constants(&self, n_species: usize) -> Vec<S> {
        match self {
            ReactionSpec::None => vec![S::zero(); n_species],
            ReactionSpec::LinearDecay { rates } => rates.clone(),
            ReactionSpec::MassAction { reactions, concentration_cap } => {
                // |dR_l/dc_m| <= k |nu_p,l - nu_r,l| nu_r,m cap^(order-1);
                // sum over m gives a bound on the l-th row of the Jacobian.
                let mut out = vec![S::zero(); n_species];
                for r in reactions {
                    let order: u32 = r.reactants.iter().sum();
                    let cap_pow = concentration_cap.max(S::one()).powi(order.saturating_sub(1) as i32);
                    for l in 0..n_species {
                        let delta = S::cast((i64::from(r.products[l]) - i64::from(r.reactants[l])).abs() as f64);
                        let nu_sum = S::cast(order as f64);
                        out[l] += r.rate * delta * nu_sum * cap_pow;
                    }
                }
                out
            }
            ReactionSpec::Custom(c) => c.lipschitz.clone(),
        }
    }

    pub fn max_lipschitz(&self, n_species: usize) -> S {
        self.lipschitz_constants(n_species)
            .into_iter()
            .fold(S::zero(), S::max)
    }

    pub fn is_none(&self) -> bool {
        matches!(self, ReactionSpec::None)
    }
}

/// Evaluate reaction rates cell by cell over whole fields.
pub fn evaluate_reactions<S: Scalar>(
    spec: &ReactionSpec<S>,
    concentrations: &[CellField<S>],
) -> Vec<CellField<S>> {
    let l_count = concentrations.len();
    let n = concentrations[0].len();
    let mut point = vec![S::zero(); l_count];
    let mut rate = vec![S::zero(); l_count];
    let mut out = vec![vec![S::zero(); n]; l_count];
    for cell in 0..n {
        for (l, c) in concentrations.iter().enumerate() {
            point[l] = c[cell];
        }
        spec.rates(&point, &mut rate);
        for l in 0..l_count {
            out[l][cell] = rate[l];
        }
    }
    out.into_iter()
        .map(|v| CellField::new(FieldRole::Auxiliary, v))
        .collect()
}

/// Scalar profile over the domain; used for initial data, background charge,
/// and boundary values. Analytic kinds are evaluated at cell centers or face
/// midpoints; `Tabulated` carries one value per cell (row-major) or per
/// boundary face (boundary enumeration order). Profiles are constant in
/// time; the time argument in the evaluation APIs exists so time-dependent
/// data stays expressible at the solver interfaces.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile<S = f64> {
    Constant { value: S },
    GaussianBump { base: S, amplitude: S, center: (S, S), width: S },
    Checkerboard { low: S, high: S, tiles: (usize, usize) },
    Cosine { base: S, amplitude: S, modes: (usize, usize) },
    Tabulated { values: Vec<S> },
}

impl<S: Scalar> Profile<S> {
    fn eval_xy(&self, grid: &Grid2D<S>, x: S, y: S) -> S {
        match self {
            Profile::Constant { value } => *value,
            Profile::GaussianBump { base, amplitude, center, width } => {
                let dx = x - center.0;
                let dy = y - center.1;
                let r2 = dx * dx + dy * dy;
                *base + *amplitude * (-r2 / (S::two() * *width * *width)).exp()
            }
            Profile::Checkerboard { low, high, tiles } => {
                let ix = (x / grid.lx * S::cast(tiles.0 as f64))
                    .floor()
                    .to_f64_lossy() as i64;
                let iy = (y / grid.ly * S::cast(tiles.1 as f64))
                    .floor()
                    .to_f64_lossy() as i64;
                if (ix + iy) % 2 == 0 {
                    *low
                } else {
                    *high
                }
            }
            Profile::Cosine { base, amplitude, modes } => {
                let px = S::PI() * S::cast(modes.0 as f64) * x / grid.lx;
                let py = S::PI() * S::cast(modes.1 as f64) * y / grid.ly;
                *base + *amplitude * px.cos() * py.cos()
            }
            Profile::Tabulated { .. } => unreachable!("tabulated handled by callers"),
        }
    }

    /// Sample onto cell centers.
    pub fn cell_field(
        &self,
        grid: &Grid2D<S>,
        role: FieldRole,
        _t: S,
    ) -> Result<CellField<S>, ModelError> {
        if let Profile::Tabulated { values } = self {
            if values.len() != grid.n_cells() {
                return Err(ModelError::TabulatedLength {
                    expected: grid.n_cells(),
                    got: values.len(),
                    what: "cell profile",
                });
            }
            return Ok(CellField::new(role, values.clone()));
        }
        Ok(CellField::from_fn(grid, role, |x, y| self.eval_xy(grid, x, y)))
    }
}

/// Boundary profile: a domain profile restricted to the boundary, or one
/// constant per side.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryProfile<S = f64> {
    Uniform(Profile<S>),
    PerSide { west: S, east: S, south: S, north: S },
}

impl<S: Scalar> BoundaryProfile<S> {
    pub fn constant(value: S) -> Self {
        BoundaryProfile::Uniform(Profile::Constant { value })
    }

    /// Value on one boundary face (outward normal component), `face` being a
    /// boundary face index of `grid` and `ordinal` its position in boundary
    /// enumeration order (used by tabulated profiles).
    pub fn eval_face(
        &self,
        grid: &Grid2D<S>,
        face: usize,
        ordinal: usize,
        side: Side,
        _t: S,
    ) -> Result<S, ModelError> {
        match self {
            BoundaryProfile::Uniform(Profile::Tabulated { values }) => {
                if values.len() != grid.n_boundary_faces() {
                    return Err(ModelError::TabulatedLength {
                        expected: grid.n_boundary_faces(),
                        got: values.len(),
                        what: "boundary profile",
                    });
                }
                Ok(values[ordinal])
            }
            BoundaryProfile::Uniform(p) => {
                let (x, y) = grid.face_midpoint(face);
                Ok(p.eval_xy(grid, x, y))
            }
            BoundaryProfile::PerSide { west, east, south, north } => Ok(match side {
                Side::West => *west,
                Side::East => *east,
                Side::South => *south,
                Side::North => *north,
            }),
        }
    }

    /// Fill the boundary entries of a face field; interior entries are left
    /// untouched.
    pub fn fill_boundary(
        &self,
        grid: &Grid2D<S>,
        t: S,
        out: &mut FaceField<S>,
    ) -> Result<(), ModelError> {
        for (ordinal, face) in grid.boundary_faces().enumerate() {
            if let crate::grid::FaceNeighbors::Boundary { side, .. } = grid.face_neighbors(face) {
                out[face] = self.eval_face(grid, face, ordinal, side, t)?;
            }
        }
        Ok(())
    }
}

/// Boundary and background data: surface charge `sigma` (E.nu), fluid flux
/// `f` (q.nu), and background charge `rho_b`, with declared sup-norm bounds
/// that the Gronwall envelopes consume.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData<S = f64> {
    pub sigma: BoundaryProfile<S>,
    pub fluid_flux: BoundaryProfile<S>,
    pub background_charge: Profile<S>,
    pub sigma_bound: S,
    pub fluid_flux_bound: S,
    pub background_bound: S,
}

impl<S: Scalar> BoundaryData<S> {
    /// All-zero data with zero bounds.
    pub fn zero() -> Self {
        Self {
            sigma: BoundaryProfile::constant(S::zero()),
            fluid_flux: BoundaryProfile::constant(S::zero()),
            background_charge: Profile::Constant { value: S::zero() },
            sigma_bound: S::zero(),
            fluid_flux_bound: S::zero(),
            background_bound: S::zero(),
        }
    }

    /// Discrete boundary integral `sum f |face|`, which must vanish for the
    /// incompressibility constraint to be solvable.
    pub fn fluid_flux_imbalance(&self, grid: &Grid2D<S>, t: S) -> Result<S, ModelError> {
        let mut sum = S::zero();
        for (ordinal, face) in grid.boundary_faces().enumerate() {
            if let crate::grid::FaceNeighbors::Boundary { side, .. } = grid.face_neighbors(face) {
                sum += self.fluid_flux.eval_face(grid, face, ordinal, side, t)? * grid.face_length(face);
            }
        }
        Ok(sum)
    }
}

/// One validated assumption.
#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub id: &'static str,
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail record for every standing assumption of the scheme.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    fn push(&mut self, id: &'static str, description: &str, passed: bool, detail: String) {
        self.checks.push(AssumptionCheck {
            id,
            description: description.to_string(),
            passed,
            detail,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Convert into a hard error when anything failed.
    pub fn into_result(self) -> Result<(), ModelError> {
        if self.all_passed() {
            Ok(())
        } else {
            Err(ModelError::Invalid(self))
        }
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "  [{}] {:5} {} ({})",
                c.id,
                if c.passed { "pass" } else { "FAIL" },
                c.description,
                c.detail
            )?;
        }
        Ok(())
    }
}

fn all_positive_finite<S: Scalar>(vals: &[(S, &str)]) -> (bool, String) {
    let mut bad = Vec::new();
    for (v, name) in vals {
        if !(*v > S::zero()) || !v.is_finite() {
            bad.push(format!("{name}={v}"));
        }
    }
    (bad.is_empty(), if bad.is_empty() { "all positive".into() } else { bad.join(", ") })
}

/// Check every standing assumption against the given inputs. Sampled checks
/// (profile bounds, custom-reaction quasi-positivity) are evaluated at t = 0
/// on the given grid; shipped profiles are constant in time.
pub fn validate<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    reactions: &ReactionSpec<S>,
    bc: &BoundaryData<S>,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let t0 = S::zero();

    report.push(
        "domain",
        "rectangular domain with a uniform grid",
        true,
        format!("{}x{} cells on {}x{}", grid.nx, grid.ny, grid.lx, grid.ly),
    );

    // species table sanity (names feed output schemas)
    let names_ok = !params.species.is_empty()
        && params.species.iter().all(|s| {
            !s.name.is_empty()
                && s.name
                    .chars()
                    .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-')
        })
        && {
            let mut names: Vec<&str> = params.species.iter().map(|s| s.name.as_str()).collect();
            names.sort_unstable();
            names.windows(2).all(|w| w[0] != w[1])
        };
    report.push(
        "species",
        "at least one species; names unique and output-safe",
        names_ok,
        format!("{} species", params.n_species()),
    );

    // ellipticity of the diagonal tensors
    let mut tensors = vec![
        (params.permeability.0, "K_xx".to_string()),
        (params.permeability.1, "K_yy".to_string()),
    ];
    for s in &params.species {
        tensors.push((s.diffusivity.0, format!("D_xx[{}]", s.name)));
        tensors.push((s.diffusivity.1, format!("D_yy[{}]", s.name)));
    }
    let named: Vec<(S, &str)> = tensors.iter().map(|(v, n)| (*v, n.as_str())).collect();
    let (ok, detail) = all_positive_finite(&named);
    report.push("ellipticity", "permeability and diffusivities positive", ok, detail);

    let (ok, detail) = all_positive_finite(&[
        (params.porosity, "porosity"),
        (params.viscosity, "viscosity"),
        (params.permittivity, "permittivity"),
        (params.elementary_charge, "elementary_charge"),
        (params.thermal_energy, "thermal_energy"),
        (params.charge_prefactor, "charge_prefactor"),
    ]);
    report.push("constants", "physical constants positive and finite", ok, detail);

    validate_reactions(params, reactions, &mut report);
    validate_boundary(grid, bc, t0, &mut report);

    report
}

fn validate_reactions<S: Scalar>(
    params: &ModelParams<S>,
    reactions: &ReactionSpec<S>,
    report: &mut ValidationReport,
) {
    let n_species = params.n_species();
    let (structure_ok, detail) = match reactions {
        ReactionSpec::None => (true, "no reactions".to_string()),
        ReactionSpec::LinearDecay { rates } => {
            if rates.len() != n_species {
                (false, format!("{} rates for {} species", rates.len(), n_species))
            } else if let Some(bad) = rates.iter().find(|&&r| !(r >= S::zero()) || !r.is_finite()) {
                (false, format!("negative or non-finite decay rate {bad}"))
            } else {
                (true, "linear decay, rates >= 0".to_string())
            }
        }
        ReactionSpec::MassAction { reactions, concentration_cap } => {
            let mut problem = None;
            for (i, r) in reactions.iter().enumerate() {
                if r.reactants.len() != n_species || r.products.len() != n_species {
                    problem = Some(format!("reaction {i}: stoichiometry length mismatch"));
                    break;
                }
                if !(r.rate >= S::zero()) || !r.rate.is_finite() {
                    problem = Some(format!("reaction {i}: bad rate {}", r.rate));
                    break;
                }
                if r.reactants.iter().sum::<u32>() == 0 {
                    // a source reaction would violate R(0) = 0
                    problem = Some(format!("reaction {i}: no reactants"));
                    break;
                }
            }
            if !(*concentration_cap > S::zero()) {
                problem = Some("concentration cap must be positive".into());
            }
            match problem {
                Some(p) => (false, p),
                None => (true, format!("{} mass-action channels", reactions.len())),
            }
        }
        ReactionSpec::Custom(c) => validate_custom_reaction(n_species, c),
    };
    report.push(
        "reactions",
        "R(0) = 0, quasi-positivity, finite Lipschitz constants",
        structure_ok,
        detail,
    );

    // reactions must not create or destroy net charge: the Gauss data
    // compatibility ties the charge integral to fixed boundary data, so a
    // source of charge makes the system unsolvable at a later time
    let (charge_ok, detail) = match reactions {
        ReactionSpec::None => (true, "no reactions".to_string()),
        ReactionSpec::LinearDecay { rates } => {
            let offender = params
                .species
                .iter()
                .zip(rates)
                .find(|(sp, &r)| sp.valency != 0 && r > S::zero());
            match offender {
                Some((sp, r)) => (
                    false,
                    format!("decay of charged species {} (z = {}, rate {r}) removes charge", sp.name, sp.valency),
                ),
                None => (true, "decay acts on neutral species only".to_string()),
            }
        }
        ReactionSpec::MassAction { reactions, .. } => {
            let mut problem = None;
            for (i, r) in reactions.iter().enumerate() {
                if r.reactants.len() != n_species || r.products.len() != n_species {
                    continue; // already failed the structure check
                }
                let net: i64 = params
                    .species
                    .iter()
                    .enumerate()
                    .map(|(l, sp)| {
                        (r.products[l] as i64 - r.reactants[l] as i64) * sp.valency as i64
                    })
                    .sum();
                if net != 0 {
                    problem = Some(format!("channel {i} changes net charge by {net}"));
                    break;
                }
            }
            match problem {
                Some(p) => (false, p),
                None => (true, "every channel conserves charge".to_string()),
            }
        }
        ReactionSpec::Custom(_) => (
            true,
            "tabulated rates: charge balance not statically checkable, guarded at run time".to_string(),
        ),
    };
    report.push("reaction_charge", "reactions conserve net charge", charge_ok, detail);
}

fn validate_custom_reaction<S: Scalar>(
    n_species: usize,
    c: &CustomReaction<S>,
) -> (bool, String) {
    if c.axes.len() != n_species || c.values.len() != n_species || c.lipschitz.len() != n_species {
        return (false, "axes/values/lipschitz must have one entry per species".into());
    }
    for (d, axis) in c.axes.iter().enumerate() {
        if axis.is_empty() || axis[0] != S::zero() {
            return (false, format!("axis {d} must start at 0"));
        }
        if axis.windows(2).any(|w| !(w[1] > w[0])) {
            return (false, format!("axis {d} not strictly ascending"));
        }
    }
    let expect = c.table_len();
    if c.values.iter().any(|v| v.len() != expect) {
        return (false, format!("tables must have {expect} entries"));
    }
    if c.lipschitz.iter().any(|l| !(*l >= S::zero()) || !l.is_finite()) {
        return (false, "Lipschitz constants must be finite and >= 0".into());
    }
    // R(0) = 0 exactly at the origin node
    let zero = vec![S::zero(); n_species];
    for l in 0..n_species {
        let r0 = c.interpolate(l, &zero);
        if r0.abs() > S::cast(1e-12) {
            return (false, format!("R_{l}(0) = {r0} != 0"));
        }
    }
    // quasi-positivity sampled on table nodes restricted to {c_l = 0}
    let mut point = vec![S::zero(); n_species];
    for l in 0..n_species {
        let mut counters = vec![0usize; n_species];
        loop {
            for d in 0..n_species {
                point[d] = if d == l { S::zero() } else { c.axes[d][counters[d]] };
            }
            let r = c.interpolate(l, &point);
            if r < -S::cast(1e-12) {
                return (false, format!("R_{l} = {r} < 0 with c_{l} = 0"));
            }
            // odometer over the other axes
            let mut d = 0;
            loop {
                if d == n_species {
                    break;
                }
                if d == l {
                    d += 1;
                    continue;
                }
                counters[d] += 1;
                if counters[d] < c.axes[d].len() {
                    break;
                }
                counters[d] = 0;
                d += 1;
            }
            if d == n_species {
                break;
            }
        }
    }
    (true, "tabulated rates pass origin and quasi-positivity sampling".into())
}

fn validate_boundary<S: Scalar>(
    grid: &Grid2D<S>,
    bc: &BoundaryData<S>,
    t: S,
    report: &mut ValidationReport,
) {
    // declared bounds must be finite and dominate the sampled values
    let check_profile = |profile: &BoundaryProfile<S>, bound: S, name: &str| -> (bool, String) {
        if !bound.is_finite() || bound < S::zero() {
            return (false, format!("{name}: declared bound {bound} invalid"));
        }
        let mut max_abs = S::zero();
        for (ordinal, face) in grid.boundary_faces().enumerate() {
            if let crate::grid::FaceNeighbors::Boundary { side, .. } = grid.face_neighbors(face) {
                match profile.eval_face(grid, face, ordinal, side, t) {
                    Ok(v) => max_abs = max_abs.max(v.abs()),
                    Err(e) => return (false, format!("{name}: {e}")),
                }
            }
        }
        let slack = S::cast(1e-12) * bound.max(S::one());
        (
            max_abs <= bound + slack,
            format!("{name}: sup sampled {max_abs}, declared {bound}"),
        )
    };

    let (ok_s, det_s) = check_profile(&bc.sigma, bc.sigma_bound, "sigma");
    let (ok_f, det_f) = check_profile(&bc.fluid_flux, bc.fluid_flux_bound, "fluid_flux");
    let (ok_b, det_b) = match bc.background_charge.cell_field(grid, FieldRole::Charge, t) {
        Ok(rho_b) => {
            let m = rho_b.max_abs();
            let bound = bc.background_bound;
            let bound_ok = bound.is_finite()
                && bound >= S::zero()
                && m <= bound + S::cast(1e-12) * bound.max(S::one());
            (bound_ok, format!("background: sup sampled {m}, declared {bound}"))
        }
        Err(e) => (false, format!("background: {e}")),
    };
    report.push(
        "bounds",
        "boundary and background data within declared sup bounds",
        ok_s && ok_f && ok_b,
        format!("{det_s}; {det_f}; {det_b}"),
    );

    // solvability of the incompressible flow problem
    let (ok, detail) = match bc.fluid_flux_imbalance(grid, t) {
        Ok(sum) => {
            let perimeter = S::two() * (grid.lx + grid.ly);
            let tol = S::cast(1e-10) * perimeter * (S::one() + bc.fluid_flux_bound);
            (
                sum.abs() <= tol,
                format!("sum f |face| = {sum} (tolerance {tol})"),
            )
        }
        Err(e) => (false, format!("{e}")),
    };
    report.push("flux-balance", "fluid flux integrates to zero over the boundary", ok, detail);
}
