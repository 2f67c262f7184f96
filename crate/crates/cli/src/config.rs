//! Scenario files: a structured-text description of one simulation, parsed
//! strictly (unknown keys are hard errors) and converted into the solver's
//! domain types.
//!
//! Units follow the model's convention: lengths in the domain's unit, time
//! in the time unit implied by the diffusivities (length^2 / time), charge
//! and energy in the units of `elementary_charge` and `thermal_energy`.
//! All profile kinds are closed-form except `tabulated`, which lists one
//! value per cell (row-major, south row first) or one per boundary face
//! (boundary enumeration order) depending on where it is used.

use dpnp_core::coupling::{FixedPointConfig, ForceModel};
use dpnp_core::grid::{CellField, FieldRole, Grid2D};
use dpnp_core::model::{
    BoundaryData, BoundaryProfile, CustomReaction, MassActionReaction, ModelParams, Profile,
    ReactionSpec, SpeciesParams,
};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Anything wrong with a scenario file, before the solver ever runs.
#[derive(Debug)]
pub enum ConfigError {
    /// Parse failure; the message carries the offending line and key.
    Parse(String),
    /// Structurally valid but semantically inconsistent.
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceModelConfig {
    Coulomb,
    Zero,
}

fn default_force_model() -> ForceModelConfig {
    ForceModelConfig::Coulomb
}

fn default_charge_prefactor() -> f64 {
    1.0
}

/// Medium and physical constants shared by all species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    pub porosity: f64,
    pub viscosity: f64,
    pub permittivity: f64,
    pub elementary_charge: f64,
    pub thermal_energy: f64,
    #[serde(default = "default_charge_prefactor")]
    pub charge_prefactor: f64,
    /// Diagonal permeability tensor [Kxx, Kyy].
    pub permeability: [f64; 2],
    #[serde(default = "default_force_model")]
    pub force_model: ForceModelConfig,
}

/// Closed-form or tabulated scalar field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Constant { value: f64 },
    GaussianBump { base: f64, amplitude: f64, center: [f64; 2], width: f64 },
    Checkerboard { low: f64, high: f64, tiles: [usize; 2] },
    Cosine { base: f64, amplitude: f64, modes: [usize; 2] },
    Tabulated { values: Vec<f64> },
}

impl ProfileConfig {
    fn to_core(&self) -> Profile<f64> {
        match self {
            ProfileConfig::Constant { value } => Profile::Constant { value: *value },
            ProfileConfig::GaussianBump { base, amplitude, center, width } => {
                Profile::GaussianBump {
                    base: *base,
                    amplitude: *amplitude,
                    center: (center[0], center[1]),
                    width: *width,
                }
            }
            ProfileConfig::Checkerboard { low, high, tiles } => Profile::Checkerboard {
                low: *low,
                high: *high,
                tiles: (tiles[0], tiles[1]),
            },
            ProfileConfig::Cosine { base, amplitude, modes } => Profile::Cosine {
                base: *base,
                amplitude: *amplitude,
                modes: (modes[0], modes[1]),
            },
            ProfileConfig::Tabulated { values } => Profile::Tabulated { values: values.clone() },
        }
    }
}

/// Boundary data: any profile kind, or one constant per side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryProfileConfig {
    Constant { value: f64 },
    GaussianBump { base: f64, amplitude: f64, center: [f64; 2], width: f64 },
    Checkerboard { low: f64, high: f64, tiles: [usize; 2] },
    Cosine { base: f64, amplitude: f64, modes: [usize; 2] },
    Tabulated { values: Vec<f64> },
    PerSide { west: f64, east: f64, south: f64, north: f64 },
}

impl BoundaryProfileConfig {
    fn to_core(&self) -> BoundaryProfile<f64> {
        match self {
            BoundaryProfileConfig::PerSide { west, east, south, north } => {
                BoundaryProfile::PerSide {
                    west: *west,
                    east: *east,
                    south: *south,
                    north: *north,
                }
            }
            BoundaryProfileConfig::Constant { value } => {
                BoundaryProfile::Uniform(Profile::Constant { value: *value })
            }
            BoundaryProfileConfig::GaussianBump { base, amplitude, center, width } => {
                BoundaryProfile::Uniform(Profile::GaussianBump {
                    base: *base,
                    amplitude: *amplitude,
                    center: (center[0], center[1]),
                    width: *width,
                })
            }
            BoundaryProfileConfig::Checkerboard { low, high, tiles } => {
                BoundaryProfile::Uniform(Profile::Checkerboard {
                    low: *low,
                    high: *high,
                    tiles: (tiles[0], tiles[1]),
                })
            }
            BoundaryProfileConfig::Cosine { base, amplitude, modes } => {
                BoundaryProfile::Uniform(Profile::Cosine {
                    base: *base,
                    amplitude: *amplitude,
                    modes: (modes[0], modes[1]),
                })
            }
            BoundaryProfileConfig::Tabulated { values } => {
                BoundaryProfile::Uniform(Profile::Tabulated { values: values.clone() })
            }
        }
    }
}

fn zero_profile() -> BoundaryProfileConfig {
    BoundaryProfileConfig::Constant { value: 0.0 }
}

fn zero_cell_profile() -> ProfileConfig {
    ProfileConfig::Constant { value: 0.0 }
}

/// Boundary data plus the sup-norm bounds the a-priori envelopes need.
/// Bounds must dominate the actual data (checked by validation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    /// Sup-norm bounds on the data below; the a-priori envelopes consume
    /// these, so they must dominate the actual profiles.
    pub sigma_bound: f64,
    pub fluid_flux_bound: f64,
    pub background_bound: f64,
    /// Outward normal electric field on the boundary.
    pub sigma: BoundaryProfileConfig,
    /// Outward normal fluid flux on the boundary; must balance globally.
    pub fluid_flux: BoundaryProfileConfig,
    /// Background (fixed) charge density in the cells.
    pub background_charge: ProfileConfig,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            sigma_bound: 0.0,
            fluid_flux_bound: 0.0,
            background_bound: 0.0,
            sigma: zero_profile(),
            fluid_flux: zero_profile(),
            background_charge: zero_cell_profile(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    pub name: String,
    pub valency: i32,
    /// Diagonal diffusivity tensor [Dxx, Dyy].
    pub diffusivity: [f64; 2],
    pub initial: ProfileConfig,
}

/// One irreversible channel `rate * prod_m c_m^{reactants[m]}`;
/// `reactants` and `products` are stoichiometric coefficients, one entry
/// per species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassActionStep {
    pub rate: f64,
    pub reactants: Vec<u32>,
    pub products: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReactionConfig {
    None {},
    LinearDecay { rates: Vec<f64> },
    MassAction { steps: Vec<MassActionStep>, concentration_cap: f64 },
    Custom { axes: Vec<Vec<f64>>, values: Vec<Vec<f64>>, lipschitz: Vec<f64> },
}

impl Default for ReactionConfig {
    fn default() -> Self {
        ReactionConfig::None {}
    }
}

impl ReactionConfig {
    fn to_core(&self) -> ReactionSpec<f64> {
        match self {
            ReactionConfig::None {} => ReactionSpec::None,
            ReactionConfig::LinearDecay { rates } => {
                ReactionSpec::LinearDecay { rates: rates.clone() }
            }
            ReactionConfig::MassAction { steps, concentration_cap } => ReactionSpec::MassAction {
                reactions: steps
                    .iter()
                    .map(|s| MassActionReaction {
                        rate: s.rate,
                        reactants: s.reactants.clone(),
                        products: s.products.clone(),
                    })
                    .collect(),
                concentration_cap: *concentration_cap,
            },
            ReactionConfig::Custom { axes, values, lipschitz } => {
                ReactionSpec::Custom(CustomReaction {
                    axes: axes.clone(),
                    values: values.clone(),
                    lipschitz: lipschitz.clone(),
                })
            }
        }
    }
}

fn default_cg_tol() -> f64 {
    1e-10
}
fn default_max_cg_iters() -> usize {
    20_000
}
fn default_fp_tol() -> f64 {
    1e-8
}
fn default_max_outer_iters() -> usize {
    50
}
fn default_omega() -> f64 {
    1.0
}
fn default_transport_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub cg_tol: f64,
    pub max_cg_iters: usize,
    pub fp_tol: f64,
    pub max_outer_iters: usize,
    pub omega: f64,
    pub transport_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cg_tol: default_cg_tol(),
            max_cg_iters: default_max_cg_iters(),
            fp_tol: default_fp_tol(),
            max_outer_iters: default_max_outer_iters(),
            omega: default_omega(),
            transport_tol: default_transport_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Time-series file name, relative to the output directory.
    pub csv: Option<String>,
    /// Write one VTK snapshot every this many records; 0 disables VTK.
    pub vtk_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { csv: None, vtk_every: 0 }
    }
}

/// One complete scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub medium: MediumConfig,
    pub species: Vec<SpeciesConfig>,
    #[serde(default)]
    pub reactions: ReactionConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Everything the solver needs, converted and sampled.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub grid: Grid2D<f64>,
    pub params: ModelParams<f64>,
    pub reactions: ReactionSpec<f64>,
    pub bc: BoundaryData<f64>,
    pub cfg: FixedPointConfig<f64>,
    pub initial: Vec<CellField<f64>>,
    pub output: OutputConfig,
}

/// Parse a scenario from text; messages carry the line of the offense.
pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

impl ScenarioConfig {
    /// Convert into solver types. Pure translation plus basic shape checks;
    /// semantic admissibility is the model validator's job.
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let grid = Grid2D::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let params = ModelParams {
            porosity: self.medium.porosity,
            viscosity: self.medium.viscosity,
            permittivity: self.medium.permittivity,
            elementary_charge: self.medium.elementary_charge,
            thermal_energy: self.medium.thermal_energy,
            charge_prefactor: self.medium.charge_prefactor,
            permeability: (self.medium.permeability[0], self.medium.permeability[1]),
            species: self
                .species
                .iter()
                .map(|s| SpeciesParams {
                    name: s.name.clone(),
                    valency: s.valency,
                    diffusivity: (s.diffusivity[0], s.diffusivity[1]),
                })
                .collect(),
        };
        let reactions = self.reactions.to_core();
        let bc = BoundaryData {
            sigma: self.boundary.sigma.to_core(),
            fluid_flux: self.boundary.fluid_flux.to_core(),
            background_charge: self.boundary.background_charge.to_core(),
            sigma_bound: self.boundary.sigma_bound,
            fluid_flux_bound: self.boundary.fluid_flux_bound,
            background_bound: self.boundary.background_bound,
        };
        let mut cfg = FixedPointConfig::new(self.time.dt, self.time.t_end);
        cfg.fp_tol = self.solver.fp_tol;
        cfg.max_outer_iters = self.solver.max_outer_iters;
        cfg.omega = self.solver.omega;
        cfg.transport_tol = self.solver.transport_tol;
        cfg.elliptic.rel_tol = self.solver.cg_tol;
        cfg.elliptic.max_iters = self.solver.max_cg_iters;
        cfg.force_model = match self.medium.force_model {
            ForceModelConfig::Coulomb => ForceModel::Coulomb,
            ForceModelConfig::Zero => ForceModel::Zero,
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let initial = self
            .species
            .iter()
            .map(|s| {
                s.initial
                    .to_core()
                    .cell_field(&grid, FieldRole::Concentration, 0.0)
                    .map_err(|e| ConfigError::Invalid(format!("initial data for {}: {e}", s.name)))
            })
            .collect::<Result<Vec<_>, _>>()?;

        Ok(Scenario {
            name: self.name.clone(),
            grid,
            params,
            reactions,
            bc,
            cfg,
            initial,
            output: self.output.clone(),
        })
    }
}

/// The scenarios shipped with the binary, as `(file name, contents)`.
pub fn builtin_scenarios() -> Vec<(&'static str, &'static str)> {
    vec![
        ("equilibrium", include_str!("../configs/equilibrium.toml")),
        ("binary-gaussian", include_str!("../configs/binary-gaussian.toml")),
        ("three-species", include_str!("../configs/three-species.toml")),
        ("charged-walls", include_str!("../configs/charged-walls.toml")),
        ("through-flow", include_str!("../configs/through-flow.toml")),
        ("decay", include_str!("../configs/decay.toml")),
        ("oracle-2x2", include_str!("../configs/oracle-2x2.toml")),
        ("oracle-4x4", include_str!("../configs/oracle-4x4.toml")),
        ("oracle-mass-action", include_str!("../configs/oracle-mass-action.toml")),
    ]
}

/// Look up one shipped scenario by name.
pub fn builtin(name: &str) -> Option<&'static str> {
    builtin_scenarios()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| text)
}
