//! The per-step outer iteration that couples electrostatics, flow, and
//! transport, plus the time loop and the uniqueness probe.
//!
//! One outer sweep is the composition Gauss -> Darcy -> transport: the
//! current concentration iterate fixes the free charge, the charge fixes the
//! electric field, the field and charge fix the body force driving the flow,
//! and both fields enter the transport step, whose output becomes the next
//! iterate. Sweeps repeat until the joint relative L2 change of the
//! concentrations drops below `fp_tol`. The start-of-step concentrations
//! stay the backward-Euler anchor throughout; only the linearization point
//! moves.

use crate::darcy::{electric_body_force, solve_darcy};
use crate::diagnostics::{collect_record, gronwall_envelopes, DiagnosticsRecord};
use crate::elliptic::{EllipticConfig, FieldSolveError};
use crate::grid::{CellField, FaceField, Grid2D};
use crate::model::{BoundaryData, ModelError, ModelParams, ReactionSpec};
use crate::poisson::solve_gauss;
use crate::scalar::Scalar;
use crate::transport::{step_species, TransportError, TransportStepInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error(
        "outer iteration stalled at t = {t:.6e} after {} sweeps (last residual {:.3e})",
        residual_history.len(),
        residual_history.last().copied().unwrap_or(f64::NAN)
    )]
    OuterNonConvergence {
        t: f64,
        residual_history: Vec<f64>,
    },
    #[error("electrostatics failed at t = {t:.6e}, sweep {sweep}: {source}")]
    Gauss {
        t: f64,
        sweep: usize,
        source: FieldSolveError,
    },
    #[error("flow solve failed at t = {t:.6e}, sweep {sweep}: {source}")]
    Darcy {
        t: f64,
        sweep: usize,
        source: FieldSolveError,
    },
    #[error("transport failed at t = {t:.6e}, sweep {sweep}: {source}")]
    Transport {
        t: f64,
        sweep: usize,
        source: TransportError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid coupling config: {0}")]
    InvalidConfig(String),
}

/// How the electric force enters the flow problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForceModel {
    /// Coulomb body force `rho_f E / (mu eps)` on faces.
    #[default]
    Coulomb,
    /// No electric force: flow decouples from electrostatics.
    Zero,
}

/// Outer-iteration and time-stepping controls.
#[derive(Debug, Clone)]
pub struct FixedPointConfig<S = f64> {
    pub max_outer_iters: usize,
    /// Stop when the joint relative L2 change of all species is below this.
    pub fp_tol: S,
    /// Relaxation weight in (0, 1]; 1 is the plain iteration.
    pub omega: S,
    pub dt: S,
    pub t_end: S,
    pub elliptic: EllipticConfig<S>,
    /// Accepted relative residual of each direct transport solve.
    pub transport_tol: S,
    pub force_model: ForceModel,
}

impl<S: Scalar> FixedPointConfig<S> {
    pub fn new(dt: S, t_end: S) -> Self {
        FixedPointConfig {
            max_outer_iters: 50,
            fp_tol: S::cast(1e-8),
            omega: S::one(),
            dt,
            t_end,
            elliptic: EllipticConfig::default(),
            transport_tol: S::cast(1e-10),
            force_model: ForceModel::Coulomb,
        }
    }

    pub fn validate(&self) -> Result<(), CouplingError> {
        let ok = self.omega > S::zero()
            && self.omega <= S::one()
            && self.fp_tol > S::zero()
            && self.dt > S::zero()
            && self.t_end >= self.dt
            && self.max_outer_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(CouplingError::InvalidConfig(format!(
                "need 0 < omega <= 1, fp_tol > 0, 0 < dt <= t_end, \
                 max_outer_iters > 0; got omega = {}, fp_tol = {}, dt = {}, \
                 t_end = {}, max_outer_iters = {}",
                self.omega, self.fp_tol, self.dt, self.t_end, self.max_outer_iters
            )))
        }
    }
}

/// Complete solution snapshot at one time level.
#[derive(Debug, Clone)]
pub struct SystemState<S = f64> {
    pub t: S,
    pub c: Vec<CellField<S>>,
    pub e: FaceField<S>,
    pub q: FaceField<S>,
    pub phi: CellField<S>,
    pub p: CellField<S>,
    /// Cached `charge_density(c)`, kept consistent with `c`.
    pub rho_f: CellField<S>,
}

/// Which sub-solver an outer sweep just invoked; consumed by trace hooks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Gauss,
    Darcy,
    Transport,
}

/// Per-step bookkeeping surfaced to the monitors.
#[derive(Debug, Clone)]
pub struct StepStats {
    pub outer_iters: usize,
    /// Relative L2 change after each sweep.
    pub residual_history: Vec<f64>,
    /// Clamped rounding-level negatives, summed over sweeps.
    pub clamp_events: usize,
    /// Elliptic solves that needed a compatibility repair, summed over sweeps.
    pub compat_repairs: usize,
    /// Smallest concentration seen before clamping, over all sweeps and
    /// species; +inf when no transport solve ran.
    pub min_before_clamp: f64,
}

/// Converged result of one time step.
#[derive(Debug, Clone)]
pub struct StepResult<S = f64> {
    pub state: SystemState<S>,
    pub outer_iters: usize,
    pub stats: StepStats,
}

/// Build a consistent state at time `t` from concentrations alone by
/// solving the two field problems once.
pub fn initialize<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    bc: &BoundaryData<S>,
    c: Vec<CellField<S>>,
    t: S,
    cfg: &FixedPointConfig<S>,
) -> Result<SystemState<S>, CouplingError> {
    let rho_f = params.charge_density(&c);
    let gauss = solve_gauss(grid, params, &rho_f, bc, t, &cfg.elliptic).map_err(|source| {
        CouplingError::Gauss {
            t: t.to_f64_lossy(),
            sweep: 0,
            source,
        }
    })?;
    let force = match cfg.force_model {
        ForceModel::Coulomb => electric_body_force(grid, params, &rho_f, &gauss.e),
        ForceModel::Zero => FaceField::zeros(grid),
    };
    let darcy = solve_darcy(grid, params, &force, bc, t, &cfg.elliptic).map_err(|source| {
        CouplingError::Darcy {
            t: t.to_f64_lossy(),
            sweep: 0,
            source,
        }
    })?;
    Ok(SystemState {
        t,
        c,
        e: gauss.e,
        q: darcy.q,
        phi: gauss.phi,
        p: darcy.p,
        rho_f,
    })
}

/// Joint relative L2 change of all species, with a floored denominator so
/// the all-zero state stays well defined.
fn joint_relative_change<S: Scalar>(
    grid: &Grid2D<S>,
    new: &[CellField<S>],
    old: &[CellField<S>],
) -> S {
    let area = grid.cell_area();
    let mut num = S::zero();
    let mut den = S::zero();
    for (n, o) in new.iter().zip(old) {
        for i in 0..n.len() {
            let d = n[i] - o[i];
            num += d * d;
            den += o[i] * o[i];
        }
    }
    (num * area).sqrt() / (den * area).sqrt().max(S::cast(1e-14))
}

/// Compatibility headroom for the in-step Gauss solves when reactions are
/// active. The production/loss split treats gains explicitly and losses
/// implicitly, so an unconverged sweep carries a charge imbalance of order
/// dt * L * (ion mass) even when every channel conserves charge exactly;
/// the converged step cancels back to rounding. Scaled by the outer
/// tolerance and the reaction Lipschitz bound so genuine data errors still
/// hard-fail. Zero without reactions: the strict limit stays in force.
fn reaction_drift_allowance<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    reactions: &ReactionSpec<S>,
    c: &[CellField<S>],
    dt: S,
    fp_tol: S,
) -> S {
    if reactions.is_none() {
        return S::zero();
    }
    let area = grid.cell_area();
    let mut ion_mass = S::zero();
    for (sp, field) in params.species.iter().zip(c) {
        if sp.valency != 0 {
            let mut total = S::zero();
            for i in 0..field.len() {
                total += field[i];
            }
            ion_mass += total.abs() * area;
        }
    }
    ion_mass *= params.charge_prefactor.abs() * params.porosity;
    let lipschitz = reactions.max_lipschitz(params.n_species());
    (S::cast(10.0) * fp_tol + dt * lipschitz) * params.max_abs_valency() * ion_mass
}

/// One backward-Euler step of size `dt` from `state`, converged by outer
/// sweeps started at iterate `c_init`. Boundary data is evaluated at the
/// new time level. `trace` sees every sub-solver call in order.
#[allow(clippy::too_many_arguments)]
fn outer_iteration<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    bc: &BoundaryData<S>,
    reactions: &ReactionSpec<S>,
    state: &SystemState<S>,
    c_init: Vec<CellField<S>>,
    dt: S,
    cfg: &FixedPointConfig<S>,
    trace: &mut dyn FnMut(usize, Stage),
) -> Result<StepResult<S>, CouplingError> {
    cfg.validate()?;
    let t_new = state.t + dt;
    let tf = t_new.to_f64_lossy();
    let c_old = &state.c;
    let mut c_k = c_init;
    let mut residual_history = Vec::new();
    let mut clamp_events = 0usize;
    let mut compat_repairs = 0usize;
    let mut min_before_clamp = f64::INFINITY;
    let mut converged = false;
    let mut sweeps = 0usize;

    // reacting sweeps may carry a transient split-induced charge imbalance;
    // Darcy solves and the final refresh keep the strict limit
    let mut gauss_elliptic = cfg.elliptic;
    gauss_elliptic.drift_allowance +=
        reaction_drift_allowance(grid, params, reactions, &state.c, dt, cfg.fp_tol);

    for sweep in 1..=cfg.max_outer_iters {
        sweeps = sweep;
        let rho_k = params.charge_density(&c_k);

        trace(sweep, Stage::Gauss);
        let gauss = solve_gauss(grid, params, &rho_k, bc, t_new, &gauss_elliptic)
            .map_err(|source| CouplingError::Gauss { t: tf, sweep, source })?;
        compat_repairs += gauss.compat_repaired as usize;

        trace(sweep, Stage::Darcy);
        let force = match cfg.force_model {
            ForceModel::Coulomb => electric_body_force(grid, params, &rho_k, &gauss.e),
            ForceModel::Zero => FaceField::zeros(grid),
        };
        let darcy = solve_darcy(grid, params, &force, bc, t_new, &cfg.elliptic)
            .map_err(|source| CouplingError::Darcy { t: tf, sweep, source })?;
        compat_repairs += darcy.compat_repaired as usize;

        trace(sweep, Stage::Transport);
        let input = TransportStepInput {
            c_old,
            c_frozen: &c_k,
            e: &gauss.e,
            q: &darcy.q,
            dt,
            t: t_new,
        };
        let (solved, tstats) =
            step_species(grid, params, &input, reactions, bc, cfg.transport_tol)
                .map_err(|source| CouplingError::Transport { t: tf, sweep, source })?;
        clamp_events += tstats.clamp_events;
        min_before_clamp = min_before_clamp.min(tstats.min_before_clamp.to_f64_lossy());

        // relaxed update; a convex combination of non-negative fields
        let c_next: Vec<CellField<S>> = if cfg.omega == S::one() {
            solved
        } else {
            solved
                .into_iter()
                .zip(&c_k)
                .map(|(mut s, prev)| {
                    for i in 0..s.len() {
                        s[i] = cfg.omega * s[i] + (S::one() - cfg.omega) * prev[i];
                    }
                    s
                })
                .collect()
        };

        let residual = joint_relative_change(grid, &c_next, &c_k);
        residual_history.push(residual.to_f64_lossy());
        c_k = c_next;
        if residual <= cfg.fp_tol {
            converged = true;
            break;
        }
    }

    if !converged {
        return Err(CouplingError::OuterNonConvergence {
            t: tf,
            residual_history,
        });
    }

    // refresh the field cache from the converged concentrations so the
    // stored state is self-consistent (not traced: bookkeeping, not a sweep)
    let rho_f = params.charge_density(&c_k);
    let gauss = solve_gauss(grid, params, &rho_f, bc, t_new, &gauss_elliptic)
        .map_err(|source| CouplingError::Gauss { t: tf, sweep: sweeps, source })?;
    compat_repairs += gauss.compat_repaired as usize;
    let force = match cfg.force_model {
        ForceModel::Coulomb => electric_body_force(grid, params, &rho_f, &gauss.e),
        ForceModel::Zero => FaceField::zeros(grid),
    };
    let darcy = solve_darcy(grid, params, &force, bc, t_new, &cfg.elliptic)
        .map_err(|source| CouplingError::Darcy { t: tf, sweep: sweeps, source })?;
    compat_repairs += darcy.compat_repaired as usize;

    Ok(StepResult {
        state: SystemState {
            t: t_new,
            c: c_k,
            e: gauss.e,
            q: darcy.q,
            phi: gauss.phi,
            p: darcy.p,
            rho_f,
        },
        outer_iters: sweeps,
        stats: StepStats {
            outer_iters: sweeps,
            residual_history,
            clamp_events,
            compat_repairs,
            min_before_clamp,
        },
    })
}

/// Advance `state` by one step of `cfg.dt`, starting the outer iteration
/// from the current concentrations.
pub fn fixed_point_step<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    bc: &BoundaryData<S>,
    reactions: &ReactionSpec<S>,
    state: &SystemState<S>,
    cfg: &FixedPointConfig<S>,
) -> Result<StepResult<S>, CouplingError> {
    fixed_point_step_traced(grid, params, bc, reactions, state, cfg, &mut |_, _| {})
}

/// `fixed_point_step` with a hook that observes every sub-solver call.
pub fn fixed_point_step_traced<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    bc: &BoundaryData<S>,
    reactions: &ReactionSpec<S>,
    state: &SystemState<S>,
    cfg: &FixedPointConfig<S>,
    trace: &mut dyn FnMut(usize, Stage),
) -> Result<StepResult<S>, CouplingError> {
    outer_iteration(
        grid,
        params,
        bc,
        reactions,
        state,
        state.c.clone(),
        cfg.dt,
        cfg,
        trace,
    )
}

/// Full run output: one state per nominal time level and one diagnostics
/// record per state (the first record describes the initial snapshot).
#[derive(Debug, Clone)]
pub struct Trajectory<S = f64> {
    pub states: Vec<SystemState<S>>,
    pub records: Vec<DiagnosticsRecord<S>>,
}

/// Advance a failed nominal step by subdividing it: each retry halves the
/// sub-step (up to three halvings), and the whole interval is re-run with
/// the smaller step. Returns the end state, merged stats, and the number
/// of halvings used.
fn advance_nominal_step<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    bc: &BoundaryData<S>,
    reactions: &ReactionSpec<S>,
    state: &SystemState<S>,
    dt: S,
    cfg: &FixedPointConfig<S>,
) -> Result<(SystemState<S>, StepStats, usize), CouplingError> {
    let mut last_err = None;
    for halvings in 0..=3usize {
        let n_sub = 1usize << halvings;
        let sub_dt = dt / S::cast(n_sub as f64);
        let mut current = state.clone();
        let mut merged = StepStats {
            outer_iters: 0,
            residual_history: Vec::new(),
            clamp_events: 0,
            compat_repairs: 0,
            min_before_clamp: f64::INFINITY,
        };
        let mut failed = None;
        for _ in 0..n_sub {
            match outer_iteration(
                grid,
                params,
                bc,
                reactions,
                &current,
                current.c.clone(),
                sub_dt,
                cfg,
                &mut |_, _| {},
            ) {
                Ok(res) => {
                    current = res.state;
                    merged.outer_iters += res.stats.outer_iters;
                    merged
                        .residual_history
                        .extend(res.stats.residual_history);
                    merged.clamp_events += res.stats.clamp_events;
                    merged.compat_repairs += res.stats.compat_repairs;
                    merged.min_before_clamp =
                        merged.min_before_clamp.min(res.stats.min_before_clamp);
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        match failed {
            None => return Ok((current, merged, halvings)),
            Some(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt ran"))
}

/// Run from `initial` concentrations at t = 0 to `cfg.t_end` in nominal
/// steps of `cfg.dt` (the last step may be shorter). A step that fails to
/// converge is retried with halved sub-steps, up to three halvings.
pub fn run<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    bc: &BoundaryData<S>,
    reactions: &ReactionSpec<S>,
    initial: Vec<CellField<S>>,
    cfg: &FixedPointConfig<S>,
) -> Result<Trajectory<S>, CouplingError> {
    cfg.validate()?;
    for (l, c) in initial.iter().enumerate() {
        for i in 0..c.len() {
            if c[i] < S::zero() {
                return Err(CouplingError::Model(ModelError::NegativeConcentration {
                    species: l,
                    cell: i,
                    value: c[i].to_f64_lossy(),
                }));
            }
        }
    }

    let initial_c = initial.clone();
    let n_steps = ((cfg.t_end / cfg.dt).to_f64_lossy() - 1e-9).ceil().max(1.0) as usize;

    let state0 = initialize(grid, params, bc, initial, S::zero(), cfg)?;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut records = Vec::with_capacity(n_steps + 1);

    let observe = |state: &SystemState<S>,
                   stats: &StepStats,
                   halvings: usize|
     -> Result<DiagnosticsRecord<S>, CouplingError> {
        let env = gronwall_envelopes(grid, params, bc, reactions, &initial_c, state.t)?;
        Ok(collect_record(
            grid,
            params,
            state.t,
            &state.c,
            &state.e,
            &state.q,
            &state.phi,
            &state.p,
            &state.rho_f,
            env,
            stats.outer_iters,
            stats.clamp_events,
            stats.compat_repairs,
            halvings,
        )?)
    };

    let zero_stats = StepStats {
        outer_iters: 0,
        residual_history: Vec::new(),
        clamp_events: 0,
        compat_repairs: 0,
        min_before_clamp: f64::INFINITY,
    };
    records.push(observe(&state0, &zero_stats, 0)?);
    states.push(state0);

    for step in 0..n_steps {
        let t_target = if step + 1 == n_steps {
            cfg.t_end
        } else {
            cfg.dt * S::cast((step + 1) as f64)
        };
        let current = states.last().expect("non-empty");
        let dt = t_target - current.t;
        let (next, stats, halvings) =
            advance_nominal_step(grid, params, bc, reactions, current, dt, cfg)?;
        records.push(observe(&next, &stats, halvings)?);
        states.push(next);
    }

    Ok(Trajectory { states, records })
}

/// Relative L2 distance between two states, maximized over every stored
/// field (each species, both face fields, potential, pressure, charge).
pub fn state_distance<S: Scalar>(
    grid: &Grid2D<S>,
    a: &SystemState<S>,
    b: &SystemState<S>,
) -> S {
    let floor = S::cast(1e-14);
    let rel = |num: S, den: S| num.sqrt() / den.sqrt().max(floor);
    let mut worst = S::zero();

    let cell_pair = |x: &CellField<S>, y: &CellField<S>| {
        let mut num = S::zero();
        let mut den = S::zero();
        for i in 0..x.len() {
            let d = x[i] - y[i];
            num += d * d;
            den += y[i] * y[i];
        }
        rel(num, den)
    };
    for (ca, cb) in a.c.iter().zip(&b.c) {
        worst = worst.max(cell_pair(ca, cb));
    }
    worst = worst.max(cell_pair(&a.phi, &b.phi));
    worst = worst.max(cell_pair(&a.p, &b.p));
    worst = worst.max(cell_pair(&a.rho_f, &b.rho_f));

    for (fa, fb) in [(&a.e, &b.e), (&a.q, &b.q)] {
        let mut num = S::zero();
        let mut den = S::zero();
        for f in grid.faces() {
            let d = fa[f] - fb[f];
            num += d * d;
            den += fb[f] * fb[f];
        }
        worst = worst.max(rel(num, den));
    }
    worst
}

/// Max over state components of the absolute (area- and length-weighted)
/// L2 distance. The probe metric: unlike the relative residual, it stays
/// meaningful for components that happen to vanish, like the flow field of
/// a force-free state.
pub fn state_l2_distance<S: Scalar>(
    grid: &Grid2D<S>,
    a: &SystemState<S>,
    b: &SystemState<S>,
) -> S {
    let area = grid.cell_area();
    let mut worst = S::zero();

    let cell_pair = |x: &CellField<S>, y: &CellField<S>| {
        let mut acc = S::zero();
        for i in 0..x.len() {
            let d = x[i] - y[i];
            acc += d * d;
        }
        (acc * area).sqrt()
    };
    for (ca, cb) in a.c.iter().zip(&b.c) {
        worst = worst.max(cell_pair(ca, cb));
    }
    worst = worst.max(cell_pair(&a.phi, &b.phi));
    worst = worst.max(cell_pair(&a.p, &b.p));
    worst = worst.max(cell_pair(&a.rho_f, &b.rho_f));

    for (fa, fb) in [(&a.e, &b.e), (&a.q, &b.q)] {
        let mut acc = S::zero();
        for f in grid.faces() {
            let d = fa[f] - fb[f];
            acc += d * d * grid.face_spacing(f) * grid.face_length(f);
        }
        worst = worst.max(acc.sqrt());
    }
    worst
}

/// Re-run one step's outer iteration from a randomly perturbed initial
/// iterate and report the max L2 distance of the converged states. A
/// contractive step keeps this within a few `fp_tol`.
///
/// The perturbation is neutrality-preserving: after adding noise and
/// clipping at zero, each species is rescaled to its unperturbed total so
/// the iterate keeps the total charge the zero-flux field problems need.
pub fn uniqueness_probe<S: Scalar>(
    grid: &Grid2D<S>,
    params: &ModelParams<S>,
    bc: &BoundaryData<S>,
    reactions: &ReactionSpec<S>,
    state: &SystemState<S>,
    cfg: &FixedPointConfig<S>,
    perturbation_scale: S,
    seed: u64,
) -> Result<S, CouplingError> {
    let base = fixed_point_step(grid, params, bc, reactions, state, cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perturbed_init: Vec<CellField<S>> = state
        .c
        .iter()
        .map(|c| {
            let total = c.sum();
            let mut p = c.clone();
            for i in 0..p.len() {
                let noise = S::cast(rng.gen_range(-1.0..1.0)) * perturbation_scale;
                p[i] = (p[i] + noise).max(S::zero());
            }
            let new_total = p.sum();
            let factor = if new_total > S::zero() {
                total / new_total
            } else {
                S::zero()
            };
            for i in 0..p.len() {
                p[i] *= factor;
            }
            p
        })
        .collect();
    let probed = outer_iteration(
        grid,
        params,
        bc,
        reactions,
        state,
        perturbed_init,
        cfg.dt,
        cfg,
        &mut |_, _| {},
    )?;

    Ok(state_l2_distance(grid, &base.state, &probed.state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldRole;
    use crate::model::{Profile, SpeciesParams};

    fn two_species_params(z: (i32, i32)) -> ModelParams<f64> {
        ModelParams {
            porosity: 1.0,
            viscosity: 1.0,
            permittivity: 1.0,
            elementary_charge: 1.0,
            thermal_energy: 1.0,
            charge_prefactor: 1.0,
            permeability: (1.0, 1.0),
            species: vec![
                SpeciesParams { name: "cation".into(), valency: z.0, diffusivity: (1.0, 1.0) },
                SpeciesParams { name: "anion".into(), valency: z.1, diffusivity: (1.0, 1.0) },
            ],
        }
    }

    /// Mirror-image bumps: equal totals (so the zero-flux Gauss law is
    /// compatible) but a genuine charge dipole driving the coupling.
    fn bump_fields(g: &Grid2D<f64>) -> Vec<CellField<f64>> {
        let bump = Profile::GaussianBump {
            base: 0.2,
            amplitude: 1.0,
            center: (0.4 * g.lx, 0.5 * g.ly),
            width: 0.15,
        };
        let other = Profile::GaussianBump {
            base: 0.2,
            amplitude: 1.0,
            center: (0.6 * g.lx, 0.5 * g.ly),
            width: 0.15,
        };
        vec![
            bump.cell_field(g, FieldRole::Concentration, 0.0).unwrap(),
            other.cell_field(g, FieldRole::Concentration, 0.0).unwrap(),
        ]
    }

    #[test]
    fn equilibrium_state_is_a_fixed_point() {
        let g: Grid2D<f64> = Grid2D::new(6, 6, 1.0, 1.0).unwrap();
        let p = two_species_params((1, -1));
        let bc = BoundaryData::zero();
        let cfg = FixedPointConfig::new(0.1, 0.3);
        let c0 = vec![
            CellField::constant(&g, FieldRole::Concentration, 1.0),
            CellField::constant(&g, FieldRole::Concentration, 1.0),
        ];
        let traj = run(&g, &p, &bc, &ReactionSpec::None, c0, &cfg).unwrap();
        assert_eq!(traj.states.len(), 4);
        for s in &traj.states {
            for c in &s.c {
                for i in 0..c.len() {
                    assert!((c[i] - 1.0).abs() < 1e-12, "c = {} at t = {}", c[i], s.t);
                }
            }
            assert!(s.e.max_abs() < 1e-10);
            assert!(s.q.max_abs() < 1e-10);
        }
    }

    #[test]
    fn decoupled_step_matches_direct_transport() {
        let g: Grid2D<f64> = Grid2D::new(8, 4, 1.0, 0.5).unwrap();
        let p = two_species_params((0, 0));
        let bc = BoundaryData::zero();
        let cfg = FixedPointConfig::new(0.05, 0.05);
        let c0 = bump_fields(&g);

        let state = initialize(&g, &p, &bc, c0.clone(), 0.0, &cfg).unwrap();
        assert!(state.e.max_abs() < 1e-12);
        assert!(state.q.max_abs() < 1e-12);

        let res = fixed_point_step(&g, &p, &bc, &ReactionSpec::None, &state, &cfg).unwrap();
        assert!(res.outer_iters <= 2, "decoupled problem took {} sweeps", res.outer_iters);

        // must equal a single transport solve with zero fields
        let zero = FaceField::zeros(&g);
        let input = TransportStepInput {
            c_old: &c0,
            c_frozen: &c0,
            e: &zero,
            q: &zero,
            dt: 0.05,
            t: 0.05,
        };
        let (direct, _) =
            step_species(&g, &p, &input, &ReactionSpec::None, &bc, 1e-10).unwrap();
        for (a, b) in res.state.c.iter().zip(&direct) {
            for i in 0..a.len() {
                assert!((a[i] - b[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sweep_trace_is_gauss_darcy_transport_in_order() {
        let g: Grid2D<f64> = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let p = two_species_params((1, -1));
        let bc = BoundaryData::zero();
        let cfg = FixedPointConfig::new(0.02, 0.02);
        let state = initialize(&g, &p, &bc, bump_fields(&g), 0.0, &cfg).unwrap();

        let mut trace = Vec::new();
        let res = fixed_point_step_traced(&g, &p, &bc, &ReactionSpec::None, &state, &cfg, &mut |
            sweep,
            stage,
        | {
            trace.push((sweep, stage));
        })
        .unwrap();

        assert_eq!(trace.len(), 3 * res.outer_iters);
        for k in 0..res.outer_iters {
            assert_eq!(trace[3 * k], (k + 1, Stage::Gauss));
            assert_eq!(trace[3 * k + 1], (k + 1, Stage::Darcy));
            assert_eq!(trace[3 * k + 2], (k + 1, Stage::Transport));
        }
    }

    #[test]
    fn coupled_outer_residual_decreases() {
        let g: Grid2D<f64> = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
        let p = two_species_params((1, -1));
        let bc = BoundaryData::zero();
        let cfg = FixedPointConfig::new(0.01, 0.01);
        let state = initialize(&g, &p, &bc, bump_fields(&g), 0.0, &cfg).unwrap();
        let res = fixed_point_step(&g, &p, &bc, &ReactionSpec::None, &state, &cfg).unwrap();
        assert!(res.outer_iters >= 2);
        let h = &res.stats.residual_history;
        for w in h.windows(2) {
            assert!(w[1] < w[0], "residuals not decreasing: {h:?}");
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        let g: Grid2D<f64> = Grid2D::new(6, 6, 1.0, 1.0).unwrap();
        let p = two_species_params((1, -1));
        let bc = BoundaryData::zero();
        let cfg = FixedPointConfig::new(0.02, 0.08);
        let a = run(&g, &p, &bc, &ReactionSpec::None, bump_fields(&g), &cfg).unwrap();
        let b = run(&g, &p, &bc, &ReactionSpec::None, bump_fields(&g), &cfg).unwrap();
        assert_eq!(a.states.len(), b.states.len());
        for (sa, sb) in a.states.iter().zip(&b.states) {
            for (ca, cb) in sa.c.iter().zip(&sb.c) {
                for i in 0..ca.len() {
                    assert!(ca[i].to_bits() == cb[i].to_bits());
                }
            }
            for f in g.faces() {
                assert!(sa.q[f].to_bits() == sb.q[f].to_bits());
                assert!(sa.e[f].to_bits() == sb.e[f].to_bits());
            }
        }
    }

    #[test]
    fn trajectory_length_is_step_count_plus_one() {
        let g: Grid2D<f64> = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let p = two_species_params((0, 0));
        let bc = BoundaryData::zero();
        let c0 = vec![
            CellField::constant(&g, FieldRole::Concentration, 1.0),
            CellField::constant(&g, FieldRole::Concentration, 1.0),
        ];
        // exact multiple
        let cfg = FixedPointConfig::new(0.1, 0.3);
        let traj = run(&g, &p, &bc, &ReactionSpec::None, c0.clone(), &cfg).unwrap();
        assert_eq!(traj.states.len(), 4);
        assert_eq!(traj.records.len(), 4);
        assert!((traj.states[3].t - 0.3).abs() < 1e-15);
        // ragged end: ceil(0.25 / 0.1) = 3 steps
        let cfg = FixedPointConfig::new(0.1, 0.25);
        let traj = run(&g, &p, &bc, &ReactionSpec::None, c0, &cfg).unwrap();
        assert_eq!(traj.states.len(), 4);
        assert!((traj.states[3].t - 0.25).abs() < 1e-15);
    }

    #[test]
    fn uniqueness_probe_returns_zero_without_perturbation() {
        let g: Grid2D<f64> = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let p = two_species_params((1, -1));
        let bc = BoundaryData::zero();
        let cfg = FixedPointConfig::new(0.02, 0.02);
        let state = initialize(&g, &p, &bc, bump_fields(&g), 0.0, &cfg).unwrap();
        let d = uniqueness_probe(&g, &p, &bc, &ReactionSpec::None, &state, &cfg, 0.0, 7).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn uniqueness_probe_converges_to_same_fixed_point() {
        let g: Grid2D<f64> = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let p = two_species_params((1, -1));
        let bc = BoundaryData::zero();
        let cfg = FixedPointConfig::new(0.02, 0.02);
        let state = initialize(&g, &p, &bc, bump_fields(&g), 0.0, &cfg).unwrap();
        for seed in [1, 2, 3] {
            let d = uniqueness_probe(
                &g, &p, &bc, &ReactionSpec::None, &state, &cfg, 1e-3, seed,
            )
            .unwrap();
            assert!(d <= 10.0 * cfg.fp_tol, "divergence {d:.3e} for seed {seed}");
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg: FixedPointConfig<f64> = FixedPointConfig::new(0.1, 1.0);
        cfg.omega = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg: FixedPointConfig<f64> = FixedPointConfig::new(0.1, 0.05);
        assert!(cfg.validate().is_err());
        cfg.t_end = 1.0;
        cfg.fp_tol = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn negative_initial_data_is_rejected() {
        let g: Grid2D<f64> = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let p = two_species_params((1, -1));
        let bc = BoundaryData::zero();
        let cfg = FixedPointConfig::new(0.1, 0.2);
        let mut c0 = bump_fields(&g);
        c0[1][3] = -0.5;
        let err = run(&g, &p, &bc, &ReactionSpec::None, c0, &cfg).unwrap_err();
        assert!(matches!(
            err,
            CouplingError::Model(ModelError::NegativeConcentration { species: 1, cell: 3, .. })
        ));
    }
}
