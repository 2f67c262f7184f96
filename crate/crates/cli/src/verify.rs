//! The `verify` subcommand's check suite: runs a scenario to completion and
//! evaluates every runtime invariant the scheme promises, plus the
//! monolithic-reference comparison on grids small enough to afford it.

use crate::config::Scenario;
use dpnp_core::coupling::{fixed_point_step, run, uniqueness_probe, SystemState, Trajectory};
use dpnp_core::grid::Grid2D;
use dpnp_core::oracle::{monolithic_step, MAX_ORACLE_CELLS};
use std::fmt::Write as _;

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Largest absolute difference over every unknown of two states.
fn max_abs_state_diff(grid: &Grid2D<f64>, a: &SystemState<f64>, b: &SystemState<f64>) -> f64 {
    let mut worst = 0.0f64;
    for (ca, cb) in a.c.iter().zip(&b.c) {
        for i in 0..ca.len() {
            worst = worst.max((ca[i] - cb[i]).abs());
        }
    }
    for i in 0..a.phi.len() {
        worst = worst.max((a.phi[i] - b.phi[i]).abs());
        worst = worst.max((a.p[i] - b.p[i]).abs());
        worst = worst.max((a.rho_f[i] - b.rho_f[i]).abs());
    }
    for f in grid.faces() {
        worst = worst.max((a.e[f] - b.e[f]).abs());
        worst = worst.max((a.q[f] - b.q[f]).abs());
    }
    worst
}

fn check_non_negativity(s: &Scenario, traj: &Trajectory<f64>, out: &mut Vec<CheckResult>) {
    let mut min_c = f64::INFINITY;
    for state in &traj.states {
        for c in &state.c {
            min_c = min_c.min(c.min());
        }
    }
    let clamps: usize = traj.records.iter().map(|r| r.clamp_events).sum();
    out.push(CheckResult {
        name: "non_negativity",
        passed: min_c >= 0.0,
        detail: format!("min concentration = {min_c:.3e}, clamp_events = {clamps}"),
    });
    let _ = s;
}

fn check_envelopes(traj: &Trajectory<f64>, out: &mut Vec<CheckResult>) {
    let mut worst_entropy = f64::NEG_INFINITY;
    let mut worst_energy = f64::NEG_INFINITY;
    let mut ok = true;
    for r in &traj.records {
        ok &= r.within_envelopes();
        worst_entropy = worst_entropy.max(r.entropy.ln() - r.envelopes.ln_entropy);
        if r.energy > 0.0 {
            worst_energy = worst_energy.max(r.energy.ln() - r.envelopes.ln_energy);
        }
    }
    out.push(CheckResult {
        name: "envelope_domination",
        passed: ok,
        detail: format!(
            "worst log margin: entropy {worst_entropy:.3e}, energy {worst_energy:.3e} (<= 0 is strict domination)"
        ),
    });
}

fn check_boundedness(traj: &Trajectory<f64>, out: &mut Vec<CheckResult>) {
    let n_species = traj.records[0].species.len();
    let mut worst_ratio = 0.0f64;
    let mut ok = true;
    for l in 0..n_species {
        let initial = traj.records[0].species[l].linf;
        let peak = traj
            .records
            .iter()
            .map(|r| r.species[l].linf)
            .fold(0.0f64, f64::max);
        // the tiny absolute term keeps an identically-zero species passing
        ok &= peak <= 100.0 * initial + 1e-30;
        if initial > 0.0 {
            worst_ratio = worst_ratio.max(peak / initial);
        }
    }
    out.push(CheckResult {
        name: "boundedness",
        passed: ok,
        detail: format!("max linf growth ratio = {worst_ratio:.4} (limit 100)"),
    });
}

fn check_mass_conservation(s: &Scenario, traj: &Trajectory<f64>, out: &mut Vec<CheckResult>) {
    if !s.reactions.is_none() {
        return;
    }
    let n_species = traj.records[0].species.len();
    let mut worst = 0.0f64;
    for l in 0..n_species {
        let m0 = traj.records[0].species[l].mass;
        let scale = m0.abs().max(1e-300);
        for r in &traj.records {
            worst = worst.max((r.species[l].mass - m0).abs() / scale);
        }
    }
    out.push(CheckResult {
        name: "mass_conservation",
        passed: worst <= 1e-11,
        detail: format!("max relative drift = {worst:.3e} (limit 1e-11)"),
    });
}

fn check_entropy_dissipation(s: &Scenario, traj: &Trajectory<f64>, out: &mut Vec<CheckResult>) {
    let zero_data = s.bc.sigma_bound == 0.0
        && s.bc.fluid_flux_bound == 0.0
        && s.bc.background_bound == 0.0;
    if !zero_data || !s.reactions.is_none() {
        return;
    }
    let mut worst_rise = f64::NEG_INFINITY;
    for w in traj.records.windows(2) {
        worst_rise = worst_rise.max(w[1].entropy - w[0].entropy);
    }
    out.push(CheckResult {
        name: "entropy_dissipation",
        passed: worst_rise <= 1e-10,
        detail: format!("max per-step entropy rise = {worst_rise:.3e} (limit 1e-10)"),
    });
}

fn check_darcy_divergence(s: &Scenario, traj: &Trajectory<f64>, out: &mut Vec<CheckResult>) {
    let h_min = s.grid.hx.min(s.grid.hy);
    let mut worst = 0.0f64;
    let mut limit = 0.0f64;
    for state in &traj.states {
        let div = s.grid.divergence(&state.q);
        worst = worst.max(div.max_abs());
        limit = limit.max(1e-7 * (1.0 + state.q.max_abs() / h_min));
    }
    out.push(CheckResult {
        name: "darcy_divergence",
        passed: worst <= limit,
        detail: format!("max |div q| = {worst:.3e} (limit {limit:.3e})"),
    });
}

fn check_oracle(s: &Scenario, traj: &Trajectory<f64>, out: &mut Vec<CheckResult>) {
    if s.grid.n_cells() > MAX_ORACLE_CELLS {
        return;
    }
    // pin both paths to a tight fixed-point tolerance so the comparison
    // measures the splitting, not the configured stopping rule
    let mut cfg = s.cfg.clone();
    cfg.fp_tol = cfg.fp_tol.min(1e-12);
    cfg.max_outer_iters = cfg.max_outer_iters.max(200);
    let mut worst = 0.0f64;
    let mut detail_err = None;
    for w in traj.states.windows(2) {
        cfg.dt = w[1].t - w[0].t;
        let split = match fixed_point_step(&s.grid, &s.params, &s.bc, &s.reactions, &w[0], &cfg) {
            Ok(r) => r.state,
            Err(e) => {
                detail_err = Some(format!("split step failed at t = {}: {e}", w[0].t));
                break;
            }
        };
        let mono = match monolithic_step(&s.grid, &s.params, &s.bc, &s.reactions, &w[0], &cfg) {
            Ok(state) => state,
            Err(e) => {
                detail_err = Some(format!("monolithic step failed at t = {}: {e}", w[0].t));
                break;
            }
        };
        worst = worst.max(max_abs_state_diff(&s.grid, &split, &mono));
    }
    let (passed, detail) = match detail_err {
        Some(msg) => (false, msg),
        None => (
            worst <= 1e-9,
            format!("max |split - monolithic| = {worst:.3e} over {} steps (limit 1e-9)", traj.states.len() - 1),
        ),
    };
    out.push(CheckResult { name: "oracle_equivalence", passed, detail });
}

fn check_uniqueness(s: &Scenario, traj: &Trajectory<f64>, seed: u64, out: &mut Vec<CheckResult>) {
    let limit = 10.0 * s.cfg.fp_tol;
    let mut detail = String::new();
    let mut passed = true;
    for (k, scale) in [1e-3, 1e-1].into_iter().enumerate() {
        match uniqueness_probe(
            &s.grid,
            &s.params,
            &s.bc,
            &s.reactions,
            &traj.states[0],
            &s.cfg,
            scale,
            seed + k as u64,
        ) {
            Ok(dist) => {
                passed &= dist <= limit;
                let _ = write!(detail, "scale {scale:.0e}: distance {dist:.3e}; ");
            }
            Err(e) => {
                passed = false;
                let _ = write!(detail, "scale {scale:.0e}: probe failed: {e}; ");
            }
        }
    }
    let _ = write!(detail, "limit {limit:.3e}");
    out.push(CheckResult { name: "uniqueness_probe", passed, detail });
}

/// Run the scenario and every applicable check. A solver failure is an
/// error (the scenario could not even run); a failed invariant is a
/// `CheckResult` with `passed = false`.
pub fn run_checks(s: &Scenario, seed: u64) -> Result<VerifyReport, anyhow::Error> {
    let traj = run(&s.grid, &s.params, &s.bc, &s.reactions, s.initial.clone(), &s.cfg)?;
    Ok(checks_on_trajectory(s, &traj, seed))
}

/// The check suite on an already-computed trajectory.
pub fn checks_on_trajectory(s: &Scenario, traj: &Trajectory<f64>, seed: u64) -> VerifyReport {
    let mut checks = Vec::new();
    check_non_negativity(s, traj, &mut checks);
    check_envelopes(traj, &mut checks);
    check_boundedness(traj, &mut checks);
    check_mass_conservation(s, traj, &mut checks);
    check_entropy_dissipation(s, traj, &mut checks);
    check_darcy_divergence(s, traj, &mut checks);
    check_oracle(s, traj, &mut checks);
    check_uniqueness(s, traj, seed, &mut checks);
    VerifyReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{builtin, parse};

    #[test]
    fn equilibrium_passes_every_check() {
        let scenario = parse(builtin("equilibrium").unwrap()).unwrap().build().unwrap();
        let report = run_checks(&scenario, 7).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        let names: Vec<_> = report.checks.iter().map(|c| c.name).collect();
        // zero-data equilibrium exercises the conditional checks too
        assert!(names.contains(&"mass_conservation"));
        assert!(names.contains(&"entropy_dissipation"));
        assert!(!names.contains(&"oracle_equivalence"), "16x16 is past the dense limit");
    }

    #[test]
    fn oracle_scenario_runs_the_dense_comparison() {
        let scenario = parse(builtin("oracle-2x2").unwrap()).unwrap().build().unwrap();
        let report = run_checks(&scenario, 11).unwrap();
        let oracle = report
            .checks
            .iter()
            .find(|c| c.name == "oracle_equivalence")
            .expect("small grid must include the dense comparison");
        assert!(oracle.passed, "{}", oracle.detail);
        assert!(report.all_passed(), "{:#?}", report.checks.iter().map(|c| (c.name, c.passed, &c.detail)).collect::<Vec<_>>());
    }
}
