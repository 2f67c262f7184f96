use clap::{Parser, Subcommand};
use dpnp_cli::config::{builtin, builtin_scenarios, parse, Scenario};
use dpnp_cli::{csv_out, verify, vtk};
use dpnp_core::coupling::run as run_trajectory;
use dpnp_core::diagnostics::drift_sign_term;
use dpnp_core::model::validate;
use dpnp_core::oracle::{manufactured_errors, ManufacturedCase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dpnp",
    about = "Finite-volume solver for electrolyte transport in porous media \
             (Darcy flow, electrostatics, multispecies drift-diffusion)",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for CSV/VTK output.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Seed for randomized probes (verify, demo-sign-condition).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress progress output; errors still go to stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its diagnostics time series.
    Run {
        /// Scenario file path, or the name of a shipped scenario.
        #[arg(value_name = "CONFIG")]
        scenario: Option<String>,
        /// Scenario file path (alternative to the positional argument).
        #[arg(long = "config", value_name = "PATH")]
        config: Option<String>,
    },
    /// Run a scenario and evaluate every runtime invariant.
    Verify {
        #[arg(value_name = "CONFIG")]
        scenario: Option<String>,
        #[arg(long = "config", value_name = "PATH")]
        config: Option<String>,
    },
    /// Print a mesh-refinement error table for a manufactured solution.
    Convergence {
        /// One of: poisson, darcy, transport.
        #[arg(value_name = "CASE")]
        case: String,
    },
    /// Print the three-species sign-condition counterexample and the
    /// two-species positive probe.
    DemoSignCondition,
    /// List the shipped scenarios.
    Scenarios,
}

enum Failure {
    /// Bad config or arguments: exit 2.
    Config(String),
    /// The solver could not finish: exit 3.
    Solver(String),
    /// A runtime invariant failed (verify): exit 4.
    Invariant(String),
    /// Anything else (I/O): exit 1.
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Invariant(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Solver(m) | Failure::Invariant(m) | Failure::Other(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message());
        return ExitCode::from(f.code());
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

/// `DPNP_MAX_THREADS` caps the worker pool; unset means one worker per core.
fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("DPNP_MAX_THREADS") else {
        return Ok(());
    };
    match raw.parse::<usize>() {
        Ok(n) if n > 0 => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Other(format!("thread pool: {e}")))
        }
        _ => Err(Failure::Config(format!(
            "DPNP_MAX_THREADS must be a positive integer, got {raw:?}"
        ))),
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { scenario, config } => {
            let s = load_scenario(resolve_config(scenario, config)?)?;
            cmd_run(&s, cli)
        }
        Command::Verify { scenario, config } => {
            let s = load_scenario(resolve_config(scenario, config)?)?;
            cmd_verify(&s, cli)
        }
        Command::Convergence { case } => cmd_convergence(case),
        Command::DemoSignCondition => {
            cmd_demo_sign_condition(cli.seed);
            Ok(())
        }
        Command::Scenarios => {
            for (name, _) in builtin_scenarios() {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn resolve_config<'a>(
    positional: &'a Option<String>,
    flag: &'a Option<String>,
) -> Result<&'a str, Failure> {
    match (positional, flag) {
        (Some(_), Some(_)) => Err(Failure::Config(
            "give the config either positionally or via --config, not both".to_string(),
        )),
        (Some(s), None) | (None, Some(s)) => Ok(s),
        (None, None) => Err(Failure::Config(
            "missing config: pass a file path or a shipped scenario name \
             (see `dpnp scenarios`)"
                .to_string(),
        )),
    }
}

/// A config is a file path or, failing that, a shipped scenario name.
fn load_scenario(spec: &str) -> Result<Scenario, Failure> {
    let text = if Path::new(spec).is_file() {
        fs::read_to_string(spec).map_err(|e| Failure::Config(format!("{spec}: {e}")))?
    } else if let Some(t) = builtin(spec) {
        t.to_string()
    } else {
        let names: Vec<_> = builtin_scenarios().into_iter().map(|(n, _)| n).collect();
        return Err(Failure::Config(format!(
            "{spec}: not a file and not a shipped scenario (shipped: {})",
            names.join(", ")
        )));
    };
    let cfg = parse(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let scenario = cfg.build().map_err(|e| Failure::Config(e.to_string()))?;
    let report = validate(&scenario.grid, &scenario.params, &scenario.reactions, &scenario.bc);
    if !report.all_passed() {
        let mut msg = String::from("scenario fails admissibility checks:");
        for f in report.failures() {
            msg.push_str(&format!("\n  {}: {}", f.id, f.detail));
        }
        return Err(Failure::Config(msg));
    }
    Ok(scenario)
}

fn cmd_run(s: &Scenario, cli: &Cli) -> Result<(), Failure> {
    let traj = run_trajectory(&s.grid, &s.params, &s.bc, &s.reactions, s.initial.clone(), &s.cfg)
        .map_err(|e| Failure::Solver(e.to_string()))?;

    fs::create_dir_all(&cli.out)
        .map_err(|e| Failure::Other(format!("{}: {e}", cli.out.display())))?;
    let csv_name = s.output.csv.clone().unwrap_or_else(|| format!("{}.csv", s.name));
    let csv_path = cli.out.join(&csv_name);
    let names: Vec<String> = s.params.species.iter().map(|sp| sp.name.clone()).collect();
    let file = fs::File::create(&csv_path)
        .map_err(|e| Failure::Other(format!("{}: {e}", csv_path.display())))?;
    csv_out::write_series(file, &names, &traj.records)
        .map_err(|e| Failure::Other(format!("{}: {e}", csv_path.display())))?;

    let mut snapshots = 0usize;
    if s.output.vtk_every > 0 {
        for (idx, state) in traj.states.iter().enumerate() {
            if idx % s.output.vtk_every != 0 {
                continue;
            }
            let vtk_path = cli.out.join(format!("{}_{idx:05}.vtk", s.name));
            let file = fs::File::create(&vtk_path)
                .map_err(|e| Failure::Other(format!("{}: {e}", vtk_path.display())))?;
            vtk::write_snapshot(file, &s.grid, &s.params, state)
                .map_err(|e| Failure::Other(format!("{}: {e}", vtk_path.display())))?;
            snapshots += 1;
        }
    }

    if !cli.quiet {
        let last = traj.records.last().expect("trajectory has records");
        let outer: usize = traj.records.iter().map(|r| r.outer_iters).sum();
        let clamps: usize = traj.records.iter().map(|r| r.clamp_events).sum();
        let min_c = traj
            .states
            .iter()
            .flat_map(|st| st.c.iter().map(|c| c.min()))
            .fold(f64::INFINITY, f64::min);
        println!(
            "scenario {}: {} steps to t = {}",
            s.name,
            traj.states.len() - 1,
            last.t
        );
        println!(
            "  outer iterations {outer}, clamp events {clamps}, min concentration {min_c:.3e}"
        );
        println!(
            "  entropy {:.6e} (envelope {:.6e}), energy {:.6e} (envelope {:.6e})",
            last.entropy, last.envelopes.entropy, last.energy, last.envelopes.energy
        );
        if snapshots > 0 {
            println!("  wrote {} and {snapshots} vtk snapshots", csv_path.display());
        } else {
            println!("  wrote {}", csv_path.display());
        }
    }
    Ok(())
}

fn cmd_verify(s: &Scenario, cli: &Cli) -> Result<(), Failure> {
    let report = verify::run_checks(s, cli.seed).map_err(|e| Failure::Solver(e.to_string()))?;
    for c in &report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", c.name, c.detail);
    }
    if report.all_passed() {
        if !cli.quiet {
            println!("all {} checks passed for scenario {}", report.checks.len(), s.name);
        }
        Ok(())
    } else {
        let failed: Vec<_> =
            report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        Err(Failure::Invariant(format!(
            "{} of {} checks failed: {}",
            failed.len(),
            report.checks.len(),
            failed.join(", ")
        )))
    }
}

fn cmd_convergence(case: &str) -> Result<(), Failure> {
    let (case, label) = match case {
        "poisson" | "poisson_cos" => (ManufacturedCase::PoissonCos, "poisson_cos"),
        "darcy" | "darcy_gradient_force" => {
            (ManufacturedCase::DarcyGradientForce, "darcy_gradient_force")
        }
        "transport" | "transport_translate" => {
            (ManufacturedCase::TransportTranslate, "transport_translate")
        }
        other => {
            return Err(Failure::Config(format!(
                "unknown case {other:?}; expected poisson, darcy, or transport"
            )))
        }
    };
    let table = manufactured_errors::<f64>(case, &[8, 16, 32])
        .map_err(|e| Failure::Solver(e.to_string()))?;
    println!("case {label}: L2 error vs mesh size");
    for (k, (&n, &err)) in table.sizes.iter().zip(&table.errors).enumerate() {
        if k == 0 {
            println!("  n = {n:>3}: error = {err:.6e}");
        } else {
            let ratio = table.errors[k - 1] / err;
            println!(
                "  n = {n:>3}: error = {err:.6e}, ratio = {ratio:.3}, order = {:.3}",
                table.orders[k - 1]
            );
        }
    }
    Ok(())
}

/// The charge-weighted drift pairing that controls the L-infinity argument:
/// `(sum_l z_l c_l) * (sum_l sign(z_l) (|z_l| c_l)^2)`. For two species it
/// is provably non-negative; one three-species counterexample kills the
/// general case.
fn cmd_demo_sign_condition(seed: u64) {
    let z3 = [1i32, 1, -1];
    let c3 = [1.0f64, 1.0, 3.0f64.sqrt()];
    let value = drift_sign_term(&z3, &c3);
    println!("sign-condition probe for the drift pairing");
    println!("  three species z = {z3:?}, c = [1, 1, sqrt(3)]:");
    println!("    value = {value:.17}");
    println!("    (= -(2 - sqrt(3)); negative, so the pairing has no sign in general)");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = 1000;
    let mut min_value = f64::INFINITY;
    for _ in 0..samples {
        let mut z = [0i32; 2];
        for zi in &mut z {
            *zi = loop {
                let v = rng.gen_range(-3i32..=3);
                if v != 0 {
                    break v;
                }
            };
        }
        let c = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
        min_value = min_value.min(drift_sign_term(&z, &c));
    }
    println!("  two species, {samples} random samples (z in -3..3, c in [0, 10)):");
    println!("    min value = {min_value:.6e} (non-negative for every sample)");
}
