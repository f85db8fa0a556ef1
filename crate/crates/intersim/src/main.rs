//! Scenario-driven batch runner: executes replication matrices over demand
//! sweeps and controllers, sweeps signal cycle lengths, validates scenario
//! files, and cross-checks the ordering solver against brute force.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use intersim::runner::{
    grid_csv, grid_search, run_matrix, summary_json, to_csv, ControllerId, MatrixConfig, Profile,
};
use intersim::scenario::{preset, Scenario, PRESET_NAMES};
use intersim::scheduler::{bnb, brute, check_solution, gen};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "intersim", version, about = "Isolated-intersection control simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the (controller, demand, replication) matrix for scenarios
    Run(RunArgs),
    /// Sweep pretimed cycle lengths for one scenario and demand level
    GridSearch(GridArgs),
    /// Parse a scenario file or preset and print the canonical form
    Validate {
        /// Preset name or path to a scenario file
        scenario: String,
    },
    /// Compare the ordering solver against exhaustive enumeration
    OracleCheck(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    /// 900 s runs, 3 replications, demand 0.5 to 4.0 in steps of 0.5
    Desk,
    /// 3900 s runs, 10 replications, demand 0.1 to 4.0 in steps of 0.1
    Paper,
}

impl ProfileArg {
    fn get(self) -> Profile {
        match self {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CtlArg {
    Ppc,
    Fcfs,
    Cpic,
}

impl CtlArg {
    fn get(self) -> ControllerId {
        match self {
            CtlArg::Ppc => ControllerId::Ppc,
            CtlArg::Fcfs => ControllerId::Fcfs,
            CtlArg::Cpic => ControllerId::Cpic,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Preset names or scenario file paths
    #[arg(required = true)]
    scenarios: Vec<String>,
    #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,
    /// Controllers to run
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [CtlArg::Ppc, CtlArg::Fcfs, CtlArg::Cpic])]
    controllers: Vec<CtlArg>,
    /// Base seed; replication r uses seed base + r
    #[arg(long, default_value_t = 1)]
    seed_base: u64,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output stem; writes <out>.csv and <out>.json
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Restrict the sweep to these demand rates, veh/s summed over lanes
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    /// Override the profile's run length, seconds
    #[arg(long)]
    duration: Option<f64>,
    /// Override the profile's warmup, seconds
    #[arg(long)]
    warmup: Option<f64>,
    /// Override the profile's replication count
    #[arg(long)]
    replications: Option<u64>,
}

#[derive(Args)]
struct GridArgs {
    /// Preset name or path to a scenario file
    scenario: String,
    /// Demand rate to tune for, veh/s summed over lanes
    #[arg(long)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,
    #[arg(long, default_value_t = 1)]
    seed_base: u64,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Optional output path for the candidate table
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Number of random instances
    #[arg(long, default_value_t = 500)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
}

fn resolve_scenario(name: &str) -> Result<Scenario> {
    if let Some(s) = preset(name) {
        return Ok(s);
    }
    if !Path::new(name).exists() {
        bail!(
            "'{name}' is neither a preset ({}) nor a readable file",
            PRESET_NAMES.join(", ")
        );
    }
    let text = std::fs::read_to_string(name).with_context(|| format!("reading {name}"))?;
    let scenario: Scenario =
        serde_json::from_str(&text).with_context(|| format!("parsing {name}"))?;
    scenario
        .validate()
        .with_context(|| format!("validating {name}"))?;
    Ok(scenario)
}

fn set_jobs(jobs: usize) -> Result<()> {
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn config(profile: ProfileArg, seed_base: u64) -> MatrixConfig {
    MatrixConfig::from_profile(profile.get(), seed_base)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    set_jobs(args.jobs)?;
    let scenarios: Vec<Scenario> = args
        .scenarios
        .iter()
        .map(|s| resolve_scenario(s))
        .collect::<Result<_>>()?;
    let mut cfg = config(args.profile, args.seed_base);
    if !args.lambda.is_empty() {
        cfg.lambdas = args.lambda.clone();
    }
    if let Some(d) = args.duration {
        cfg.duration = d;
    }
    if let Some(w) = args.warmup {
        cfg.warmup = w;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    let controllers: Vec<ControllerId> = args.controllers.iter().map(|c| c.get()).collect();
    let rows = run_matrix(&scenarios, &controllers, &cfg)
        .map_err(|e| anyhow::anyhow!("matrix halted: {e}"))?;
    let csv_path = args.out.with_extension("csv");
    let json_path = args.out.with_extension("json");
    std::fs::write(&csv_path, to_csv(&rows)).with_context(|| format!("writing {csv_path:?}"))?;
    std::fs::write(&json_path, summary_json(&rows))
        .with_context(|| format!("writing {json_path:?}"))?;
    let unstable = rows.iter().filter(|r| !r.stable).count();
    println!(
        "{} rows ({} unstable) -> {} and {}",
        rows.len(),
        unstable,
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

fn cmd_grid(args: GridArgs) -> Result<()> {
    set_jobs(args.jobs)?;
    let scenario = resolve_scenario(&args.scenario)?;
    let cfg = config(args.profile, args.seed_base);
    let (best, table) = grid_search(&scenario, args.lambda, &cfg);
    let text = grid_csv(&table);
    match args.out {
        Some(path) => {
            std::fs::write(&path, text).with_context(|| format!("writing {path:?}"))?;
            println!("{} candidates -> {}", table.len(), path.display());
        }
        None => print!("{text}"),
    }
    println!("best cycle: {best:.0} s");
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let budgets = bnb::Budgets::default();
    let mut worst: f64 = 0.0;
    for i in 0..args.count {
        let inst = gen::random_instance(args.seed_base + i);
        let ours = bnb::solve(&inst, &budgets);
        let reference = brute::solve_brute(&inst);
        match (&ours.schedule, &reference) {
            (Some(s), brute::BruteOutcome::Optimal(r)) => {
                if !ours.complete {
                    bail!("instance {i}: solver budget exhausted");
                }
                let gap = (s.objective - r.objective).abs();
                worst = worst.max(gap);
                if gap > 1e-6 {
                    bail!(
                        "instance {i}: objective {} vs brute force {}",
                        s.objective,
                        r.objective
                    );
                }
                let bad = check_solution(&inst, s, 1e-6);
                if !bad.is_empty() {
                    bail!("instance {i}: invalid schedule: {}", bad.join("; "));
                }
            }
            (None, brute::BruteOutcome::Infeasible) => {}
            _ => bail!("instance {i}: feasibility disagreement"),
        }
    }
    println!(
        "{} instances: objectives match brute force (worst gap {worst:.2e})",
        args.count
    );
    Ok(())
}

fn cmd_validate(name: &str) -> Result<()> {
    let scenario = resolve_scenario(name)?;
    println!("{}", serde_json::to_string_pretty(&scenario)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::GridSearch(args) => cmd_grid(args),
        Cmd::Validate { scenario } => cmd_validate(&scenario),
        Cmd::OracleCheck(args) => cmd_oracle(args),
    }
}
