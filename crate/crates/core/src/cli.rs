//! Command-line front end: generate instances, run the distributed solver,
//! cross-check against the centralized oracle, and analyze recorded traces.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{audit, fit_rate, gap_bound, summary_csv, StopReason, Trace};
use crate::engine::{self, EngineError, RunOptions, RunOutput, StopRule};
use crate::instances::{generate, Certificate, GenParams, Instance, InstanceKind};
use crate::oracle::{centralized_dykstra, certify, OracleSettings};
use crate::topology::{make_schedule, Graph, SchedulePolicy};
use crate::vecops;

/// Everything `run` needs beyond the instance itself. The schedule is derived
/// from the policy: deterministic policies repeat a single cycle, while
/// random coverage pre-draws one independent shuffle per budgeted cycle.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub policy: SchedulePolicy,
    pub schedule_seed: u64,
    pub stop: StopRule,
    pub debug: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            policy: SchedulePolicy::CyclicVFirst,
            schedule_seed: 0,
            stop: StopRule::default(),
            debug: false,
        }
    }
}

/// Builds the schedule implied by the config and runs the solver.
pub fn run_with_config(instance: &Instance, config: &RunConfig) -> Result<RunOutput, EngineError> {
    let n_cycles = match config.policy {
        SchedulePolicy::RandomCoverage => config.stop.max_cycles.max(1),
        _ => 1,
    };
    let schedule = make_schedule(&instance.graph, config.policy, n_cycles, config.schedule_seed);
    engine::run(instance, &schedule, &config.stop, &RunOptions { debug: config.debug })
}

#[derive(Parser)]
#[command(
    name = "dykstra",
    version,
    about = "Distributed Dykstra projection onto an intersection of convex sets spread over a graph"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance with a known optimum at the origin
    Gen(GenArgs),
    /// Run the distributed block-coordinate solver on an instance
    Run(RunArgs),
    /// Project centrally with classical Dykstra; optionally embed the result
    /// as the instance certificate
    Oracle(OracleArgs),
    /// Check a recorded trace for descent, gap domination and drift warnings
    Audit(AuditArgs),
    /// Fit a linear convergence rate to a recorded trace
    Rate(RateArgs),
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated numbers, got {s:?}"))?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("bad number {a:?}: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("bad number {b:?}: {e}"))?;
    Ok((lo, hi))
}

#[derive(Args)]
struct GenArgs {
    /// Set family: balls, halfspaces, boxes, mixed or consensus
    #[arg(long)]
    kind: InstanceKind,
    /// Ambient dimension
    #[arg(long)]
    m: usize,
    /// Topology spec: path:N, cycle:N, star:N or complete:N
    #[arg(long)]
    graph: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Range for the dual magnitude t, as "lo,hi"
    #[arg(long, value_parser = parse_pair)]
    t_range: Option<(f64, f64)>,
    /// Range for ball radii, as "lo,hi"
    #[arg(long, value_parser = parse_pair)]
    rho_range: Option<(f64, f64)>,
    /// Output file; omitting it prints the instance to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Instance file produced by `gen` (or hand-written in the same format)
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "cyclic_v_first")]
    policy: SchedulePolicy,
    /// Seed for schedule randomness (random_coverage only)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = StopRule::default().max_cycles)]
    max_cycles: usize,
    /// Stop once the certified distance bound falls below this value
    /// (normalized instances)
    #[arg(long, default_value_t = StopRule::default().gap_eps)]
    gap_eps: f64,
    /// Write the per-step trace as JSONL
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write a one-row CSV summary
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Tail fraction of boundary records used in the rate fit
    #[arg(long, default_value_t = 0.5)]
    fit_tail: f64,
    /// Re-derive all maintained state after every block and fail on any
    /// disagreement (also enabled by DYKSTRA_DEBUG=1)
    #[arg(long)]
    debug: bool,
    /// Oracle output file (from `oracle --out`); prints the worst distance
    /// between the solver's vertex images and the oracle point
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = OracleSettings::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = OracleSettings::default().max_iter)]
    max_iter: usize,
    /// Probe count for the optimality check
    #[arg(long, default_value_t = OracleSettings::default().n_samples)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score the solution by sampling feasible directions around it
    #[arg(long)]
    certify: bool,
    /// Write the solution, corrections and convergence data as JSON
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rewrite the instance file with the oracle solution embedded as its
    /// certificate (validated before writing)
    #[arg(long)]
    embed: bool,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    tail: f64,
}

/// On-disk shape of `oracle --out`, also consumed by `run --compare`.
#[derive(Debug, Serialize, Deserialize)]
struct OracleFile {
    point: Vec<f64>,
    iterations: usize,
    displacement: f64,
    converged: bool,
    corrections: Vec<Vec<f64>>,
}

type CliError = Box<dyn std::error::Error>;

pub fn run_cli() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::Audit(args) => cmd_audit(&args),
        Command::Rate(args) => cmd_rate(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read instance {}: {e}", path.display()))?;
    let instance = Instance::from_json(&text)?;
    instance.validate()?;
    Ok(instance)
}

fn load_trace(path: &Path) -> Result<Trace, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| format!("cannot read trace {}: {e}", path.display()))?;
    Ok(Trace::read_jsonl(BufReader::new(file))?)
}

fn cmd_gen(args: &GenArgs) -> Result<ExitCode, CliError> {
    let graph = Graph::from_spec(&args.graph)?;
    let mut params = GenParams::default();
    if let Some((lo, hi)) = args.t_range {
        params.t_range = [lo, hi];
    }
    if let Some((lo, hi)) = args.rho_range {
        params.rho_range = [lo, hi];
    }
    let instance = generate(args.kind, args.m, graph, args.seed, params)?;
    let json = instance.to_json();
    match &args.out {
        Some(path) => {
            fs::write(path, &json)?;
            println!("wrote {} instance ({} vertices, m={}) to {}",
                args.kind.name(), instance.n_vertices(), instance.m, path.display());
        }
        None => print!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode, CliError> {
    let instance = load_instance(&args.instance)?;
    let debug = args.debug
        || std::env::var("DYKSTRA_DEBUG").map(|v| v == "1").unwrap_or(false);
    let config = RunConfig {
        policy: args.policy,
        schedule_seed: args.seed,
        stop: StopRule { max_cycles: args.max_cycles, gap_eps: args.gap_eps, ..Default::default() },
        debug,
    };
    let out = run_with_config(&instance, &config)?;

    if let Some(path) = &args.trace {
        let file = fs::File::create(path)?;
        let mut writer = BufWriter::new(file);
        out.trace.write_jsonl(&mut writer)?;
        writer.flush()?;
    }
    if let Some(path) = &args.summary {
        fs::write(path, summary_csv(&out.trace, args.fit_tail))?;
    }

    println!("policy: {}", config.policy);
    println!("cycles: {}", out.trace.meta.cycles);
    let stop_reason = out.trace.meta.stop_reason.expect("runs always record a stop reason");
    println!("stop reason: {stop_reason}");
    println!("final F: {}", out.trace.final_f().unwrap_or(f64::NAN));
    if instance.is_normalized() {
        println!("certified gap: {}", gap_bound(&out.state, &instance)?);
    }
    match fit_rate(&out.trace, args.fit_tail) {
        Ok(fit) => println!(
            "rate: {} (r2 {}, window {}..{}, {} points)",
            fit.rate, fit.r_squared, fit.window.0, fit.window.1, fit.n_points
        ),
        Err(e) => println!("rate: unavailable ({e})"),
    }
    let report = audit(&out.trace);
    println!("{report}");
    for warning in out.trace.meta.warnings.as_deref().unwrap_or(&[]) {
        eprintln!("warning: {warning}");
    }

    if let Some(path) = &args.compare {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read oracle file {}: {e}", path.display()))?;
        let oracle: OracleFile = serde_json::from_str(&text)?;
        let worst = out
            .state
            .primal_images()
            .iter()
            .fold(0.0f64, |m, x| m.max(vecops::dist(x, &oracle.point)));
        println!("max distance to oracle point: {worst}");
    }

    let ok = stop_reason != StopReason::MaxCycles && report.passed();
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_oracle(args: &OracleArgs) -> Result<ExitCode, CliError> {
    let mut instance = load_instance(&args.instance)?;
    let settings = OracleSettings {
        max_iter: args.max_iter,
        tol: args.tol,
        n_samples: args.samples,
        seed: args.seed,
    };
    let result = centralized_dykstra(&instance.sets, &instance.anchor, &settings)?;
    println!("point: {:?}", result.point);
    println!("iterations: {}", result.iterations);
    println!("final sweep displacement: {}", result.displacement);
    println!("converged: {}", result.converged);

    if args.certify {
        let score = certify(&instance.sets, &instance.anchor, &result.point, &settings)?;
        println!("certify score: {score}");
    }

    if let Some(path) = &args.out {
        let file = OracleFile {
            point: result.point.clone(),
            iterations: result.iterations,
            displacement: result.displacement,
            converged: result.converged,
            corrections: result.corrections.clone(),
        };
        let mut json = serde_json::to_string_pretty(&file)?;
        json.push('\n');
        fs::write(path, json)?;
    }

    if args.embed {
        if !result.converged {
            return Err("refusing to embed a certificate from a non-converged oracle run".into());
        }
        instance.certificate = Some(Certificate {
            x_star: result.point.clone(),
            multipliers: result.certificate_multipliers(),
        });
        instance.validate()?;
        fs::write(&args.instance, instance.to_json())?;
        println!("embedded certificate into {}", args.instance.display());
    }

    Ok(if result.converged { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_audit(args: &AuditArgs) -> Result<ExitCode, CliError> {
    let trace = load_trace(&args.trace)?;
    let report = audit(&trace);
    println!("{report}");
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_rate(args: &RateArgs) -> Result<ExitCode, CliError> {
    let trace = load_trace(&args.trace)?;
    let fit = fit_rate(&trace, args.tail)?;
    println!("rate: {}", fit.rate);
    println!("log slope: {}", fit.log_slope);
    println!("r2: {}", fit.r_squared);
    println!("window: {}..{} ({} points)", fit.window.0, fit.window.1, fit.n_points);
    println!("one-cycle ratio: {}", fit.one_cycle_ratio);
    println!("two-cycle ratio: {}", fit.two_cycle_ratio);
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("0.5,2.0").unwrap(), (0.5, 2.0));
        assert_eq!(parse_pair(" 1 , 3 ").unwrap(), (1.0, 3.0));
        assert!(parse_pair("1").is_err());
        assert!(parse_pair("a,b").is_err());
    }

    #[test]
    fn arg_tree_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn gen_args_parse() {
        let cli = Cli::try_parse_from([
            "dykstra", "gen", "--kind", "balls", "--m", "3", "--graph", "path:5", "--seed", "42",
            "--t-range", "0.5,1.5",
        ])
        .unwrap();
        match cli.command {
            Command::Gen(args) => {
                assert!(matches!(args.kind, InstanceKind::Balls));
                assert_eq!(args.m, 3);
                assert_eq!(args.graph, "path:5");
                assert_eq!(args.seed, 42);
                assert_eq!(args.t_range, Some((0.5, 1.5)));
                assert_eq!(args.rho_range, None);
            }
            _ => panic!("parsed the wrong subcommand"),
        }
    }

    #[test]
    fn run_args_have_documented_defaults() {
        let cli = Cli::try_parse_from(["dykstra", "run", "--instance", "i.json"]).unwrap();
        match cli.command {
            Command::Run(args) => {
                assert!(matches!(args.policy, SchedulePolicy::CyclicVFirst));
                assert_eq!(args.max_cycles, 10_000);
                assert_eq!(args.gap_eps, 1e-8);
                assert_eq!(args.fit_tail, 0.5);
                assert!(!args.debug);
            }
            _ => panic!("parsed the wrong subcommand"),
        }
    }

    #[test]
    fn bad_policy_is_rejected_at_parse_time() {
        assert!(Cli::try_parse_from([
            "dykstra", "run", "--instance", "i.json", "--policy", "sideways"
        ])
        .is_err());
    }
}
