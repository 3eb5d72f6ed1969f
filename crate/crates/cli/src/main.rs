use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ricci_flow::curvature::{CurvatureEngine, CurvatureError, GammaKind};
use ricci_flow::flow::{integrate, total_weight, FlowConfig, FlowError, FlowMode, Integrator, Termination};
use ricci_flow::graph::{GraphError, WeightedGraph};
use ricci_flow::surgery::{run_flow_with_surgery, SurgeryConfig, SurgeryError};
use ricci_flow::validation::{run_validation, ValidationOptions};

#[derive(Parser)]
#[command(name = "ricci-flow", version, about = "Ricci curvature, Ricci flow and flow-with-surgery on weighted graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Limit curvature and bounds for every edge.
    Curvature {
        input: PathBuf,
        #[arg(long, default_value = "reciprocal", value_parser = parse_gamma)]
        gamma: GammaKind,
        /// Also report κ_α at these idleness values.
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Integrate the flow; writes trajectory.csv and events.json.
    Flow {
        input: PathBuf,
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long, default_value_t = 1e-3)]
        mt: f64,
    },
    /// Flow with surgery; writes hierarchy.json.
    Detect {
        input: PathBuf,
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long)]
        mt: f64,
        /// Retry once from slightly perturbed weights if a segment neither
        /// converges nor hits an event.
        #[arg(long)]
        perturb: bool,
    },
    /// Run the acceptance checks.
    Validate {
        /// Only run checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long, default_value = "reciprocal", value_parser = parse_gamma)]
    gamma: GammaKind,
    #[arg(long, default_value = "normalized", value_parser = parse_mode)]
    mode: FlowMode,
    #[arg(long, default_value = "rk4", value_parser = parse_integrator)]
    integrator: Integrator,
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    #[arg(long, default_value_t = 100.0)]
    horizon: f64,
    /// Convergence threshold on max |dw/dt|; 0 runs to the horizon.
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
    #[arg(long, default_value_t = 0.1)]
    output_interval: f64,
    /// Rescale weights to total 1 before each integration segment.
    #[arg(long)]
    renormalize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl FlowArgs {
    fn config(&self, mt: f64) -> FlowConfig {
        FlowConfig {
            mode: self.mode,
            gamma: self.gamma,
            integrator: self.integrator,
            h: self.h,
            mt,
            renormalize: self.renormalize,
            horizon: self.horizon,
            tolerance: self.tolerance,
            output_interval: self.output_interval,
            ..FlowConfig::default()
        }
    }
}

fn parse_gamma(s: &str) -> Result<GammaKind, String> {
    s.parse().map_err(|e: CurvatureError| e.to_string())
}

fn parse_mode(s: &str) -> Result<FlowMode, String> {
    s.parse().map_err(|e: FlowError| e.to_string())
}

fn parse_integrator(s: &str) -> Result<Integrator, String> {
    s.parse().map_err(|e: FlowError| e.to_string())
}

const EXIT_INPUT: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_FLOW: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

fn curvature_code(e: &CurvatureError) -> u8 {
    match e {
        CurvatureError::Transport(_) | CurvatureError::Lp(_) | CurvatureError::NonLinearTail { .. } => {
            EXIT_SOLVER
        }
        _ => EXIT_INPUT,
    }
}

fn flow_code(e: &FlowError) -> u8 {
    match e {
        FlowError::StepUnderflow { .. } => EXIT_FLOW,
        FlowError::Curvature(c) => curvature_code(c),
        _ => EXIT_INPUT,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<SurgeryError>() {
            return match e {
                SurgeryError::NonConvergence { .. } | SurgeryError::SurgeryLimit(_) => EXIT_FLOW,
                SurgeryError::Flow(f) => flow_code(f),
                SurgeryError::Curvature(c) => curvature_code(c),
                SurgeryError::Graph(_) => EXIT_INPUT,
            };
        }
        if let Some(e) = cause.downcast_ref::<FlowError>() {
            return flow_code(e);
        }
        if let Some(e) = cause.downcast_ref::<CurvatureError>() {
            return curvature_code(e);
        }
        if cause.downcast_ref::<GraphError>().is_some() {
            return EXIT_INPUT;
        }
    }
    EXIT_INPUT
}

fn load(path: &Path) -> anyhow::Result<WeightedGraph> {
    WeightedGraph::load(path).with_context(|| format!("reading graph from {}", path.display()))
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn cmd_curvature(input: &Path, gamma: GammaKind, alpha: &[f64], out: &Path) -> anyhow::Result<()> {
    let g = load(input)?;
    let report = CurvatureEngine::new(&g, gamma).report(alpha)?;
    serde_json::to_writer_pretty(create(out, "curvature.json")?, &report)?;
    println!("{:>5} {:>5} {:>12} {:>12} {:>12}", "u", "v", "kappa", "lower", "upper");
    for e in &report.edges {
        println!("{:>5} {:>5} {:>12.6} {:>12.6} {:>12.6}", e.u, e.v, e.kappa, e.lower, e.upper);
    }
    Ok(())
}

fn cmd_flow(input: &Path, args: &FlowArgs, mt: f64) -> anyhow::Result<()> {
    let mut g = load(input)?;
    if args.renormalize {
        g = g.normalized();
    }
    let traj = integrate(&g, &args.config(mt))?;
    traj.write_csv(create(&args.out, "trajectory.csv")?)?;
    serde_json::to_writer_pretty(create(&args.out, "events.json")?, &traj.events_document())?;
    let ending = match traj.termination {
        Termination::Horizon => "horizon".to_string(),
        Termination::Converged => "converged".to_string(),
        Termination::Event(e) => format!("{} ({}, {})", e.kind, e.u, e.v),
    };
    println!(
        "t = {} ({ending}); final max|dw/dt| = {:.3e}; |sum w - 1| = {:.3e}; {} accepted, {} rejected steps",
        traj.final_state.t,
        traj.final_max_derivative,
        (total_weight(&traj.final_state.w) - 1.0).abs(),
        traj.metadata.accepted_steps,
        traj.metadata.rejected_steps,
    );
    Ok(())
}

fn cmd_detect(input: &Path, args: &FlowArgs, mt: f64, perturb: bool) -> anyhow::Result<()> {
    let g = load(input)?;
    let config = SurgeryConfig {
        flow: args.config(mt),
        perturb,
        seed: args.seed,
        ..SurgeryConfig::default()
    };
    let result = run_flow_with_surgery(&g, &config)?;
    let report = result.report();
    serde_json::to_writer_pretty(create(&args.out, "hierarchy.json")?, &report)?;
    for e in &report.events {
        println!("t = {:<12.6} level {} {} ({}, {})", e.t, e.level, e.kind, e.u, e.v);
    }
    println!(
        "{} events, {} levels, final minor has {} vertices and {} edges",
        report.events.len(),
        report.levels,
        result.final_graph.vertex_count(),
        result.final_graph.edge_count()
    );
    for (i, c) in report.communities.iter().enumerate() {
        let members: Vec<String> = c.iter().map(usize::to_string).collect();
        println!("community {i}: {}", members.join(" "));
    }
    Ok(())
}

fn cmd_validate(filter: Option<&str>, seed: u64) -> anyhow::Result<bool> {
    let options = ValidationOptions {
        seed,
        ..ValidationOptions::default()
    };
    let outcomes = run_validation(&options, filter);
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} checks, {} failed", outcomes.len(), failed);
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Curvature {
            input,
            gamma,
            alpha,
            out,
        } => cmd_curvature(input, *gamma, alpha, out),
        Command::Flow { input, flow, mt } => cmd_flow(input, flow, *mt),
        Command::Detect {
            input,
            flow,
            mt,
            perturb,
        } => cmd_detect(input, flow, *mt, *perturb),
        Command::Validate { filter, seed } => match cmd_validate(filter.as_deref(), *seed) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_VALIDATION),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
