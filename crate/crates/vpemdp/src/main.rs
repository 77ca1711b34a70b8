//! Command-line front end: validate, expect, varmin, saturation, vpe, eval,
//! simulate, frontier, gadget.
//!
//! Exit codes: 0 success (and threshold holds), 1 threshold fails, 2 input or
//! parse error, 3 unsupported structure (0-end-component, negative weights
//! for VPE, infinite expectation), 4 threshold undecided at the given bound.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vpemdp::expectation::{solve_expectation, Direction, SolveError};
use vpemdp::gadget::{build_gadget, GadgetError};
use vpemdp::model::{find_end_components, Mdp, ModelError};
use vpemdp::numeric::{approx_decimal, format_rational, parse_rational, Rational};
use vpemdp::scheduler::{
    simulate, SchedulerError, SimulationConfig, WeightBasedScheduler,
};
use vpemdp::variance::min_variance_among_optimal;
use vpemdp::vpe::{
    frontier, maximize_vpe, saturation_point, threshold, ThresholdOutcome, VpeError, VpeOptions,
    VpeReport,
};

#[derive(Parser)]
#[command(
    name = "vpemdp",
    version,
    about = "Exact expectation, variance and variance-penalized expectation of accumulated weights in MDPs",
    max_term_width = 100
)]
struct Cli {
    /// Cap on worker threads (enumeration and simulation); results do not
    /// depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct DirectionFlag {
    /// Maximize the expected accumulated weight.
    #[arg(long)]
    max: bool,
    /// Minimize the expected accumulated weight.
    #[arg(long)]
    min: bool,
}

impl DirectionFlag {
    fn direction(&self) -> Direction {
        if self.max {
            Direction::Maximize
        } else {
            Direction::Minimize
        }
    }
}

fn rational_flag(text: &str) -> Result<Rational, String> {
    parse_rational(text).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model file.
    Validate { file: PathBuf },
    /// Optimal expected accumulated weight per state, with a witness policy.
    Expect {
        #[command(flatten)]
        direction: DirectionFlag,
        file: PathBuf,
    },
    /// Variance-minimal scheduler among the expectation-optimal ones.
    Varmin {
        #[command(flatten)]
        direction: DirectionFlag,
        /// Write the scheduler in the scheduler file format.
        #[arg(long)]
        out: Option<PathBuf>,
        file: PathBuf,
    },
    /// Saturation-point constants for the given penalty.
    Saturation {
        #[arg(long, value_parser = rational_flag)]
        lambda: Rational,
        file: PathBuf,
    },
    /// Maximal variance-penalized expectation over weight-based schedulers.
    Vpe {
        #[arg(long, value_parser = rational_flag)]
        lambda: Rational,
        /// Enumeration bound on tracked weight (defaults to the saturation
        /// point; values below it yield certified lower bounds).
        #[arg(long)]
        bound: Option<u64>,
        /// Optimize -E - lambda*V instead of E - lambda*V.
        #[arg(long)]
        minimize_expectation: bool,
        /// Decide `optimum >= threshold` (exit 0 holds, 1 fails, 4 undecided).
        #[arg(long, value_parser = rational_flag)]
        threshold: Option<Rational>,
        /// Write the optimal scheduler in the scheduler file format.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append one `lambda,expectation,variance,vpe` row to a CSV file.
        #[arg(long)]
        emit_frontier_csv: Option<PathBuf>,
        file: PathBuf,
    },
    /// Exact VPE of a scheduler given in the scheduler file format.
    Eval {
        #[arg(long, value_parser = rational_flag)]
        lambda: Rational,
        #[arg(long)]
        scheduler: PathBuf,
        file: PathBuf,
    },
    /// Seeded Monte Carlo simulation of a scheduler.
    Simulate {
        #[arg(long)]
        scheduler: PathBuf,
        #[arg(long)]
        samples: u64,
        #[arg(long)]
        seed: u64,
        file: PathBuf,
    },
    /// One VPE maximization per penalty; prints CSV rows.
    Frontier {
        #[arg(long, value_delimiter = ',', value_parser = rational_flag)]
        lambdas: Vec<Rational>,
        #[arg(long)]
        bound: Option<u64>,
        file: PathBuf,
    },
    /// Build an exact-weight reachability reduction instance.
    Gadget {
        #[arg(long)]
        target: u64,
        /// Where to write the constructed model.
        #[arg(long)]
        out: PathBuf,
        file: PathBuf,
    },
}

enum CliError {
    Io(String),
    Model(ModelError),
    Scheduler(SchedulerError),
    Solve(SolveError),
    Vpe(VpeError),
    Gadget(GadgetError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) | CliError::Model(_) => 2,
            CliError::Scheduler(e) => match e {
                SchedulerError::EndComponentPresent
                | SchedulerError::NegativeWeight
                | SchedulerError::StepLimitExceeded(_) => 3,
                _ => 2,
            },
            CliError::Solve(_) => 3,
            CliError::Vpe(e) => match e {
                VpeError::EndComponentPresent | VpeError::NegativeWeight | VpeError::Solve(_) => 3,
                VpeError::Scheduler(
                    SchedulerError::EndComponentPresent
                    | SchedulerError::NegativeWeight
                    | SchedulerError::StepLimitExceeded(_),
                ) => 3,
                _ => 2,
            },
            CliError::Gadget(e) => match e {
                GadgetError::EpsOutOfRange => 2,
                _ => 3,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Io(m) => m.clone(),
            CliError::Model(e) => e.to_string(),
            CliError::Scheduler(e) => e.to_string(),
            CliError::Solve(e) => e.to_string(),
            CliError::Vpe(e) => e.to_string(),
            CliError::Gadget(e) => e.to_string(),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Model(e)
    }
}
impl From<SchedulerError> for CliError {
    fn from(e: SchedulerError) -> Self {
        CliError::Scheduler(e)
    }
}
impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError::Solve(e)
    }
}
impl From<VpeError> for CliError {
    fn from(e: VpeError) -> Self {
        CliError::Vpe(e)
    }
}
impl From<GadgetError> for CliError {
    fn from(e: GadgetError) -> Self {
        CliError::Gadget(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<Mdp, CliError> {
    Ok(Mdp::parse(&read_file(path)?)?)
}

/// `<fraction> (~<decimal>)`; comparisons and files of record always use the
/// fraction, the decimal is display only.
fn fmt_value(r: &Rational) -> String {
    format!("{} (~{})", format_rational(r), approx_decimal(r))
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Maximize => "max",
        Direction::Minimize => "min",
    }
}

fn print_report(report: &VpeReport, m: &Mdp) {
    println!("lambda = {}", fmt_value(&report.lambda));
    println!(
        "objective = {}",
        match report.direction {
            Direction::Maximize => "E - lambda*V",
            Direction::Minimize => "-E - lambda*V",
        }
    );
    println!("bound = {}", report.bound_used);
    println!("exact = {}", report.exact);
    println!("E = {}", fmt_value(&report.moments.expectation));
    println!("V = {}", fmt_value(&report.moments.variance));
    println!("vpe = {}", fmt_value(&report.value));
    println!("scheduler:");
    print!("{}", report.scheduler.serialize(m));
}

fn frontier_row(report: &VpeReport) -> String {
    format!(
        "{},{},{},{}",
        format_rational(&report.lambda),
        format_rational(&report.moments.expectation),
        format_rational(&report.moments.variance),
        format_rational(&report.value)
    )
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::Validate { file } => {
            let m = load_model(&file)?;
            println!(
                "valid: {} states, {} actions, {} end components",
                m.num_states(),
                m.num_actions(),
                find_end_components(&m).len()
            );
            Ok(0)
        }

        Command::Expect { direction, file } => {
            let m = load_model(&file)?;
            let dir = direction.direction();
            let sol = solve_expectation(&m, dir)?;
            println!("direction {}", direction_name(dir));
            for s in 0..m.num_states() {
                println!("E {} = {}", m.state_name(s), fmt_value(&sol.values[s]));
            }
            for s in 0..m.num_states() {
                if let Some(a) = sol.witness.action(s) {
                    println!("witness {} -> {}", m.state_name(s), m.actions(s)[a].label);
                }
            }
            Ok(0)
        }

        Command::Varmin {
            direction,
            out,
            file,
        } => {
            let m = load_model(&file)?;
            let dir = direction.direction();
            let sol = min_variance_among_optimal(&m, dir)?;
            println!("direction {}", direction_name(dir));
            for s in 0..m.num_states() {
                println!(
                    "state {}: E = {}, V = {}, q = {}",
                    m.state_name(s),
                    fmt_value(&sol.expectation[s]),
                    fmt_value(&sol.variance[s]),
                    fmt_value(&sol.second_moment[s])
                );
            }
            for s in 0..m.num_states() {
                if let Some(a) = sol.scheduler.action(s) {
                    println!("scheduler {} -> {}", m.state_name(s), m.actions(s)[a].label);
                }
            }
            if let Some(path) = out {
                let sched = WeightBasedScheduler::from_memoryless(sol.scheduler.to_scheduler(), 1);
                write_file(&path, &sched.serialize(&m))?;
            }
            Ok(0)
        }

        Command::Saturation { lambda, file } => {
            let m = load_model(&file)?;
            let c = saturation_point(&m, &lambda)?;
            println!("n = {}", c.n);
            println!("W = {}", c.max_weight);
            println!("eps = {}", fmt_value(&c.eps));
            match &c.delta {
                Some(d) => println!("delta = {}", fmt_value(d)),
                None => println!("delta = none"),
            }
            println!("U1 = {}", fmt_value(&c.u1));
            println!("U2 = {}", fmt_value(&c.u2));
            println!("b_half = {}", fmt_value(&c.b_half));
            println!("B_half = {}", fmt_value(&c.big_b_half));
            println!("K = {}", c.k);
            println!("degenerate = {}", c.degenerate);
            Ok(0)
        }

        Command::Vpe {
            lambda,
            bound,
            minimize_expectation,
            threshold: theta,
            out,
            emit_frontier_csv,
            file,
        } => {
            let m = load_model(&file)?;
            let opts = VpeOptions {
                bound,
                direction: if minimize_expectation {
                    Direction::Minimize
                } else {
                    Direction::Maximize
                },
                jobs,
                ..VpeOptions::default()
            };
            let (outcome, report) = match &theta {
                Some(theta) => {
                    let (outcome, report) = threshold(&m, &lambda, theta, &opts)?;
                    (Some(outcome), report)
                }
                None => (None, maximize_vpe(&m, &lambda, &opts)?),
            };
            print_report(&report, &m);
            if let Some(path) = out {
                write_file(&path, &report.scheduler.serialize(&m))?;
            }
            if let Some(path) = emit_frontier_csv {
                write_file(
                    &path,
                    &format!("lambda,expectation,variance,vpe\n{}\n", frontier_row(&report)),
                )?;
            }
            match outcome {
                None => Ok(0),
                Some(outcome) => {
                    println!("threshold = {}", fmt_value(theta.as_ref().unwrap()));
                    match outcome {
                        ThresholdOutcome::Holds => {
                            println!("threshold: holds");
                            Ok(0)
                        }
                        ThresholdOutcome::Fails => {
                            println!("threshold: fails");
                            Ok(1)
                        }
                        ThresholdOutcome::LowerBoundOnly(v) => {
                            println!(
                                "threshold: undecided (best value {} is a lower bound; bound < K)",
                                fmt_value(&v)
                            );
                            Ok(4)
                        }
                    }
                }
            }
        }

        Command::Eval {
            lambda,
            scheduler,
            file,
        } => {
            let m = load_model(&file)?;
            let sched = WeightBasedScheduler::parse(&m, &read_file(&scheduler)?)?;
            let report = vpemdp::vpe::vpe_of_scheduler(&m, &lambda, &sched)?;
            print_report(&report, &m);
            Ok(0)
        }

        Command::Simulate {
            scheduler,
            samples,
            seed,
            file,
        } => {
            let m = load_model(&file)?;
            let sched = WeightBasedScheduler::parse(&m, &read_file(&scheduler)?)?;
            let config = SimulationConfig {
                samples,
                seed,
                jobs,
                ..SimulationConfig::default()
            };
            let summary = simulate(&m, &sched, &config)?;
            println!("rng = {}", summary.rng_id);
            println!("samples = {}", summary.samples);
            println!("seed = {}", summary.seed);
            println!("mean = {}", fmt_value(&summary.mean));
            println!("variance = {}", fmt_value(&summary.variance));
            println!("min = {}", summary.min);
            println!("max = {}", summary.max);
            println!("histogram:");
            println!("weight,count");
            for (w, c) in &summary.histogram {
                println!("{w},{c}");
            }
            Ok(0)
        }

        Command::Frontier {
            lambdas,
            bound,
            file,
        } => {
            let m = load_model(&file)?;
            let opts = VpeOptions {
                bound,
                jobs,
                ..VpeOptions::default()
            };
            let rows = frontier(&m, &lambdas, &opts)?;
            let mut out = String::from("lambda,expectation,variance,vpe\n");
            for report in &rows {
                let _ = writeln!(out, "{}", frontier_row(report));
            }
            print!("{out}");
            Ok(0)
        }

        Command::Gadget { target, out, file } => {
            let m = load_model(&file)?;
            let g = build_gadget(&m, target)?;
            write_file(&out, &g.mdp.serialize())?;
            println!("lambda {}", format_rational(&g.lambda));
            println!("theta {}", format_rational(&g.theta));
            Ok(0)
        }
    }
}
