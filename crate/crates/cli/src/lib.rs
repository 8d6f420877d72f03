//! Command-line front end for the experiment harness.

use std::fs;
use std::path::{Path, PathBuf};

use aialo_core::harness::{
    cdf_report, generate_instance, generate_unknown_c, run_algorithm, run_sweep, succ_elim_bench, table1_report,
    write_cdf_csv, write_suite_csv, write_sweep_csv, write_table1_csv, GeneratorConfig, SuiteConfig, SweepAxis,
};
use aialo_core::{AlgorithmId, Error, LpInstance, ToleranceParams, UnknownSet};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const THREADS_ENV: &str = "AIALO_THREADS";

/// Exit code for bad input.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "aialo", version, about = "LP experiments with noisily observed parameters")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Trials per configuration (each subcommand has its own default).
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0.1)]
    pub delta: f64,
    /// Optimality slack.
    #[arg(long, global = true, default_value_t = 0.1)]
    pub eps1: f64,
    /// Feasibility slack.
    #[arg(long, global = true, default_value_t = 0.1)]
    pub eps2: f64,
    /// Worker threads; AIALO_THREADS takes precedence.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Unknown {
    B,
    C,
}

#[derive(Debug, Args)]
pub struct ShapeOpts {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit a random instance as JSON.
    Generate {
        #[command(flatten)]
        shape: ShapeOpts,
        #[arg(long, value_enum, default_value_t = Unknown::B)]
        unknown: Unknown,
    },
    /// Run one algorithm on a saved instance and print its report as JSON.
    Run {
        #[arg(long)]
        alg: String,
        #[arg(long)]
        instance: PathBuf,
    },
    /// Vary one parameter and tabulate samples and correctness.
    Sweep {
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values; defaults to the axis' standard grid.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[command(flatten)]
        shape: ShapeOpts,
    },
    /// Mean samples per binding and non-binding constraint.
    Table1 {
        #[command(flatten)]
        shape: ShapeOpts,
    },
    /// Distribution of Ellipsoid-UCB samples relative to the binding oracle.
    Cdf {
        #[command(flatten)]
        shape: ShapeOpts,
    },
    /// Successive elimination on small unknown-c instances.
    SuccElimBench {
        #[command(flatten)]
        shape: ShapeOpts,
    },
}

/// An error paired with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

fn classify(error: anyhow::Error) -> Failure {
    let validation = match error.downcast_ref::<Error>() {
        Some(Error::InvalidParameter(_) | Error::InvalidInstance(_) | Error::UnknownParameterOnly(_)) => true,
        Some(_) => false,
        None => error.downcast_ref::<Validation>().is_some(),
    };
    Failure { code: if validation { EXIT_VALIDATION } else { EXIT_RUNTIME }, error }
}

/// Marker for input problems detected by the CLI itself.
#[derive(Debug)]
struct Validation(String);

impl std::fmt::Display for Validation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Validation {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Validation(msg.into()).into()
}

pub fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let k: usize = v.trim().parse().map_err(|_| invalid(format!("{THREADS_ENV}={v} is not a count")))?;
            Ok(Some(k))
        }
        Err(_) => Ok(flag),
    }
}

/// Execute a parsed command line.
pub fn execute(cli: Cli) -> std::result::Result<(), Failure> {
    let threads = thread_count(cli.global.threads).map_err(classify)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| classify(e.into()))?;
    let text = pool.install(|| dispatch(&cli)).map_err(classify)?;
    emit(cli.global.out.as_deref(), &text).map_err(classify)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn tolerances(g: &GlobalOpts) -> Result<ToleranceParams> {
    if !(g.eps1 > 0.0 && g.eps2 > 0.0) {
        return Err(invalid("--eps1 and --eps2 must be positive"));
    }
    Ok(ToleranceParams::new(g.delta, g.eps1, g.eps2)?)
}

fn unknown_b_config(shape: &ShapeOpts, base: GeneratorConfig, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        n: shape.n.unwrap_or(base.n),
        m: shape.m.unwrap_or(base.m),
        sigma: shape.sigma.unwrap_or(base.sigma),
        seed,
        ..base
    }
}

fn suite_config(shape: &ShapeOpts, seed: u64) -> SuiteConfig {
    let base = SuiteConfig::default();
    SuiteConfig {
        n: shape.n.unwrap_or(base.n),
        m: shape.m.unwrap_or(base.m),
        sigma: shape.sigma.unwrap_or(base.sigma),
        seed,
        ..base
    }
}

fn csv_string(write: impl FnOnce(&mut Vec<u8>) -> aialo_core::Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf)?)
}

fn load_instance(path: &Path) -> Result<LpInstance> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("reading {}: {e}", path.display())))?;
    Ok(LpInstance::from_json(&text)?)
}

fn dispatch(cli: &Cli) -> Result<String> {
    let g = &cli.global;
    let trials = |default: usize| match g.trials {
        Some(0) => Err(invalid("--trials must be at least 1")),
        Some(t) => Ok(t),
        None => Ok(default),
    };
    match &cli.command {
        Command::Generate { shape, unknown } => {
            let inst = match unknown {
                Unknown::B => generate_instance(&unknown_b_config(shape, GeneratorConfig::default(), g.seed))?,
                Unknown::C => generate_unknown_c(&suite_config(shape, g.seed))?,
            };
            Ok(inst.to_json() + "\n")
        }
        Command::Run { alg, instance } => {
            let alg: AlgorithmId = alg.parse()?;
            let inst = load_instance(instance)?;
            if inst.unknown_set() != alg.required_unknown() {
                let want = match alg.required_unknown() {
                    UnknownSet::UnknownB => "b",
                    UnknownSet::UnknownC => "c",
                };
                return Err(invalid(format!("{alg} needs an instance with unknown {want}")));
            }
            let report = run_algorithm(&inst, alg, &tolerances(g)?, g.seed)?;
            Ok(serde_json::to_string_pretty(&report)? + "\n")
        }
        Command::Sweep { axis, values, shape } => {
            let axis: SweepAxis = axis.parse()?;
            let values = values.clone().unwrap_or_else(|| axis.default_values());
            if values.is_empty() {
                return Err(invalid("--values is empty"));
            }
            let cfg = unknown_b_config(shape, GeneratorConfig::default(), g.seed);
            let rows = run_sweep(axis, &values, trials(50)?, &cfg, &tolerances(g)?)?;
            csv_string(|buf| write_sweep_csv(&rows, buf))
        }
        Command::Table1 { shape } => {
            let cfg = unknown_b_config(shape, GeneratorConfig::table1(), g.seed);
            let rows = table1_report(&cfg, &tolerances(g)?, trials(100)?)?;
            csv_string(|buf| write_table1_csv(&rows, buf))
        }
        Command::Cdf { shape } => {
            let cfg = unknown_b_config(shape, GeneratorConfig::default(), g.seed);
            let points = cdf_report(&cfg, &tolerances(g)?, trials(500)?)?;
            csv_string(|buf| write_cdf_csv(&points, buf))
        }
        Command::SuccElimBench { shape } => {
            let rows = succ_elim_bench(&suite_config(shape, g.seed), g.delta, trials(100)?)?;
            csv_string(|buf| write_suite_csv(&rows, buf))
        }
    }
}
