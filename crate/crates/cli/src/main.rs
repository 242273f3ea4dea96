//! Command-line runner: reads a JSON run configuration, executes one
//! operation and writes its results plus a manifest into an output directory.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lattice_ldp::bench::{run_suite, Effort, SuiteConfig, Tolerances};
use lattice_ldp::Model;

use crate::commands::Finished;
use crate::manifest::{sha256_hex, timestamp, Outputs, RunManifest};

#[derive(Debug)]
pub enum CliError {
    ConfigParse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    Model(lattice_ldp::Error),
    Usage(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::ConfigParse {
                line,
                column,
                field,
                message,
            } => write!(f, "config error at line {line}, column {column} (field `{field}`): {message}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<lattice_ldp::Error> for CliError {
    fn from(e: lattice_ldp::Error) -> Self {
        CliError::Model(e)
    }
}

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "lattice-ldp", version, about = "Simulation, skeleton and rate-function experiments on lattice systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args, Debug, Clone)]
struct RunFlags {
    /// Output directory.
    #[arg(long, env = "LATTICE_LDP_OUT", default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Exit non-zero when an optimiser does not converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the structural conditions and print the model constants.
    Validate(Common),
    /// Euler-Maruyama ensemble.
    Simulate(Common),
    /// Deterministic controlled path.
    Skeleton(Common),
    /// Rate of a target path, or of an endpoint half-space.
    Rate(Common),
    /// Monte-Carlo tail probabilities across noise intensities.
    LdpCurve(Common),
    /// Exponential functional and its variational limit.
    Laplace(Common),
    /// Response to oscillating controls of growing frequency.
    ProbeWeak(Common),
    /// Equicontinuity, tail mass and net size of a control level set.
    ProbeCompact(Common),
    /// Distance between the controlled noisy system and the skeleton.
    ProbeH1(Common),
    /// Run the acceptance battery.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Reduced ensembles.
    #[arg(long)]
    quick: bool,
    /// Criteria to run, e.g. `--only 1,5,12`.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<u8>>,
    /// JSON file overriding individual tolerances.
    #[arg(long)]
    tolerances: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let invalid = e.downcast_ref::<CliError>().is_some_and(|c| {
                matches!(
                    c,
                    CliError::ConfigParse { .. }
                        | CliError::Usage(_)
                        | CliError::Model(lattice_ldp::Error::ConditionViolated { .. })
                        | CliError::Model(lattice_ldp::Error::InvalidConfig(_))
                )
            });
            ExitCode::from(if invalid { EXIT_INVALID } else { EXIT_FAILURE })
        }
    }
}

fn configure_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let (name, common) = match &cli.command {
        Command::Bench(args) => return bench(args),
        Command::Validate(c) => ("validate", c),
        Command::Simulate(c) => ("simulate", c),
        Command::Skeleton(c) => ("skeleton", c),
        Command::Rate(c) => ("rate", c),
        Command::LdpCurve(c) => ("ldp-curve", c),
        Command::Laplace(c) => ("laplace", c),
        Command::ProbeWeak(c) => ("probe-weak", c),
        Command::ProbeCompact(c) => ("probe-compact", c),
        Command::ProbeH1(c) => ("probe-h1", c),
    };
    configure_threads(common.run.threads)?;
    let started = timestamp();
    let bytes = std::fs::read(&common.config)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", common.config.display()))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Usage(format!("{} is not UTF-8", common.config.display())))?;
    let config = config::parse(&text)?;
    let model = Model::new(config.model.clone()).map_err(CliError::from)?;
    let seed = common.run.seed.or(config.seed);

    let finished: Finished = match &cli.command {
        Command::Validate(_) => commands::validate(&model)?,
        Command::Simulate(_) => commands::simulate(&config, &model, seed)?,
        Command::Skeleton(_) => commands::skeleton(&config, &model)?,
        Command::Rate(_) => commands::rate(&config, &model)?,
        Command::LdpCurve(_) => commands::ldp(&config, &model, seed)?,
        Command::Laplace(_) => commands::laplace(&config, &model, seed)?,
        Command::ProbeWeak(_) => commands::probe_weak(&config, &model)?,
        Command::ProbeCompact(_) => commands::probe_compact(&config, &model, seed)?,
        Command::ProbeH1(_) => commands::probe_h1(&config, &model, seed)?,
        Command::Bench(_) => unreachable!("handled above"),
    };
    println!("{}", finished.summary);

    let manifest = RunManifest {
        operation: name.to_string(),
        config_path: Some(common.config.clone()),
        config_hash: Some(sha256_hex(&bytes)),
        seed,
        threads: common.run.threads,
        parameters: serde_json::to_value(&config)?,
        started,
        finished: timestamp(),
        outputs: finished.outputs.names(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    persist(&common.run.out, finished.outputs, &manifest)?;

    if common.run.strict && !finished.converged {
        eprintln!("error: optimiser did not converge (--strict)");
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(0)
}

fn persist(dir: &Path, mut outputs: Outputs, manifest: &RunManifest) -> anyhow::Result<()> {
    outputs.add_json("manifest.json", manifest)?;
    outputs.write(dir)?;
    eprintln!("wrote {} file(s) to {}", outputs.names().len(), dir.display());
    Ok(())
}

fn bench(args: &BenchArgs) -> anyhow::Result<u8> {
    configure_threads(args.run.threads)?;
    let started = timestamp();
    let (tolerances, tol_hash) = match &args.tolerances {
        Some(path) => {
            let bytes = std::fs::read(path)?;
            let mut de = serde_json::Deserializer::from_slice(&bytes);
            let tol: Tolerances = serde_path_to_error::deserialize(&mut de).map_err(|e| CliError::ConfigParse {
                line: e.inner().line(),
                column: e.inner().column(),
                field: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
            (tol, Some(sha256_hex(&bytes)))
        }
        None => (Tolerances::default(), None),
    };
    let suite = SuiteConfig {
        seed: args.run.seed.unwrap_or(SuiteConfig::default().seed),
        effort: if args.quick { Effort::Quick } else { Effort::Full },
        only: args.only.clone(),
    };
    let report = run_suite(&suite, &tolerances);
    for r in &report.results {
        println!("{}", r.line());
    }
    let failures = report.failures();
    println!("{} of {} criteria passed", report.results.len() - failures, report.results.len());

    let mut outputs = Outputs::default();
    outputs.add("summary.csv", report.to_csv());
    let manifest = RunManifest {
        operation: "bench".into(),
        config_path: args.tolerances.clone(),
        config_hash: tol_hash,
        seed: Some(suite.seed),
        threads: args.run.threads,
        parameters: serde_json::json!({
            "effort": if args.quick { "quick" } else { "full" },
            "only": args.only,
            "tolerances": tolerances,
        }),
        started,
        finished: timestamp(),
        outputs: outputs.names(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    persist(&args.run.out, outputs, &manifest)?;
    Ok(if failures == 0 { 0 } else { EXIT_FAILURE })
}
