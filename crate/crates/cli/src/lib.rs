//! Experiment runner for `qthermo`: JSON-configured solver runs, parameter
//! sweeps and property suites, with CSV and JSON artifacts.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiment;
pub mod verify;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::artifacts::{run_artifacts, sweep_artifacts, ArtifactSet};
use crate::config::{ExperimentConfig, SweepConfig, SweepParameter};
use crate::error::{exit, CliError, CliResult};
use crate::experiment::{prepare, run_experiment, run_sweep, validate, validate_sweep};
use crate::verify::{run_suite, Suite};

#[derive(Debug, Parser)]
#[command(name = "qthermo", version, about = "Constrained energy minimization via chemical-potential maximization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the oracle and the configured solver repetitions.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run a property suite.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// One run per parameter value with shared seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `T`, `shots` or `eta`; overrides the config's sweep block.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Artifact directory (default: the config's output.dir, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exit with status 4 if any run fails to converge.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

fn load(common: &Common) -> CliResult<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if common.workers == 0 {
        return Err(CliError::config("--workers must be at least 1"));
    }
    Ok(config)
}

fn out_dir(common: &Common, config: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| config.output.as_ref().and_then(|o| o.dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write(set: &ArtifactSet, dir: &Path, config: &ExperimentConfig) -> CliResult<()> {
    let prefix = config
        .output
        .as_ref()
        .and_then(|o| o.prefix.clone())
        .unwrap_or_default();
    for path in set.write(dir, &prefix)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_run(common: &Common) -> CliResult<()> {
    let config = load(common)?;
    validate(&config)?;
    let prepared = prepare(&config)?;
    if let Some(o) = &prepared.oracle {
        println!(
            "oracle E = {:.10} (gap {:.1e}{})",
            o.value,
            o.gap(),
            if o.low_confidence { ", low confidence" } else { "" }
        );
    }
    let result = run_experiment(prepared, common.workers)?;
    let set = run_artifacts(&result)?;
    write(&set, &out_dir(common, &config), &config)?;
    for run in &result.runs {
        match &run.trace {
            Some(t) => println!(
                "run {}: {} after {} iterations, output {:.10}, error metric {}",
                run.run_id,
                if t.converged { "converged" } else { "not converged" },
                t.iterations(),
                t.final_output(),
                t.last().error_metric.map_or("n/a".into(), |e| format!("{e:.3e}"))
            ),
            None => println!("run {}: rejected: {}", run.run_id, run.rejection.as_deref().unwrap_or("")),
        }
    }
    let failed = result.runs.iter().filter(|r| !r.converged()).count();
    if common.strict && failed > 0 {
        return Err(CliError::NotConverged(format!("{failed} of {} runs", result.runs.len())));
    }
    Ok(())
}

fn cmd_sweep(common: &Common, param: Option<&str>, values: Option<&[f64]>) -> CliResult<()> {
    let config = load(common)?;
    let sweep = match (param, values, &config.sweep) {
        (Some(p), Some(v), _) => SweepConfig {
            parameter: p.parse::<SweepParameter>()?,
            values: v.to_vec(),
        },
        (None, None, Some(s)) => s.clone(),
        (p, v, Some(s)) => SweepConfig {
            parameter: p.map(str::parse).transpose()?.unwrap_or(s.parameter),
            values: v.map(<[f64]>::to_vec).unwrap_or_else(|| s.values.clone()),
        },
        _ => return Err(CliError::config("sweep needs --param and --values or a sweep block")),
    };
    validate(&config)?;
    validate_sweep(&config, &sweep)?;
    let prepared = prepare(&config)?;
    let result = run_sweep(prepared, sweep, common.workers)?;
    let set = sweep_artifacts(&result)?;
    write(&set, &out_dir(common, &config), &config)?;
    let mut failed = 0;
    for p in &result.points {
        let conv = p.runs.iter().filter(|r| r.converged()).count();
        failed += p.runs.len() - conv;
        let fid = p.runs.first().and_then(|r| r.fidelity);
        println!(
            "{} = {}: {conv}/{} converged{}",
            result.sweep.parameter.name(),
            p.value,
            p.runs.len(),
            fid.map_or(String::new(), |f| format!(", fidelity {f:.8}"))
        );
    }
    if common.strict && failed > 0 {
        return Err(CliError::NotConverged(format!("{failed} sweep runs")));
    }
    Ok(())
}

fn cmd_verify(suite: Suite, out: Option<&Path>, seed: u64) -> CliResult<()> {
    let report = run_suite(suite, seed)?;
    for line in report.lines() {
        println!("{line}");
    }
    if let Some(dir) = out {
        let mut set = ArtifactSet::default();
        set.push_json(
            format!("verify_{}.json", suite.name()),
            &serde_json::to_value(&report).expect("report serializes"),
        );
        for path in set.write(dir, "")? {
            println!("wrote {}", path.display());
        }
    }
    if !report.passed() {
        return Err(CliError::Verification(format!("suite {}", suite.name())));
    }
    Ok(())
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Run { common } => cmd_run(common),
        Command::Sweep { common, param, values } => cmd_sweep(common, param.as_deref(), values.as_deref()),
        Command::Verify { suite, out, seed } => cmd_verify(*suite, out.as_deref(), *seed),
    };
    match result {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
