//! Oracle + solver runs for `run` and `sweep`.

use std::time::Instant;

use rayon::prelude::*;

use qthermo::encoding::encoded_fidelity;
use qthermo::gibbs::{gradient_from_state, output_value, thermal_state};
use qthermo::optimize::{error_metric, run, Trace, Variant};
use qthermo::oracle::{dual_eigenvalue_solve, DualSolution};
use qthermo::shots::splitmix64;

use crate::config::{BuiltModel, ExperimentConfig, SolverConfig, SweepConfig, SweepParameter};
use crate::error::{CliError, CliResult};

/// Seed of repetition `rep`; shared by every value of a sweep.
pub fn derive_seed(master: u64, rep: usize) -> u64 {
    splitmix64(master ^ splitmix64(rep as u64 + 1))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_id: usize,
    pub seed: u64,
    /// `None` when the run was rejected before its first iteration.
    pub trace: Option<Trace>,
    pub rejection: Option<String>,
    pub fidelity: Option<f64>,
    /// Error metric at the final `μ` from exact expectations. For hybrid runs
    /// the traced metric uses the same noisy estimates that triggered the stop.
    pub exact_error_metric: Option<f64>,
}

impl RunOutcome {
    pub fn converged(&self) -> bool {
        self.trace.as_ref().is_some_and(|t| t.converged)
    }

    pub fn final_error_metric(&self) -> Option<f64> {
        self.trace.as_ref().and_then(|t| t.last().error_metric)
    }

    pub fn exact_error_metric(&self) -> Option<f64> {
        self.exact_error_metric
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub model: BuiltModel,
    pub variant: Variant,
    pub repetitions: usize,
    pub oracle: Option<DualSolution>,
    pub reference_energy: Option<f64>,
}

/// Validates everything that can be checked without running the solver.
pub fn validate(config: &ExperimentConfig) -> CliResult<(BuiltModel, Variant, usize)> {
    let model = config.model.build()?;
    let variant = config.variant()?;
    let reps = config.repetitions()?;
    config.oracle_config()?;
    let opt = config.solver.optimizer_config(config.seed)?;
    let c = model.system.num_charges();
    if let Some(mu) = &opt.initial_mu {
        if mu.len() != c {
            return Err(CliError::config(format!(
                "initial_mu has {} entries for {c} charges",
                mu.len()
            )));
        }
    }
    Ok((model, variant, reps))
}

pub fn prepare(config: &ExperimentConfig) -> CliResult<Prepared> {
    let (model, variant, repetitions) = validate(config)?;
    let oracle = if config.oracle.enabled {
        Some(dual_eigenvalue_solve(
            &model.system,
            model.system.targets(),
            &config.oracle_config()?,
        )?)
    } else {
        None
    };
    let reference_energy = config
        .solver
        .reference_energy
        .or(oracle.as_ref().map(|o| o.value));
    Ok(Prepared {
        config: config.clone(),
        model,
        variant,
        repetitions,
        oracle,
        reference_energy,
    })
}

fn single_run(prep: &Prepared, solver: &SolverConfig, run_id: usize) -> CliResult<RunOutcome> {
    let seed = derive_seed(prep.config.seed, run_id);
    let mut opt = solver.optimizer_config(seed)?;
    opt.reference_energy = prep.reference_energy;
    let system = &prep.model.system;
    let temperature = opt.temperature_for(system);
    if opt.initial_mu.is_none() {
        if let Some(ws) = &prep.model.warm_start {
            opt.initial_mu = Some(ws.chemical_potentials(temperature));
        }
    }
    let trace = match run(system, system.targets(), &opt) {
        Ok(t) => t,
        Err(qthermo::Error::Config(msg)) => {
            return Ok(RunOutcome {
                run_id,
                seed,
                trace: None,
                rejection: Some(msg),
                fidelity: None,
                exact_error_metric: None,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let state = thermal_state(system, trace.final_mu(), temperature)?;
    let fidelity = match (&prep.model.code, &prep.model.logical_target) {
        (Some(code), Some(target)) => Some(encoded_fidelity(code, target, &state.rho)?),
        _ => None,
    };
    let exact_error_metric = match prep.reference_energy {
        Some(e) => {
            let q = system.targets();
            let f = output_value(system, q, &state)?;
            Some(error_metric(e, f, &gradient_from_state(system, &state, q)?))
        }
        None => None,
    };
    Ok(RunOutcome {
        run_id,
        seed,
        trace: Some(trace),
        rejection: None,
        fidelity,
        exact_error_metric,
    })
}

fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    if workers == 0 {
        return Err(CliError::config("--workers must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub prepared: Prepared,
    pub runs: Vec<RunOutcome>,
    pub wall_time: f64,
}

pub fn run_experiment(prepared: Prepared, workers: usize) -> CliResult<RunResult> {
    let start = Instant::now();
    let pool = pool(workers)?;
    let runs = pool.install(|| {
        (0..prepared.repetitions)
            .into_par_iter()
            .map(|r| single_run(&prepared, &prepared.config.solver, r))
            .collect::<CliResult<Vec<_>>>()
    })?;
    Ok(RunResult {
        prepared,
        runs,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub runs: Vec<RunOutcome>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub prepared: Prepared,
    pub sweep: SweepConfig,
    pub points: Vec<SweepPoint>,
    pub wall_time: f64,
}

/// Solver settings for one sweep value.
pub fn sweep_solver(base: &SolverConfig, parameter: SweepParameter, value: f64) -> CliResult<SolverConfig> {
    let mut s = base.clone();
    match parameter {
        SweepParameter::Temperature => s.temperature = Some(value),
        SweepParameter::Eta => s.eta = Some(value),
        SweepParameter::Shots => {
            if !(value >= 1.0 && value.fract() == 0.0 && value <= u64::MAX as f64) {
                return Err(CliError::config(format!(
                    "shots sweep values must be positive integers, got {value}"
                )));
            }
            s.shots_per_iteration = Some(value as u64);
        }
    }
    Ok(s)
}

pub fn validate_sweep(config: &ExperimentConfig, sweep: &SweepConfig) -> CliResult<()> {
    if sweep.values.is_empty() {
        return Err(CliError::config("sweep needs at least one value"));
    }
    if sweep.parameter == SweepParameter::Shots && !config.variant()?.is_hqc() {
        return Err(CliError::config("shots sweep needs a hybrid (hqc) variant"));
    }
    for &v in &sweep.values {
        sweep_solver(&config.solver, sweep.parameter, v)?.optimizer_config(config.seed)?;
    }
    Ok(())
}

pub fn run_sweep(prepared: Prepared, sweep: SweepConfig, workers: usize) -> CliResult<SweepResult> {
    validate_sweep(&prepared.config, &sweep)?;
    let start = Instant::now();
    let solvers = sweep
        .values
        .iter()
        .map(|&v| sweep_solver(&prepared.config.solver, sweep.parameter, v))
        .collect::<CliResult<Vec<_>>>()?;
    let reps = prepared.repetitions;
    let jobs: Vec<(usize, usize)> = (0..solvers.len())
        .flat_map(|v| (0..reps).map(move |r| (v, r)))
        .collect();
    let pool = pool(workers)?;
    let outcomes = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, r)| single_run(&prepared, &solvers[v], r))
            .collect::<CliResult<Vec<_>>>()
    })?;
    let mut iter = outcomes.into_iter();
    let points = sweep
        .values
        .iter()
        .map(|&value| SweepPoint {
            value,
            runs: iter.by_ref().take(reps).collect(),
        })
        .collect();
    Ok(SweepResult {
        prepared,
        sweep,
        points,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
