//! Experiment configuration file (JSON, strict schema).

use std::path::Path;

use serde::{Deserialize, Serialize};

use qthermo::encoding::{BlochVector, LogicalTarget, WarmStart};
use qthermo::models::{
    build_heisenberg, build_stabilizer_system, builtin_code, Geometry, HeisenbergSpec, LogicalWord,
};
use qthermo::optimize::{OptimizerConfig, Variant};
use qthermo::oracle::DualSolveConfig;
use qthermo::shots::{PhiMode, TimeSampling};
use qthermo::{StabilizerCode, ThermoSystem};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    /// Independent solver runs; defaults to 5 for hybrid variants and 1 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Heisenberg {
        geometry: GeometryConfig,
        #[serde(default)]
        nnn: bool,
        #[serde(default = "one")]
        j: f64,
        #[serde(default = "default_lambda")]
        lambda: f64,
        targets: [f64; 3],
    },
    Stabilizer {
        code: String,
        /// Logical words as digit strings, e.g. `"22"` for `Ȳ₁Ȳ₂`.
        charges: Vec<String>,
        targets: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warm_start: Option<WarmStartConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    Line { n: usize },
    Grid { rows: usize, cols: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmStartConfig {
    /// Use `μ = −r/‖r‖, β = artanh‖r‖` instead of `μ = r, β = artanh(−‖r‖)/‖r‖`.
    #[serde(default)]
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// `first_classical`, `second_classical`, `first_hqc` or `second_hqc`.
    pub variant: String,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nesterov: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_restart: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backtrack_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian_regularization_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_newton_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots_per_iteration: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian_samples: Option<u64>,
    /// `generic` or `extensive`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_mode: Option<String>,
    /// `marginal` or `explicit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_sampling: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mu: Option<Vec<f64>>,
    /// Overrides the oracle value in the error metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            iterations: None,
            refine_iterations: None,
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Artifact directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Prepended to every artifact file name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    #[serde(rename = "T")]
    Temperature,
    #[serde(rename = "shots")]
    Shots,
    #[serde(rename = "eta")]
    Eta,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::Temperature => "T",
            Self::Shots => "shots",
            Self::Eta => "eta",
        }
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "T" | "temperature" => Ok(Self::Temperature),
            "shots" => Ok(Self::Shots),
            "eta" => Ok(Self::Eta),
            other => Err(CliError::config(format!(
                "unknown sweep parameter {other:?}; expected T, shots or eta"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_lambda() -> f64 {
    HeisenbergSpec::DEFAULT_LAMBDA
}

fn default_epsilon() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn variant(&self) -> CliResult<Variant> {
        Ok(self.solver.variant.parse()?)
    }

    pub fn repetitions(&self) -> CliResult<usize> {
        let default = if self.variant()?.is_hqc() { 5 } else { 1 };
        let reps = self.repetitions.unwrap_or(default);
        if reps == 0 {
            return Err(CliError::config("repetitions must be at least 1"));
        }
        Ok(reps)
    }

    pub fn oracle_config(&self) -> CliResult<DualSolveConfig> {
        let mut c = DualSolveConfig::default();
        if let Some(i) = self.oracle.iterations {
            c.iterations = i;
        }
        if let Some(i) = self.oracle.refine_iterations {
            c.refine_iterations = i;
        }
        if let Some(t) = self.oracle.tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::config(format!("oracle tolerance must be positive, got {t}")));
            }
            c.tolerance = t;
        }
        Ok(c)
    }
}

/// Model built from a config, plus what the runner needs beyond the system.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub system: ThermoSystem,
    pub code: Option<StabilizerCode>,
    /// Encoded target whose fidelity is reported, when the targets form a state.
    pub logical_target: Option<LogicalTarget>,
    pub warm_start: Option<WarmStart>,
}

impl ModelConfig {
    pub fn build(&self) -> CliResult<BuiltModel> {
        match self {
            Self::Heisenberg {
                geometry,
                nnn,
                j,
                lambda,
                targets,
            } => {
                let geometry = match *geometry {
                    GeometryConfig::Line { n } => Geometry::Line { n },
                    GeometryConfig::Grid { rows, cols } => Geometry::Grid { rows, cols },
                };
                let spec = HeisenbergSpec {
                    geometry,
                    nnn: *nnn,
                    j: *j,
                    lambda: *lambda,
                };
                Ok(BuiltModel {
                    system: build_heisenberg(&spec, *targets)?,
                    code: None,
                    logical_target: None,
                    warm_start: None,
                })
            }
            Self::Stabilizer {
                code,
                charges,
                targets,
                weights,
                warm_start,
            } => {
                let code = builtin_code(code)?;
                let words = charges
                    .iter()
                    .map(|w| w.parse::<LogicalWord>())
                    .collect::<qthermo::Result<Vec<_>>>()?;
                let system = build_stabilizer_system(&code, &words, targets, weights.as_deref())?;
                let logical_target =
                    LogicalTarget::new(code.k, words.iter().cloned().zip(targets.iter().copied())).ok();
                let warm_start = match warm_start {
                    None => None,
                    Some(ws) => {
                        let xyz: Vec<LogicalWord> = (1..=3u8).map(|i| LogicalWord::new(vec![i]).unwrap()).collect();
                        if code.k != 1 || words != xyz {
                            return Err(CliError::config(
                                "warm_start needs a single-logical-qubit code with charges [\"1\", \"2\", \"3\"]",
                            ));
                        }
                        let r = BlochVector::new([targets[0], targets[1], targets[2]])?;
                        Some(WarmStart::new(&r, ws.normalized)?)
                    }
                };
                Ok(BuiltModel {
                    system,
                    code: Some(code),
                    logical_target,
                    warm_start,
                })
            }
        }
    }
}

fn parse_phi_mode(s: &str) -> CliResult<PhiMode> {
    match s {
        "generic" => Ok(PhiMode::Generic),
        "extensive" => Ok(PhiMode::Extensive),
        other => Err(CliError::config(format!("unknown phi_mode {other:?}"))),
    }
}

fn parse_time_sampling(s: &str) -> CliResult<TimeSampling> {
    match s {
        "marginal" => Ok(TimeSampling::Marginal),
        "explicit" => Ok(TimeSampling::Explicit),
        other => Err(CliError::config(format!("unknown time_sampling {other:?}"))),
    }
}

impl SolverConfig {
    /// Optimizer settings for one run; `seed` is the run's derived seed.
    pub fn optimizer_config(&self, seed: u64) -> CliResult<OptimizerConfig> {
        let variant: Variant = self.variant.parse()?;
        let mut c = OptimizerConfig::new(variant, self.epsilon);
        c.temperature = self.temperature;
        c.eta = self.eta;
        c.delta = self.delta;
        if let Some(m) = self.max_iter {
            c.max_iter = m;
        }
        c.nesterov = self.nesterov;
        if let Some(r) = self.momentum_restart {
            c.momentum_restart = r;
        }
        if let Some(b) = self.backtrack_factor {
            c.backtrack_factor = b;
        }
        if let Some(z) = self.hessian_regularization_floor {
            c.hessian_regularization_floor = z;
        }
        if let Some(s) = self.max_newton_step {
            c.max_newton_step = s;
        }
        if let Some(s) = self.shots_per_iteration {
            c.shots_per_iteration = s;
        }
        if let Some(s) = self.hessian_samples {
            c.hessian_samples = s;
        }
        if let Some(m) = &self.phi_mode {
            c.phi_mode = parse_phi_mode(m)?;
        }
        if let Some(t) = &self.time_sampling {
            c.time_sampling = parse_time_sampling(t)?;
        }
        c.initial_mu = self.initial_mu.clone();
        c.reference_energy = self.reference_energy;
        c.seed = seed;
        c.validate()?;
        Ok(c)
    }
}
