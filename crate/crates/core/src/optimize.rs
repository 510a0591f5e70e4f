//! First- and second-order ascent on the dual objective, classical (exact
//! expectations) or hybrid (shot-noise estimates).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gibbs::{hessian_from_state, objective_from_state, smoothness_l, temperature_for_epsilon, thermal_state};
use crate::models::ThermoSystem;
use crate::shots::{estimate_hessian, estimate_observable, stream_ids, HessianSampling, PhiMode, RngStreamSpec, TimeSampling};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    FirstClassical,
    SecondClassical,
    FirstHqc,
    SecondHqc,
}

impl Variant {
    pub fn is_second_order(self) -> bool {
        matches!(self, Self::SecondClassical | Self::SecondHqc)
    }

    pub fn is_hqc(self) -> bool {
        matches!(self, Self::FirstHqc | Self::SecondHqc)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::FirstClassical => "first_classical",
            Self::SecondClassical => "second_classical",
            Self::FirstHqc => "first_hqc",
            Self::SecondHqc => "second_hqc",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_classical" => Ok(Self::FirstClassical),
            "second_classical" => Ok(Self::SecondClassical),
            "first_hqc" => Ok(Self::FirstHqc),
            "second_hqc" => Ok(Self::SecondHqc),
            other => Err(Error::Config(format!(
                "unknown variant {other:?}; expected first_classical, second_classical, first_hqc or second_hqc"
            ))),
        }
    }
}

pub const DEFAULT_FIRST_ORDER_SHOTS: u64 = 10_000;
pub const DEFAULT_HESSIAN_SAMPLES: u64 = 10_000_000;

/// Solver settings. `None` fields take variant-dependent defaults.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub variant: Variant,
    /// Target additive error; sets `T = ε/(n ln 2)` unless `temperature` is given.
    pub epsilon: f64,
    pub temperature: Option<f64>,
    /// Step size; defaults to `0.9/L` for first order and 1 for second order.
    pub eta: Option<f64>,
    /// Gradient-norm threshold; defaults to `1e−4` classical and `1e−2` hybrid.
    pub delta: Option<f64>,
    pub max_iter: usize,
    /// Defaults to on for first-order classical, off otherwise.
    pub nesterov: Option<bool>,
    /// Reset Nesterov momentum whenever the gradient opposes the last step.
    pub momentum_restart: bool,
    pub backtrack_factor: f64,
    /// `ζ₀` in the hybrid Hessian shift `ζ = max(0, λ_max(Ĥ) + ζ₀)`.
    pub hessian_regularization_floor: f64,
    /// Largest Newton step `‖ηΔ‖₂`; longer steps are scaled down.
    pub max_newton_step: f64,
    pub seed: u64,
    /// Shots per iteration for the energy and charge estimates, split evenly
    /// over all Pauli terms.
    pub shots_per_iteration: u64,
    /// Hadamard-test samples per iteration for the Hessian estimate, split
    /// evenly over Pauli pairs.
    pub hessian_samples: u64,
    pub phi_mode: PhiMode,
    pub time_sampling: TimeSampling,
    pub initial_mu: Option<Vec<f64>>,
    /// Constrained ground energy used for the error metric.
    pub reference_energy: Option<f64>,
}

impl OptimizerConfig {
    pub fn new(variant: Variant, epsilon: f64) -> Self {
        Self {
            variant,
            epsilon,
            temperature: None,
            eta: None,
            delta: None,
            max_iter: if variant.is_second_order() { 100 } else { 20_000 },
            nesterov: None,
            momentum_restart: false,
            backtrack_factor: 0.5,
            hessian_regularization_floor: 1e-3,
            max_newton_step: 1.0,
            seed: 0,
            shots_per_iteration: DEFAULT_FIRST_ORDER_SHOTS,
            hessian_samples: DEFAULT_HESSIAN_SAMPLES,
            phi_mode: PhiMode::Generic,
            time_sampling: TimeSampling::Marginal,
            initial_mu: None,
            reference_energy: None,
        }
    }

    pub fn temperature_for(&self, system: &ThermoSystem) -> f64 {
        self.temperature
            .unwrap_or_else(|| temperature_for_epsilon(self.epsilon, system.num_qubits()))
    }

    pub fn delta(&self) -> f64 {
        self.delta
            .unwrap_or(if self.variant.is_hqc() { 1e-2 } else { 1e-4 })
    }

    pub fn nesterov(&self) -> bool {
        self.nesterov.unwrap_or(self.variant == Variant::FirstClassical)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
            }
        };
        if self.temperature.is_none() {
            positive("epsilon", self.epsilon)?;
        }
        if let Some(t) = self.temperature {
            positive("temperature", t)?;
        }
        if let Some(eta) = self.eta {
            positive("eta", eta)?;
        }
        positive("delta", self.delta())?;
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::Config(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        if !(self.hessian_regularization_floor >= 0.0 && self.hessian_regularization_floor.is_finite()) {
            return Err(Error::Config("hessian_regularization_floor must be non-negative".into()));
        }
        positive("max_newton_step", self.max_newton_step)?;
        if self.variant.is_hqc() && self.shots_per_iteration == 0 {
            return Err(Error::Config("shots_per_iteration must be positive".into()));
        }
        if self.variant == Variant::SecondHqc && self.hessian_samples == 0 {
            return Err(Error::Config("hessian_samples must be positive".into()));
        }
        Ok(())
    }
}

/// Expectation estimates at one point.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub energy: f64,
    pub charges: Vec<f64>,
    /// Exact dual objective when available.
    pub objective: Option<f64>,
    pub shots: u64,
}

/// Source of `⟨H⟩`, `⟨Q_i⟩` and the Hessian at a given `μ`. `call` numbers
/// the evaluation so stochastic estimators can derive independent streams.
pub trait Estimator {
    fn expectations(&self, system: &ThermoSystem, q: &[f64], mu: &[f64], temperature: f64, call: u64)
        -> Result<Estimates>;

    fn hessian(&self, system: &ThermoSystem, mu: &[f64], temperature: f64, call: u64) -> Result<(DMatrix<f64>, u64)>;

    fn is_exact(&self) -> bool;
}

/// Exact thermal expectations.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactEstimator;

impl Estimator for ExactEstimator {
    fn expectations(&self, system: &ThermoSystem, q: &[f64], mu: &[f64], temperature: f64, _call: u64) -> Result<Estimates> {
        let state = thermal_state(system, mu, temperature)?;
        Ok(Estimates {
            energy: state.expectation(system.hamiltonian())?,
            charges: state.charge_expectations(system)?,
            objective: Some(objective_from_state(&state, q)),
            shots: 0,
        })
    }

    fn hessian(&self, system: &ThermoSystem, mu: &[f64], temperature: f64, _call: u64) -> Result<(DMatrix<f64>, u64)> {
        let state = thermal_state(system, mu, temperature)?;
        Ok((hessian_from_state(system, &state)?, 0))
    }

    fn is_exact(&self) -> bool {
        true
    }
}

/// Simulated measurements on the exact thermal state.
#[derive(Debug, Clone)]
pub struct ShotEstimator {
    pub streams: RngStreamSpec,
    pub shots_per_iteration: u64,
    pub hessian_samples: u64,
    pub phi_mode: PhiMode,
    pub time_sampling: TimeSampling,
}

impl ShotEstimator {
    pub fn from_config(config: &OptimizerConfig) -> Self {
        Self {
            streams: RngStreamSpec::new(config.seed),
            shots_per_iteration: config.shots_per_iteration,
            hessian_samples: config.hessian_samples,
            phi_mode: config.phi_mode,
            time_sampling: config.time_sampling,
        }
    }

    fn shots_per_term(&self, system: &ThermoSystem) -> u64 {
        let terms: usize = std::iter::once(system.hamiltonian())
            .chain(system.charges())
            .map(|o| o.terms().iter().filter(|(_, w)| !w.is_identity()).count())
            .sum();
        (self.shots_per_iteration / terms.max(1) as u64).max(1)
    }
}

impl Estimator for ShotEstimator {
    fn expectations(&self, system: &ThermoSystem, _q: &[f64], mu: &[f64], temperature: f64, call: u64) -> Result<Estimates> {
        let state = thermal_state(system, mu, temperature)?;
        let per_term = self.shots_per_term(system);
        let mut shots = 0;
        let mut measure = |obs: &crate::operators::Observable, id: u64| {
            let mut rng = self.streams.stream(call, id, 0);
            shots += per_term * obs.terms().iter().filter(|(_, w)| !w.is_identity()).count() as u64;
            estimate_observable(&state.rho, obs, per_term, &mut rng)
        };
        let energy = measure(system.hamiltonian(), stream_ids::HAMILTONIAN)?;
        let charges = system
            .charges()
            .iter()
            .enumerate()
            .map(|(i, q)| measure(q, stream_ids::charge(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Estimates {
            energy,
            charges,
            objective: None,
            shots,
        })
    }

    fn hessian(&self, system: &ThermoSystem, mu: &[f64], temperature: f64, call: u64) -> Result<(DMatrix<f64>, u64)> {
        let pairs: usize = system.charges().iter().map(|q| q.terms().len()).sum::<usize>().pow(2);
        let time_samples = (self.hessian_samples / pairs.max(1) as u64).max(1);
        let shots = self.shots_per_term(system);
        let sampling = HessianSampling {
            time_samples,
            shots,
            mode: self.phi_mode,
            time_sampling: self.time_sampling,
        };
        let h = estimate_hessian(system, mu, temperature, &sampling, &self.streams, call)?;
        let product_terms: u64 = system.charges().iter().map(|q| q.terms().len() as u64).sum();
        let c = system.num_charges() as u64;
        Ok((h, time_samples * pairs as u64 + 2 * c * c * shots * product_terms))
    }

    fn is_exact(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Start,
    Gradient,
    Newton,
    /// Newton step replaced by a gradient step after a failed solve.
    Fallback,
}

impl StepKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Start => "start",
            Self::Gradient => "gradient",
            Self::Newton => "newton",
            Self::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub mu: Vec<f64>,
    /// `μ·q + H̃ − μ·Q̃`.
    pub f_estimate: f64,
    /// Exact dual objective `f(μ)` when the estimator is exact.
    pub objective: Option<f64>,
    pub grad_norm: f64,
    pub error_metric: Option<f64>,
    pub step_size: f64,
    pub backtracks: usize,
    pub kind: StepKind,
    /// Shots consumed in this iteration, including rejected trial points.
    pub shots: u64,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub variant: Variant,
    pub temperature: f64,
    pub lipschitz: f64,
    pub eta: f64,
    pub delta: f64,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl Trace {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trace has a starting record")
    }

    pub fn final_output(&self) -> f64 {
        self.last().f_estimate
    }

    pub fn final_mu(&self) -> &[f64] {
        &self.last().mu
    }

    /// Iterations taken: index of the last record.
    pub fn iterations(&self) -> usize {
        self.last().iter
    }

    pub fn total_shots(&self) -> u64 {
        self.records.iter().map(|r| r.shots).sum()
    }
}

/// `|E − f̃| + ‖∇̃‖₂`.
pub fn error_metric(e_ref: f64, f_estimate: f64, grad: &[f64]) -> f64 {
    (e_ref - f_estimate).abs() + norm(grad)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Point {
    mu: Vec<f64>,
    grad: Vec<f64>,
    f_estimate: f64,
    objective: Option<f64>,
    shots: u64,
}

struct Driver<'a, E: Estimator + ?Sized> {
    system: &'a ThermoSystem,
    q: &'a [f64],
    config: &'a OptimizerConfig,
    estimator: &'a E,
    temperature: f64,
    calls: u64,
}

impl<E: Estimator + ?Sized> Driver<'_, E> {
    fn evaluate(&mut self, mu: Vec<f64>) -> Result<Point> {
        let est = self
            .estimator
            .expectations(self.system, self.q, &mu, self.temperature, self.calls)?;
        self.calls += 1;
        let grad: Vec<f64> = self.q.iter().zip(&est.charges).map(|(q, e)| q - e).collect();
        let f_estimate = dot(&mu, self.q) + est.energy - dot(&mu, &est.charges);
        if !f_estimate.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite estimate at μ = {mu:?}")));
        }
        Ok(Point {
            mu,
            grad,
            f_estimate,
            objective: est.objective,
            shots: est.shots,
        })
    }

    fn record(&self, iter: usize, p: &Point, step_size: f64, backtracks: usize, kind: StepKind, shots: u64) -> IterationRecord {
        let grad_norm = norm(&p.grad);
        IterationRecord {
            iter,
            mu: p.mu.clone(),
            f_estimate: p.f_estimate,
            objective: p.objective,
            grad_norm,
            error_metric: self
                .config
                .reference_energy
                .map(|e| error_metric(e, p.f_estimate, &p.grad)),
            step_size,
            backtracks,
            kind,
            shots,
        }
    }
}

fn setup(system: &ThermoSystem, q: &[f64], config: &OptimizerConfig) -> Result<(f64, f64, Vec<f64>)> {
    config.validate()?;
    let c = system.num_charges();
    if q.len() != c {
        return Err(Error::Structural(format!("{} targets for {c} charges", q.len())));
    }
    let mu0 = match &config.initial_mu {
        Some(m) if m.len() != c => {
            return Err(Error::Structural(format!("initial μ has {} entries for {c} charges", m.len())))
        }
        Some(m) => m.clone(),
        None => vec![0.0; c],
    };
    let t = config.temperature_for(system);
    let l = smoothness_l(system, t)?;
    Ok((t, l, mu0))
}

/// Gradient ascent `μ ← μ + η∇f`, optionally with Nesterov momentum. With
/// momentum the recorded point is the extrapolated one, where the gradient
/// is evaluated. With `momentum_restart`, momentum resets whenever the
/// gradient opposes the last step.
pub fn run_first_order<E: Estimator + ?Sized>(
    system: &ThermoSystem,
    q: &[f64],
    config: &OptimizerConfig,
    estimator: &E,
) -> Result<Trace> {
    let (temperature, l, mu0) = setup(system, q, config)?;
    let eta = config.eta.unwrap_or(0.9 / l);
    if config.variant == Variant::FirstClassical && eta >= 1.0 / l {
        return Err(Error::Config(format!(
            "first-order step size η = {eta} must be below 1/L = {}",
            1.0 / l
        )));
    }
    let delta = config.delta();
    let nesterov = config.nesterov();
    let mut driver = Driver {
        system,
        q,
        config,
        estimator,
        temperature,
        calls: 0,
    };
    let mut y = driver.evaluate(mu0.clone())?;
    let mut records = vec![driver.record(0, &y, 0.0, 0, StepKind::Start, y.shots)];
    let mut converged = norm(&y.grad) <= delta;
    let mut x = mu0;
    let mut k = 0usize;
    let mut m = 0;
    while !converged && m < config.max_iter {
        m += 1;
        let x_new: Vec<f64> = y.mu.iter().zip(&y.grad).map(|(v, g)| v + eta * g).collect();
        let step: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let next = if nesterov {
            if config.momentum_restart && dot(&y.grad, &step) < 0.0 {
                k = 0;
            }
            k += 1;
            let beta = (k as f64 - 1.0) / (k as f64 + 2.0);
            x_new.iter().zip(&step).map(|(a, s)| a + beta * s).collect()
        } else {
            x_new.clone()
        };
        x = x_new;
        y = driver.evaluate(next)?;
        records.push(driver.record(m, &y, eta, 0, StepKind::Gradient, y.shots));
        converged = norm(&y.grad) <= delta;
    }
    Ok(Trace {
        variant: config.variant,
        temperature,
        lipschitz: l,
        eta,
        delta,
        records,
        converged,
    })
}

const MAX_BACKTRACKS: usize = 30;

/// Hessian eigenvalues above `−SINGULAR_FLOOR·L` count as singular.
const SINGULAR_FLOOR: f64 = 1e-9;

/// Ascent direction `−∇²f⁻¹∇f` from the eigen-decomposition, with each
/// curvature `−λ_k` raised to at least `floor`. Near-singular directions thus
/// become long gradient steps (flagged by the returned boolean) instead of
/// steps of arbitrary sign.
fn newton_direction(h: &DMatrix<f64>, grad: &[f64], floor: f64) -> Option<(Vec<f64>, bool)> {
    let eig = h.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let g = DVector::from_column_slice(grad);
    let mut d = DVector::zeros(grad.len());
    let mut clamped = false;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let curvature = if -lam < floor {
            clamped = true;
            floor
        } else {
            -lam
        };
        d += v * (v.dot(&g) / curvature);
    }
    Some((d.iter().copied().collect(), clamped))
}

/// Newton ascent `μ ← μ − ηΔ` with `∇²f Δ = ∇f`. A step is retried with
/// `η ← backtrack_factor·η` while it increases the gradient norm (with exact
/// expectations, while it fails to increase `f`); after two
/// consecutive unreduced steps `η` grows back by `1/backtrack_factor`, up to
/// its initial value. Steps are capped at `max_newton_step`, since the
/// Hessian nearly vanishes wherever the thermal state is close to pure. If
/// every retry fails, the trial with the smallest gradient norm is kept (the one with the largest `f`
/// under exact expectations) and `η` is reset.
/// The hybrid variant solves with `Ĥ − ζI`.
pub fn run_second_order<E: Estimator + ?Sized>(
    system: &ThermoSystem,
    q: &[f64],
    config: &OptimizerConfig,
    estimator: &E,
) -> Result<Trace> {
    let (temperature, l, mu0) = setup(system, q, config)?;
    let eta0 = config.eta.unwrap_or(1.0);
    let delta = config.delta();
    let factor = config.backtrack_factor;
    let c = system.num_charges();
    let mut driver = Driver {
        system,
        q,
        config,
        estimator,
        temperature,
        calls: 0,
    };
    let mut x = driver.evaluate(mu0)?;
    let mut records = vec![driver.record(0, &x, 0.0, 0, StepKind::Start, x.shots)];
    let mut converged = norm(&x.grad) <= delta;
    let mut eta = eta0;
    let mut clean_steps = 0;
    let mut m = 0;
    while !converged && m < config.max_iter {
        m += 1;
        let (mut h, mut shots) = estimator.hessian(system, &x.mu, temperature, driver.calls)?;
        driver.calls += 1;
        if !estimator.is_exact() {
            let top = h.clone().symmetric_eigenvalues().max();
            let zeta = (top + config.hessian_regularization_floor).max(0.0);
            h -= DMatrix::identity(c, c) * zeta;
        }
        let (direction, kind) = match newton_direction(&h, &x.grad, SINGULAR_FLOOR * l) {
            Some((d, false)) => (d, StepKind::Newton),
            Some((d, true)) => (d, StepKind::Fallback),
            None => (x.grad.iter().map(|g| g * 0.9 / (l * eta0)).collect(), StepKind::Fallback),
        };
        let base = norm(&x.grad);
        let mut backtracks = 0;
        let mut best: Option<Point> = None;
        let mut exhausted = false;
        let accepted = loop {
            let length = eta * norm(&direction);
            let scale = if length > config.max_newton_step { config.max_newton_step / length } else { 1.0 };
            let trial: Vec<f64> = x.mu.iter().zip(&direction).map(|(v, d)| v + scale * eta * d).collect();
            let p = driver.evaluate(trial)?;
            shots += p.shots;
            let accept = match (p.objective, x.objective) {
                (Some(a), Some(b)) => a > b,
                _ => norm(&p.grad) <= base,
            };
            if accept {
                break p;
            }
            let better = |b: &Point| match (p.objective, b.objective) {
                (Some(a), Some(c)) => a > c,
                _ => norm(&p.grad) < norm(&b.grad),
            };
            if best.as_ref().is_none_or(better) {
                best = Some(p);
            }
            if backtracks >= MAX_BACKTRACKS {
                exhausted = true;
                break best.take().expect("at least one trial");
            }
            eta *= factor;
            backtracks += 1;
        };
        records.push(driver.record(m, &accepted, eta, backtracks, kind, shots));
        if exhausted {
            eta = eta0;
            clean_steps = 0;
        } else if backtracks == 0 {
            clean_steps += 1;
            if clean_steps >= 2 && eta < eta0 {
                eta = (eta / factor).min(eta0);
                clean_steps = 0;
            }
        } else {
            clean_steps = 0;
        }
        x = accepted;
        converged = norm(&x.grad) <= delta;
    }
    Ok(Trace {
        variant: config.variant,
        temperature,
        lipschitz: l,
        eta: eta0,
        delta,
        records,
        converged,
    })
}

/// Runs the driver matching `config.variant` with the matching estimator.
pub fn run(system: &ThermoSystem, q: &[f64], config: &OptimizerConfig) -> Result<Trace> {
    match config.variant {
        Variant::FirstClassical => run_first_order(system, q, config, &ExactEstimator),
        Variant::SecondClassical => run_second_order(system, q, config, &ExactEstimator),
        Variant::FirstHqc => run_first_order(system, q, config, &ShotEstimator::from_config(config)),
        Variant::SecondHqc => run_second_order(system, q, config, &ShotEstimator::from_config(config)),
    }
}
