//! WebAssembly bindings for the static page in `www/`.
//!
//! Each export wraps a plain Rust function so the numerics are testable
//! natively.

use wasm_bindgen::prelude::*;

use qthermo::encoding::{encoded_fidelity, warm_start_state, BlochVector, LogicalTarget};
use qthermo::models::{build_heisenberg, builtin_code, HeisenbergSpec};
use qthermo::optimize::{run, OptimizerConfig, Variant};
use qthermo::oracle::{dual_eigenvalue_solve, DualSolveConfig};
use qthermo::random::rng;
use qthermo::shots::{tent_density, TentSampler};

/// Fidelity of the warm-start thermal state with the encoded Bloch state,
/// one value per temperature.
pub fn fidelity_curve(code: &str, r: [f64; 3], temperatures: &[f64]) -> Result<Vec<f64>, String> {
    let code = builtin_code(code).map_err(|e| e.to_string())?;
    let bloch = BlochVector::new(r).map_err(|e| e.to_string())?;
    let target = LogicalTarget::from_bloch(&bloch);
    temperatures
        .iter()
        .map(|&t| {
            let (rho, _) = warm_start_state(&code, &bloch, t)?;
            encoded_fidelity(&code, &target, &rho)
        })
        .collect::<qthermo::Result<Vec<f64>>>()
        .map_err(|e| e.to_string())
}

/// Solver history for a Heisenberg chain.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct SolveTrace {
    outputs: Vec<f64>,
    grad_norms: Vec<f64>,
    reference: f64,
    converged: bool,
}

#[wasm_bindgen]
impl SolveTrace {
    /// Output value `f̃` per iteration.
    #[wasm_bindgen(getter)]
    pub fn outputs(&self) -> Vec<f64> {
        self.outputs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn grad_norms(&self) -> Vec<f64> {
        self.grad_norms.clone()
    }

    /// Constrained ground energy from the eigenvalue oracle.
    #[wasm_bindgen(getter)]
    pub fn reference(&self) -> f64 {
        self.reference
    }

    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.converged
    }
}

pub fn solve_chain(n: usize, nnn: bool, targets: [f64; 3], variant: &str, seed: u64) -> Result<SolveTrace, String> {
    let err = |e: qthermo::Error| e.to_string();
    if !(2..=6).contains(&n) {
        return Err(format!("chain length must be 2..=6 in the browser, got {n}"));
    }
    let variant: Variant = variant.parse().map_err(err)?;
    let system = build_heisenberg(&HeisenbergSpec::line(n, nnn), targets).map_err(err)?;
    let oracle = dual_eigenvalue_solve(&system, system.targets(), &DualSolveConfig::default()).map_err(err)?;
    let mut config = OptimizerConfig::new(variant, 0.1);
    config.seed = seed;
    config.reference_energy = Some(oracle.value);
    if variant.is_hqc() {
        config.max_iter = 300;
        config.hessian_samples = 100_000;
    }
    let trace = run(&system, system.targets(), &config).map_err(err)?;
    Ok(SolveTrace {
        outputs: trace.records.iter().map(|r| r.f_estimate).collect(),
        grad_norms: trace.records.iter().map(|r| r.grad_norm).collect(),
        reference: oracle.value,
        converged: trace.converged,
    })
}

/// Histogram of `samples` tent-distribution draws on `[-range, range]`,
/// normalized to a density, followed by the exact density at bin centers.
pub fn tent_histogram(samples: usize, bins: usize, range: f64, seed: u64) -> Result<Vec<f64>, String> {
    if bins == 0 || !(range > 0.0 && range.is_finite()) {
        return Err("need at least one bin and a positive range".into());
    }
    let width = 2.0 * range / bins as f64;
    let mut counts = vec![0.0; bins];
    let sampler = TentSampler::shared();
    let mut r = rng(seed);
    for _ in 0..samples {
        let t = sampler.sample(&mut r);
        if t.abs() < range {
            counts[((t + range) / width) as usize] += 1.0;
        }
    }
    let norm = samples.max(1) as f64 * width;
    let mut out: Vec<f64> = counts.iter().map(|c| c / norm).collect();
    out.extend((0..bins).map(|i| tent_density(-range + (i as f64 + 0.5) * width)));
    Ok(out)
}

#[wasm_bindgen(js_name = fidelityCurve)]
pub fn fidelity_curve_js(code: &str, rx: f64, ry: f64, rz: f64, temperatures: Vec<f64>) -> Result<Vec<f64>, JsError> {
    fidelity_curve(code, [rx, ry, rz], &temperatures).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = solveChain)]
pub fn solve_chain_js(n: usize, nnn: bool, q1: f64, q2: f64, q3: f64, variant: &str, seed: u32) -> Result<SolveTrace, JsError> {
    solve_chain(n, nnn, [q1, q2, q3], variant, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = tentHistogram)]
pub fn tent_histogram_js(samples: usize, bins: usize, range: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    tent_histogram(samples, bins, range, seed as u64).map_err(|e| JsError::new(&e))
}
