//! Parameterized thermal states `ρ_T(μ) ∝ exp(−(H − μ·Q)/T)` and the dual
//! objective `f(μ) = μ·q − T ln Z_T(μ)` with its gradient and Hessian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{commutator, max_abs, CMatrix, SpectralDecomposition};
use crate::models::ThermoSystem;
use crate::operators::Observable;

/// Boltzmann weights below this are flushed to zero before normalization.
pub const WEIGHT_FLOOR: f64 = 1e-300;

pub(crate) fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("temperature must be positive and finite, got {t}")));
    }
    Ok(())
}

/// Thermal state together with the spectral data of `A = H − μ·Q`.
#[derive(Debug, Clone)]
pub struct ThermalState {
    pub mu: Vec<f64>,
    pub temperature: f64,
    pub rho: CMatrix,
    /// Decomposition of `A`; `ρ` shares its eigenvectors.
    pub spectrum: SpectralDecomposition,
    /// Eigenvalues of `ρ` in the order of `spectrum`.
    pub populations: Vec<f64>,
    /// `ln` of the populations, finite even where a population underflowed.
    pub log_populations: Vec<f64>,
    pub log_partition: f64,
}

impl ThermalState {
    /// Builds the state from a Hermitian generator `A` at temperature `T`,
    /// shifting by `λ_min(A)` so the largest weight is exactly one.
    pub fn from_generator(a: &CMatrix, mu: Vec<f64>, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        let spectrum = SpectralDecomposition::of(a)?;
        let e0 = spectrum.min_eigenvalue();
        let exponents: Vec<f64> = spectrum.eigenvalues.iter().map(|&e| -(e - e0) / temperature).collect();
        let weights: Vec<f64> = exponents
            .iter()
            .map(|&x| {
                let w = x.exp();
                if w < WEIGHT_FLOOR {
                    0.0
                } else {
                    w
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let ln_total = total.ln();
        let populations: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let log_populations = exponents.iter().map(|x| x - ln_total).collect();
        let rho = {
            let mut scaled = spectrum.eigenvectors.clone();
            for (j, &p) in populations.iter().enumerate() {
                scaled.column_mut(j).scale_mut(p);
            }
            let m = &scaled * spectrum.eigenvectors.adjoint();
            crate::linalg::hermitian_part(&m)
        };
        Ok(Self {
            mu,
            temperature,
            rho,
            spectrum,
            populations,
            log_populations,
            log_partition: -e0 / temperature + ln_total,
        })
    }

    pub fn dim(&self) -> usize {
        self.populations.len()
    }

    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        obs.expectation(&self.rho)
    }

    /// `⟨Q_i⟩` for every charge.
    pub fn charge_expectations(&self, system: &ThermoSystem) -> Result<Vec<f64>> {
        system.charges().iter().map(|q| self.expectation(q)).collect()
    }

    /// Von Neumann entropy from the populations.
    pub fn entropy(&self) -> f64 {
        self.populations
            .iter()
            .filter(|&&p| p > WEIGHT_FLOOR)
            .map(|&p| -p * p.ln())
            .sum()
    }

    /// `‖[ρ, A]‖_max` with `A` the generator the state was built from.
    pub fn commutation_residual(&self, a: &CMatrix) -> f64 {
        max_abs(&commutator(&self.rho, a))
    }
}

pub fn thermal_state(system: &ThermoSystem, mu: &[f64], temperature: f64) -> Result<ThermalState> {
    let a = system.effective_hamiltonian(mu)?;
    ThermalState::from_generator(&a, mu.to_vec(), temperature)
}

/// `ln Z_T(μ)` by a shifted log-sum-exp over the spectrum of `H − μ·Q`.
pub fn log_partition(system: &ThermoSystem, mu: &[f64], temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    let a = system.effective_hamiltonian(mu)?;
    let eig = a.symmetric_eigenvalues();
    let e0 = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let s: f64 = eig.iter().map(|&e| (-(e - e0) / temperature).exp()).sum();
    Ok(-e0 / temperature + s.ln())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_targets(system: &ThermoSystem, q: &[f64]) -> Result<()> {
    if q.len() != system.num_charges() {
        return Err(Error::Structural(format!(
            "{} targets for {} charges",
            q.len(),
            system.num_charges()
        )));
    }
    Ok(())
}

/// `f(μ) = μ·q − T ln Z_T(μ)`.
pub fn objective_f(system: &ThermoSystem, q: &[f64], mu: &[f64], temperature: f64) -> Result<f64> {
    check_targets(system, q)?;
    Ok(dot(mu, q) - temperature * log_partition(system, mu, temperature)?)
}

/// Objective value from an already computed state.
pub fn objective_from_state(state: &ThermalState, q: &[f64]) -> f64 {
    dot(&state.mu, q) - state.temperature * state.log_partition
}

/// `∂f/∂μ_i = q_i − Tr[Q_i ρ_T(μ)]`.
pub fn gradient(system: &ThermoSystem, q: &[f64], mu: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_targets(system, q)?;
    let state = thermal_state(system, mu, temperature)?;
    gradient_from_state(system, &state, q)
}

pub fn gradient_from_state(system: &ThermoSystem, state: &ThermalState, q: &[f64]) -> Result<Vec<f64>> {
    let ex = state.charge_expectations(system)?;
    Ok(q.iter().zip(ex).map(|(qi, e)| qi - e).collect())
}

/// Logarithmic mean `(p_a − p_b)/(ln p_a − ln p_b)` from the logarithms,
/// stable when the arguments are close or tiny.
pub fn log_mean_from_logs(la: f64, lb: f64) -> f64 {
    if la == f64::NEG_INFINITY || lb == f64::NEG_INFINITY {
        return 0.0;
    }
    let (hi, lo) = if la >= lb { (la, lb) } else { (lb, la) };
    let delta = lo - hi;
    if delta == 0.0 {
        return hi.exp();
    }
    // p_hi · (1 − e^δ)/(−δ)
    hi.exp() * (-delta.exp_m1()) / (-delta)
}

/// Exact Hessian of `f` via the logarithmic-mean formula in the eigenbasis of `ρ`.
pub fn hessian_exact(system: &ThermoSystem, mu: &[f64], temperature: f64) -> Result<DMatrix<f64>> {
    let state = thermal_state(system, mu, temperature)?;
    hessian_from_state(system, &state)
}

pub fn hessian_from_state(system: &ThermoSystem, state: &ThermalState) -> Result<DMatrix<f64>> {
    let c = system.num_charges();
    let d = state.dim();
    let rotated: Vec<CMatrix> = system
        .charges()
        .iter()
        .map(|q| Ok(state.spectrum.to_eigenbasis(q.to_dense()?)))
        .collect::<Result<_>>()?;
    let lm = DMatrix::from_fn(d, d, |a, b| {
        log_mean_from_logs(state.log_populations[a], state.log_populations[b])
    });
    let means: Vec<f64> = rotated
        .iter()
        .map(|m| (0..d).map(|a| state.populations[a] * m[(a, a)].re).sum())
        .collect();
    let inv_t = 1.0 / state.temperature;
    let mut h = DMatrix::zeros(c, c);
    for i in 0..c {
        for j in i..c {
            let mut km = 0.0;
            for a in 0..d {
                for b in 0..d {
                    let w = lm[(a, b)];
                    if w != 0.0 {
                        km += w * (rotated[i][(a, b)] * rotated[j][(a, b)].conj()).re;
                    }
                }
            }
            let v = -inv_t * km + inv_t * means[i] * means[j];
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// `Tr[Hρ] − T·S(ρ)` with the `0 · ln 0 = 0` convention.
pub fn primal_free_energy(system: &ThermoSystem, rho: &CMatrix, temperature: f64) -> Result<f64> {
    let energy = system.hamiltonian().expectation(rho)?;
    let s = crate::linalg::hermitian_part(rho).symmetric_eigenvalues();
    let entropy: f64 = s
        .iter()
        .filter(|&&p| p > WEIGHT_FLOOR)
        .map(|&p| -p * p.ln())
        .sum();
    Ok(energy - temperature * entropy)
}

/// Smoothness constant `(2/T) Σ ‖Q_i‖²`.
pub fn smoothness_l(system: &ThermoSystem, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    let s: f64 = system.charge_norms()?.iter().map(|n| n * n).sum();
    Ok(2.0 * s / temperature)
}

/// Energy estimate `μ·q + Tr[(H − μ·Q)ρ]`.
pub fn output_value(system: &ThermoSystem, q: &[f64], state: &ThermalState) -> Result<f64> {
    let energy = state.expectation(system.hamiltonian())?;
    let ex = state.charge_expectations(system)?;
    Ok(dot(&state.mu, q) + energy - dot(&state.mu, &ex))
}

/// Temperature `ε/(n ln 2)` that makes the free-energy solution an
/// `ε`-approximation of the constrained ground energy.
pub fn temperature_for_epsilon(epsilon: f64, num_qubits: usize) -> f64 {
    epsilon / (num_qubits as f64 * std::f64::consts::LN_2)
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{trace_distance, von_neumann_entropy};
    use crate::models::{build_heisenberg, build_stabilizer_system, builtin_code, single_qubit_logical_words, HeisenbergSpec};
    use crate::operators::{Observable, PauliString};
    use crate::random::{random_system, rng};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn single_qubit(h: &[(f64, &str)], q: &[&str]) -> ThermoSystem {
        let h = Observable::new(1, h.iter().map(|(c, w)| (*c, ps(w)))).unwrap();
        let qs: Vec<Observable> = q.iter().map(|w| Observable::from_word(ps(w)).unwrap()).collect();
        let t = vec![0.0; qs.len()];
        ThermoSystem::new("test", h, qs, t, false).unwrap()
    }

    #[test]
    fn infinite_temperature_is_maximally_mixed() {
        let sys = random_system(&mut rng(1), 3, 2);
        let st = thermal_state(&sys, &[0.0, 0.0], 1e6).unwrap();
        let mixed = CMatrix::identity(8, 8).scale(1.0 / 8.0);
        assert!(max_abs(&(&st.rho - mixed)) < 1e-5);
    }

    #[test]
    fn low_temperature_repetition_close_to_codespace() {
        let code = builtin_code("repetition3").unwrap();
        let sys = build_stabilizer_system(&code, &single_qubit_logical_words(), &[0.0; 3], None).unwrap();
        let t = 0.01;
        let st = thermal_state(&sys, &[0.0; 3], t).unwrap();
        let target = code.codespace_projector().unwrap().scale(0.5);
        let td = trace_distance(&st.rho, &target).unwrap();
        let bound = 1.0 / (1.0 + (2.0f64 / t).exp() * 2.0 / 6.0);
        assert!(td <= bound * (1.0 + 1e-9) + 1e-300);
    }

    #[test]
    fn shift_invariance() {
        let sys = random_system(&mut rng(2), 2, 1);
        let shifted_h = sys
            .hamiltonian()
            .plus(&Observable::from_word(PauliString::identity(2)).unwrap().scaled(7.0).unwrap())
            .unwrap();
        let shifted = ThermoSystem::new("s", shifted_h, sys.charges().to_vec(), sys.targets().to_vec(), false).unwrap();
        let a = thermal_state(&sys, &[0.3], 0.7).unwrap();
        let b = thermal_state(&shifted, &[0.3], 0.7).unwrap();
        assert!(max_abs(&(&a.rho - &b.rho)) < 1e-12);
    }

    #[test]
    fn log_partition_values() {
        let zero = ThermoSystem::new("zero", Observable::zero(3).unwrap(), vec![], vec![], false).unwrap();
        let lz = log_partition(&zero, &[], 0.37).unwrap();
        assert!((lz - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);

        let sys = single_qubit(&[(-1.0, "Z")], &[]);
        let lz = log_partition(&sys, &[], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((lz - (e + 1.0 / e).ln()).abs() < 1e-14);
    }

    #[test]
    fn log_partition_matches_dense_exponential() {
        let sys = random_system(&mut rng(3), 3, 2);
        let mu = [0.4, -0.9];
        let a = sys.effective_hamiltonian(&mu).unwrap();
        let z: Complex64 = crate::linalg::trace(&(-a).exp());
        let lz = log_partition(&sys, &mu, 1.0).unwrap();
        assert!((lz - z.re.ln()).abs() < 1e-10);
    }

    #[test]
    fn objective_at_zero() {
        let sys = random_system(&mut rng(4), 2, 2);
        let q = sys.targets().to_vec();
        let f = objective_f(&sys, &q, &[0.0, 0.0], 0.5).unwrap();
        let lz = log_partition(&sys, &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(f, -0.5 * lz);
    }

    #[test]
    fn objective_equals_free_energy_form() {
        let mut r = rng(5);
        let sys = random_system(&mut r, 3, 3);
        let q = sys.targets().to_vec();
        for k in 0..10 {
            let mu = [0.3 * k as f64 - 1.0, 0.5, -0.2 * k as f64];
            let t = 0.2 + 0.1 * k as f64;
            let st = thermal_state(&sys, &mu, t).unwrap();
            let a = sys.effective_hamiltonian(&mu).unwrap();
            let energy = crate::linalg::trace_product(&a, &st.rho).re;
            let s = von_neumann_entropy(&st.rho).unwrap();
            let rhs = dot(&mu, &q) + energy - t * s;
            let f = objective_f(&sys, &q, &mu, t).unwrap();
            assert!((f - rhs).abs() < 1e-10, "{f} vs {rhs}");
        }
    }

    #[test]
    fn concavity_spot_check() {
        use rand::Rng;
        let mut r = rng(6);
        let sys = random_system(&mut r, 3, 3);
        let q = sys.targets().to_vec();
        for _ in 0..20 {
            let a: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
            let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let f = |mu: &[f64]| objective_f(&sys, &q, mu, 0.5).unwrap();
            assert!(f(&m) >= 0.5 * (f(&a) + f(&b)) - 1e-12);
        }
    }

    #[test]
    fn gradient_vanishes_at_matching_targets() {
        let sys = random_system(&mut rng(7), 3, 3);
        let mu = [0.2, -0.4, 0.9];
        let st = thermal_state(&sys, &mu, 0.8).unwrap();
        let q = st.charge_expectations(&sys).unwrap();
        let g = gradient(&sys, &q, &mu, 0.8).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn two_level_hessian() {
        let sys = single_qubit(&[], &["Z"]);
        let h = hessian_exact(&sys, &[0.0], 1.0).unwrap();
        assert!((h[(0, 0)] + 1.0).abs() < 1e-12);
        // Commuting closed form at μ: −(1/T)(1 − tanh²(μ/T)).
        let h = hessian_exact(&sys, &[0.3], 0.5).unwrap();
        let expected = -(1.0 - (0.6f64).tanh().powi(2)) / 0.5;
        assert!((h[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn log_mean_limits() {
        assert!((log_mean_from_logs(0.5f64.ln(), 0.5f64.ln()) - 0.5).abs() < 1e-16);
        let (a, b) = (0.3f64, 0.2f64);
        let direct = (a - b) / (a.ln() - b.ln());
        assert!((log_mean_from_logs(a.ln(), b.ln()) - direct).abs() < 1e-15);
        assert_eq!(log_mean_from_logs(0.0, f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn primal_free_energy_values() {
        let sys = random_system(&mut rng(8), 2, 1);
        let s = SpectralDecomposition::of(sys.hamiltonian().to_dense().unwrap()).unwrap();
        let v = s.eigenvectors.column(0);
        let pure = &v * v.adjoint();
        let f = primal_free_energy(&sys, &pure, 0.3).unwrap();
        assert!((f - s.min_eigenvalue()).abs() < 1e-12);

        let zero = ThermoSystem::new("zero", Observable::zero(3).unwrap(), vec![], vec![], false).unwrap();
        let mixed = CMatrix::identity(8, 8).scale(1.0 / 8.0);
        let f = primal_free_energy(&zero, &mixed, 0.25).unwrap();
        assert!((f + 0.25 * 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn primal_equals_dual_at_optimum() {
        let sys = random_system(&mut rng(9), 3, 2);
        let mu = [0.7, -0.3];
        let t = 0.4;
        let st = thermal_state(&sys, &mu, t).unwrap();
        let q = st.charge_expectations(&sys).unwrap();
        let primal = primal_free_energy(&sys, &st.rho, t).unwrap();
        let dual = objective_f(&sys, &q, &mu, t).unwrap();
        assert!((primal - dual).abs() < 1e-9);
    }

    #[test]
    fn smoothness_values() {
        let sys = single_qubit(&[], &["Z"]);
        assert!((smoothness_l(&sys, 1.0).unwrap() - 2.0).abs() < 1e-12);
        let heis = build_heisenberg(&HeisenbergSpec::line(3, false), [0.0; 3]).unwrap();
        assert!((smoothness_l(&heis, 0.5).unwrap() - 54.0 / 0.5).abs() < 1e-9);
    }

    #[test]
    fn state_invariants() {
        let sys = random_system(&mut rng(10), 3, 3);
        let mu = [1.0, -2.0, 0.5];
        let st = thermal_state(&sys, &mu, 0.05).unwrap();
        let a = sys.effective_hamiltonian(&mu).unwrap();
        assert!(st.commutation_residual(&a) < 1e-9);
        assert!((crate::linalg::trace(&st.rho).re - 1.0).abs() < 1e-9);
        let s = SpectralDecomposition::of(&st.rho).unwrap();
        assert!(s.min_eigenvalue() >= -1e-10);
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        let sys = single_qubit(&[], &["Z"]);
        assert!(matches!(thermal_state(&sys, &[0.0], 0.0), Err(Error::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gradient_matches_finite_differences(seed in 0u64..10_000, t in 0.1f64..2.0) {
            let mut r = rng(seed);
            let sys = random_system(&mut r, 2, 2);
            let q = sys.targets().to_vec();
            let mu = [0.5, -0.25];
            let g = gradient(&sys, &q, &mu, t).unwrap();
            let h = 1e-5;
            for i in 0..2 {
                let mut p = mu; p[i] += h;
                let mut m = mu; m[i] -= h;
                let fd = (objective_f(&sys, &q, &p, t).unwrap() - objective_f(&sys, &q, &m, t).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() < 1e-6);
            }
        }

        #[test]
        fn hessian_is_nsd_and_bounded(seed in 0u64..10_000, t in 0.05f64..3.0) {
            let mut r = rng(seed);
            let sys = random_system(&mut r, 2, 3);
            let mu = [0.3, -0.1, 0.8];
            let h = hessian_exact(&sys, &mu, t).unwrap();
            let eig = h.clone().symmetric_eigenvalues();
            let l = smoothness_l(&sys, t).unwrap();
            for e in eig.iter() {
                prop_assert!(*e <= 1e-10);
                prop_assert!(e.abs() <= l);
            }
        }
    }
}
