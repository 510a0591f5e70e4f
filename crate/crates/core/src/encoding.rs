//! Thermodynamic encoding of logical states: Bloch and exponential
//! coordinates, warm starts, closed-form optimal thermal states, and encoded
//! target states.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gibbs::thermal_state;
use crate::linalg::{fidelity, identity, trace, CMatrix, SpectralDecomposition};
use crate::models::{build_stabilizer_system, single_qubit_logical_words, LogicalWord, StabilizerCode, ThermoSystem};
use crate::operators::{Pauli, PauliString, Phase};

/// Radial factor used to pull pure targets into the open Bloch ball.
pub const PURE_SHRINK: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector([f64; 3]);

impl BlochVector {
    pub fn new(r: [f64; 3]) -> Result<Self> {
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite Bloch vector {r:?}")));
        }
        let v = Self(r);
        if v.norm() > 1.0 + 1e-12 {
            return Err(Error::Domain(format!("Bloch vector {r:?} has norm {} > 1", v.norm())));
        }
        Ok(v)
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_pure(&self) -> bool {
        (self.norm() - 1.0).abs() <= 1e-12
    }

    /// Pure vectors scaled by [`PURE_SHRINK`]; mixed ones unchanged.
    pub fn shrunk(&self) -> Self {
        if self.norm() >= PURE_SHRINK {
            Self(self.0.map(|x| x * PURE_SHRINK / self.norm()))
        } else {
            *self
        }
    }

    fn require_mixed(&self) -> Result<f64> {
        let norm = self.norm();
        if norm >= 1.0 {
            return Err(Error::Domain(format!(
                "Bloch vector {:?} is pure; exponential coordinates need ‖r‖ < 1",
                self.0
            )));
        }
        Ok(norm)
    }
}

/// Exponential coordinates `(μ, β)` with `ρ = exp(−β μ·σ)/Z`:
/// `μ = r` and `β = arctanh(−‖r‖)/‖r‖`, with `β = −1` at `r = 0`.
pub fn mixture_to_exponential(r: &BlochVector) -> Result<([f64; 3], f64)> {
    let norm = r.require_mixed()?;
    let beta = if norm == 0.0 { -1.0 } else { (-norm).atanh() / norm };
    Ok((r.0, beta))
}

/// Alternative coordinates with a unit vector and non-negative inverse
/// temperature: `μ = −r/‖r‖`, `β = arctanh(‖r‖)`. At `r = 0`, `μ = 0` and `β = 0`.
pub fn mixture_to_exponential_normalized(r: &BlochVector) -> Result<([f64; 3], f64)> {
    let norm = r.require_mixed()?;
    if norm == 0.0 {
        return Ok(([0.0; 3], 0.0));
    }
    Ok((r.0.map(|x| -x / norm), norm.atanh()))
}

/// Bloch vector of `exp(−β μ·σ)/Z`, i.e. `−tanh(β‖μ‖) μ/‖μ‖`; for unit `μ`
/// this is `tanh(−β)μ`.
pub fn exponential_to_mixture(mu: [f64; 3], beta: f64) -> BlochVector {
    let norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return BlochVector([0.0; 3]);
    }
    let s = -(beta * norm).tanh() / norm;
    BlochVector(mu.map(|x| s * x))
}

/// Real Pauli-basis coefficients of a `k`-qubit logical state, indexed by
/// words over `{0,1,2,3}^k`; the identity coefficient is fixed to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalTarget {
    k: usize,
    coefficients: BTreeMap<LogicalWord, f64>,
}

impl LogicalTarget {
    pub fn new(k: usize, entries: impl IntoIterator<Item = (LogicalWord, f64)>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("logical target needs k ≥ 1".into()));
        }
        let mut coefficients = BTreeMap::new();
        for (word, value) in entries {
            if word.len() != k {
                return Err(Error::Config(format!("word {word} has length {} but k = {k}", word.len())));
            }
            if !value.is_finite() {
                return Err(Error::Config(format!("non-finite coefficient for {word}")));
            }
            if word.is_identity() {
                if (value - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!("identity coefficient must be 1, got {value}")));
                }
                continue;
            }
            if coefficients.insert(word.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate coefficient for {word}")));
            }
        }
        let target = Self { k, coefficients };
        let rho = target.logical_density()?;
        let s = SpectralDecomposition::of(&rho)?;
        if s.min_eigenvalue() < -1e-9 {
            return Err(Error::Domain(format!(
                "logical target is not positive semidefinite (min eigenvalue {:.3e})",
                s.min_eigenvalue()
            )));
        }
        Ok(target)
    }

    pub fn from_bloch(r: &BlochVector) -> Self {
        Self {
            k: 1,
            coefficients: single_qubit_logical_words().into_iter().zip(r.0).collect(),
        }
    }

    pub fn num_logical(&self) -> usize {
        self.k
    }

    pub fn coefficient(&self, word: &LogicalWord) -> f64 {
        if word.is_identity() {
            1.0
        } else {
            self.coefficients.get(word).copied().unwrap_or(0.0)
        }
    }

    /// Words with explicitly given coefficients, in lexicographic order.
    pub fn entries(&self) -> impl Iterator<Item = (&LogicalWord, f64)> {
        self.coefficients.iter().map(|(w, v)| (w, *v))
    }

    /// `2^{−k} Σ_w r_w σ_w` on `k` bare qubits.
    pub fn logical_density(&self) -> Result<CMatrix> {
        let d = 1usize << self.k;
        let mut rho = identity(d);
        for (w, &v) in &self.coefficients {
            rho += bare_pauli(w)?.to_dense()?.scale(v);
        }
        Ok(rho.unscale(d as f64))
    }
}

fn bare_pauli(word: &LogicalWord) -> Result<PauliString> {
    let letters = word
        .indices()
        .iter()
        .map(|&i| Pauli::from_index(i).ok_or_else(|| Error::Config(format!("bad index in {word}"))))
        .collect::<Result<Vec<_>>>()?;
    PauliString::new(Phase::ONE, letters)
}

/// `Π_C (2^{−k} Σ_w r_w σ̄_w) Π_C`, normalized.
pub fn encoded_state(code: &StabilizerCode, target: &LogicalTarget) -> Result<CMatrix> {
    if target.k != code.k {
        return Err(Error::Structural(format!(
            "target has {} logical qubits but {} encodes {}",
            target.k, code.name, code.k
        )));
    }
    let p = code.codespace_projector()?;
    let mut m = p.clone();
    for (w, v) in target.entries() {
        let op = code.logical_word(w)?;
        m += (op.to_dense()? * &p).scale(v);
    }
    let rho = &p * m * &p;
    let tr = trace(&rho).re;
    Ok(crate::linalg::hermitian_part(&rho.unscale(tr)))
}

/// Uhlmann fidelity between `rho` and the encoded target.
pub fn encoded_fidelity(code: &StabilizerCode, target: &LogicalTarget, rho: &CMatrix) -> Result<f64> {
    fidelity(&encoded_state(code, target)?, rho)
}

/// Warm-start coordinates for a single logical qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    /// Direction `μ` in `exp(−β μ·σ)`.
    pub mu: [f64; 3],
    pub beta: f64,
}

impl WarmStart {
    pub fn new(r: &BlochVector, normalized: bool) -> Result<Self> {
        let (mu, beta) = if normalized {
            mixture_to_exponential_normalized(r)?
        } else {
            mixture_to_exponential(r)?
        };
        Ok(Self { mu, beta })
    }

    /// Chemical potentials for charges `(X̄, Ȳ, Z̄)` at temperature `T`: the
    /// logical term `βT μ·σ̄` enters `H − μ'·Q` as `μ' = −βT μ`.
    pub fn chemical_potentials(&self, temperature: f64) -> Vec<f64> {
        self.mu.iter().map(|m| -self.beta * temperature * m).collect()
    }
}

fn require_single_logical(code: &StabilizerCode) -> Result<()> {
    if code.k != 1 {
        return Err(Error::Contract(format!(
            "warm start needs one logical qubit; {} encodes {}",
            code.name, code.k
        )));
    }
    Ok(())
}

/// System with charges `(X̄, Ȳ, Z̄)` and the Bloch vector as targets.
pub fn bloch_system(code: &StabilizerCode, r: &BlochVector) -> Result<ThermoSystem> {
    require_single_logical(code)?;
    build_stabilizer_system(code, &single_qubit_logical_words(), &r.0, None)
}

/// `exp(−(H + βT μ·σ̄)/T)/Z`, whose logical Bloch vector equals `r`.
pub fn warm_start_state(code: &StabilizerCode, r: &BlochVector, temperature: f64) -> Result<(CMatrix, WarmStart)> {
    let system = bloch_system(code, r)?;
    let ws = WarmStart::new(r, false)?;
    let state = thermal_state(&system, &ws.chemical_potentials(temperature), temperature)?;
    Ok((state.rho, ws))
}

/// Closed-form maximizer of the dual for a strictly mixed logical target.
#[derive(Debug, Clone)]
pub struct OptimalEncodedState {
    /// Charges are all `4^k − 1` non-identity logical products.
    pub system: ThermoSystem,
    /// Chemical potentials `T·μ_w` with `μ_w = Tr[σ_w ln ρ_L]/2^k`.
    pub mu: Vec<f64>,
    pub rho: CMatrix,
}

/// `exp(−(H − T Σ_w μ_w σ̄_w)/T)/Z` with `Σ_w μ_w σ_w = ln ρ_L` up to identity,
/// so that every logical expectation matches the target.
pub fn optimal_encoded_state(
    code: &StabilizerCode,
    target: &LogicalTarget,
    temperature: f64,
) -> Result<OptimalEncodedState> {
    if target.k != code.k {
        return Err(Error::Structural(format!(
            "target has {} logical qubits but {} encodes {}",
            target.k, code.name, code.k
        )));
    }
    let rho_l = target.logical_density()?;
    let s = SpectralDecomposition::of(&rho_l)?;
    if s.min_eigenvalue() <= 1e-12 {
        return Err(Error::Domain(format!(
            "target must be strictly mixed (full rank) for exponential coordinates; min eigenvalue {:.3e}",
            s.min_eigenvalue()
        )));
    }
    let ln_rho = s.apply(f64::ln);
    let d = (1usize << target.k) as f64;
    let words = LogicalWord::all_nontrivial(target.k);
    let mut coeffs = Vec::with_capacity(words.len());
    let mut rebuilt = identity(rho_l.nrows()).scale(trace(&ln_rho).re / d);
    for w in &words {
        let p = bare_pauli(w)?.to_dense()?;
        let c = crate::linalg::trace_product(&p, &ln_rho).re / d;
        rebuilt += p.scale(c);
        coeffs.push(c);
    }
    let residual = crate::linalg::max_abs(&(rebuilt - &ln_rho));
    if residual > 1e-10 {
        return Err(Error::NumericalIntegrity(format!(
            "Pauli expansion of the logical log-state has residual {residual:.3e}"
        )));
    }
    let targets: Vec<f64> = words.iter().map(|w| target.coefficient(w)).collect();
    let system = build_stabilizer_system(code, &words, &targets, None)?;
    let mu: Vec<f64> = coeffs.iter().map(|c| temperature * c).collect();
    let rho = thermal_state(&system, &mu, temperature)?.rho;
    Ok(OptimalEncodedState { system, mu, rho })
}

/// Density matrix of a Bloch vector on one bare qubit.
pub fn bloch_density(r: &BlochVector) -> CMatrix {
    let [x, y, z] = r.0;
    CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(0.5 * (1.0 + z), 0.0),
            Complex64::new(0.5 * x, -0.5 * y),
            Complex64::new(0.5 * x, 0.5 * y),
            Complex64::new(0.5 * (1.0 - z), 0.0),
        ],
    )
}
