//! Simulated measurement: shot-noise expectation estimates, the tent time
//! density, and the Fourier-form Hessian estimator.
//!
//! Every random draw comes from a stream keyed by
//! `(master seed, iteration, id, block)`, so results never depend on the
//! order in which work items are scheduled.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::gibbs::{check_temperature, ThermalState};
use crate::linalg::{trace_product, CMatrix, SpectralDecomposition};
use crate::models::ThermoSystem;
use crate::operators::{Observable, Pauli, PauliString};

// ---------------------------------------------------------------------------
// Random streams

/// SplitMix64 finalizer; a bijection on `u64`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives independent ChaCha8 streams from a master seed.
///
/// The 256-bit key is `splitmix64` applied to each of
/// `(master, iteration, id, block)`; since each word map is bijective,
/// distinct tuples give distinct keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreamSpec {
    pub master_seed: u64,
}

impl RngStreamSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn key(&self, iteration: u64, id: u64, block: u64) -> [u8; 32] {
        let mut key = [0u8; 32];
        for (chunk, word) in key
            .chunks_exact_mut(8)
            .zip([self.master_seed, iteration, id, block])
        {
            chunk.copy_from_slice(&splitmix64(word).to_le_bytes());
        }
        key
    }

    pub fn stream(&self, iteration: u64, id: u64, block: u64) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key(iteration, id, block))
    }
}

/// Stream ids used by the estimators.
pub mod stream_ids {
    /// Hamiltonian expectation.
    pub const HAMILTONIAN: u64 = 0;

    /// Expectation of charge `i`.
    pub fn charge(i: usize) -> u64 {
        1 + i as u64
    }

    /// One of the two independent factors of `⟨Q_i⟩⟨Q_j⟩` in a Hessian entry.
    pub fn hessian_product(i: usize, j: usize, c: usize, factor: usize) -> u64 {
        (1 << 40) | (((i * c + j) * 2 + factor) as u64)
    }

    /// Hadamard-test outcomes for Pauli pair number `pair`.
    pub fn hessian_pair(pair: usize) -> u64 {
        (2 << 40) | pair as u64
    }
}

// ---------------------------------------------------------------------------
// Shot-noise expectation values

fn pauli_mean(word: &PauliString, rho: &CMatrix) -> Result<f64> {
    let e = word.expectation_complex(rho).re;
    if e.abs() > 1.0 + 1e-9 {
        return Err(Error::NumericalIntegrity(format!(
            "Pauli expectation ⟨{word}⟩ = {e} outside [-1, 1]"
        )));
    }
    Ok(e.clamp(-1.0, 1.0))
}

/// Mean of `shots` outcomes `±1` with `P(+1) = (1 + m)/2`.
pub fn sample_pm_one_mean<R: Rng + ?Sized>(rng: &mut R, m: f64, shots: u64) -> f64 {
    let p = 0.5 * (1.0 + m.clamp(-1.0, 1.0));
    let plus = if p <= 0.0 {
        0
    } else if p >= 1.0 {
        shots
    } else {
        Binomial::new(shots, p).expect("valid binomial").sample(rng)
    };
    (2.0 * plus as f64 - shots as f64) / shots as f64
}

/// Shot estimate of `Tr[obs·ρ]`: `shots_per_term` single-Pauli measurements per term.
pub fn estimate_observable<R: Rng + ?Sized>(
    rho: &CMatrix,
    obs: &Observable,
    shots_per_term: u64,
    rng: &mut R,
) -> Result<f64> {
    if shots_per_term == 0 {
        return Err(Error::Config("shots per term must be at least 1".into()));
    }
    let mut total = 0.0;
    for (a, word) in obs.terms() {
        if word.is_identity() {
            total += a;
            continue;
        }
        let m = pauli_mean(word, rho)?;
        total += a * sample_pm_one_mean(rng, m, shots_per_term);
    }
    Ok(total)
}

/// Variance of [`estimate_observable`]: `Σ a²(1 − ⟨P⟩²)/N`.
pub fn estimate_variance(rho: &CMatrix, obs: &Observable, shots_per_term: u64) -> Result<f64> {
    let mut v = 0.0;
    for (a, word) in obs.terms() {
        if word.is_identity() {
            continue;
        }
        let m = pauli_mean(word, rho)?;
        v += a * a * (1.0 - m * m) / shots_per_term as f64;
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Tent density

pub const TENT_CUTOFF: f64 = 12.0;
const TENT_KNOTS: usize = 1 << 16;
const TENT_REFINED_KNOTS: usize = 1 << 12;
const TENT_REFINED_HALF_WIDTH: f64 = 1e-2;

/// `p(t) = (2/π) ln|coth(πt/2)|`.
pub fn tent_density(t: f64) -> f64 {
    let x = PI * t.abs();
    if x == 0.0 {
        return f64::INFINITY;
    }
    // ln coth(x/2) = ln(1 + 2/(eˣ − 1))
    (2.0 / PI) * (2.0 / x.exp_m1()).ln_1p()
}

/// `Σ_{k odd} x^k / k²`.
fn legendre_chi2(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = 0.0;
    let mut k = 1.0;
    loop {
        let add = term / (k * k);
        sum += add;
        if add < 1e-18 * sum {
            return sum;
        }
        term *= x2;
        k += 2.0;
    }
}

/// `∫_0^t p` for `t ≥ 0`, in closed form.
fn tent_half_mass(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t <= 1.0 {
        let x = (0.5 * PI * t).tanh();
        -(2.0 * t / PI) * x.ln() + (4.0 / (PI * PI)) * legendre_chi2(x)
    } else {
        0.5 - (4.0 / (PI * PI)) * legendre_chi2((-PI * t).exp())
    }
}

/// Untruncated CDF of the tent density.
pub fn tent_cdf(t: f64) -> f64 {
    if t >= 0.0 {
        0.5 + tent_half_mass(t)
    } else {
        0.5 - tent_half_mass(-t)
    }
}

/// `∫ p(t) e^{−iωt} dt = tanh(ω/2)/(ω/2)`.
pub fn tent_characteristic(omega: f64) -> f64 {
    let h = 0.5 * omega;
    if h.abs() < 1e-8 {
        1.0 - h * h / 3.0
    } else {
        h.tanh() / h
    }
}

/// Inverse-CDF sampler for the tent density truncated to `[−12, 12]`.
///
/// The table holds `2^16 + 1` uniform knots plus `2^12 + 1` extra knots on
/// `|t| ≤ 10⁻²`, where the density has its logarithmic peak.
#[derive(Debug, Clone)]
pub struct TentSampler {
    knots: Vec<f64>,
    cdf: Vec<f64>,
}

impl TentSampler {
    pub fn new() -> Self {
        let mut knots: Vec<f64> = (0..=TENT_KNOTS)
            .map(|k| -TENT_CUTOFF + 2.0 * TENT_CUTOFF * k as f64 / TENT_KNOTS as f64)
            .collect();
        knots.extend((0..=TENT_REFINED_KNOTS).map(|k| {
            -TENT_REFINED_HALF_WIDTH
                + 2.0 * TENT_REFINED_HALF_WIDTH * k as f64 / TENT_REFINED_KNOTS as f64
        }));
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let lo = tent_cdf(-TENT_CUTOFF);
        let hi = tent_cdf(TENT_CUTOFF);
        let mut cdf: Vec<f64> = knots.iter().map(|&t| (tent_cdf(t) - lo) / (hi - lo)).collect();
        cdf[0] = 0.0;
        *cdf.last_mut().unwrap() = 1.0;
        Self { knots, cdf }
    }

    /// Process-wide table, built on first use.
    pub fn shared() -> &'static TentSampler {
        static TABLE: OnceLock<TentSampler> = OnceLock::new();
        TABLE.get_or_init(TentSampler::new)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn table_cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Piecewise-linear CDF of the sampler.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= self.knots[0] {
            return 0.0;
        }
        if t >= *self.knots.last().unwrap() {
            return 1.0;
        }
        let k = self.knots.partition_point(|&x| x <= t);
        let (t0, t1) = (self.knots[k - 1], self.knots[k]);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        c0 + (c1 - c0) * (t - t0) / (t1 - t0)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (t0, t1) = (self.knots[k - 1], self.knots[k]);
        if c1 <= c0 {
            return t0;
        }
        t0 + (t1 - t0) * (u - c0) / (c1 - c0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

impl Default for TentSampler {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// Quadrature

const KRONROD_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_W: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_W: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD_W[7] * fc;
    let mut gauss = GAUSS_W[3] * fc;
    for i in 0..7 {
        let dx = h * KRONROD_X[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += KRONROD_W[i] * s;
        if i % 2 == 1 {
            gauss += GAUSS_W[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod integration to absolute tolerance `tol`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_intervals: usize) -> f64 {
    let mut intervals = vec![{
        let (v, e) = gauss_kronrod_15(&f, a, b);
        (a, b, v, e)
    }];
    loop {
        let err: f64 = intervals.iter().map(|x| x.3).sum();
        if err <= tol || intervals.len() >= max_intervals {
            break;
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod_15(&f, lo, mid);
        let (v2, e2) = gauss_kronrod_15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    intervals.iter().map(|x| x.2).sum()
}

/// `∫_{−12}^{12} p(t) cos(ωt) dt` by adaptive quadrature (substituting `t = s²`).
pub fn tent_characteristic_quadrature(omega: f64, tol: f64) -> f64 {
    let upper = TENT_CUTOFF.sqrt();
    let half = integrate_adaptive(
        |s| {
            if s == 0.0 {
                return 0.0;
            }
            let t = s * s;
            2.0 * s * tent_density(t) * (omega * t).cos()
        },
        0.0,
        upper,
        0.5 * tol,
        20_000,
    );
    2.0 * half
}

// ---------------------------------------------------------------------------
// The channel Φ_μ

/// How the time evolution inside `Φ_μ` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiMode {
    /// Conjugate by `exp(−i(H − μ·Q)t/T)` on the full register.
    Generic,
    /// For extensive conserved charges: conjugate each site term by the
    /// single-site generator `−μ·C⁽ʲ⁾`.
    Extensive,
}

#[derive(Debug, Clone)]
enum PhiData {
    Generic {
        spectrum: SpectralDecomposition,
    },
    Extensive {
        /// Per-site eigen-decomposition of `−μ·C⁽ʲ⁾` (2×2).
        sites: Vec<SpectralDecomposition>,
    },
}

/// `Φ_μ(X) = ∫ p(t) e^{−iAt/T} X e^{iAt/T} dt`.
#[derive(Debug, Clone)]
pub struct PhiChannel {
    mode: PhiMode,
    temperature: f64,
    num_qubits: usize,
    data: PhiData,
    kernel_cache: std::sync::Arc<Mutex<HashMap<u64, f64>>>,
    quadrature_tol: f64,
}

fn pauli_matrix(p: Pauli) -> CMatrix {
    PauliString::single(1, 0, p).to_dense().unwrap()
}

/// `I ⊗ … ⊗ m ⊗ … ⊗ I` with `m` on `site`.
fn embed_single_site(m: &CMatrix, site: usize, n: usize) -> CMatrix {
    let left = CMatrix::identity(1 << site, 1 << site);
    let right_dim = 1 << (n - 1 - site);
    let right = CMatrix::identity(right_dim, right_dim);
    left.kronecker(m).kronecker(&right)
}

/// Per-site `(x, y, z)` coefficients of each charge, or a contract error.
fn extensive_decomposition(system: &ThermoSystem) -> Result<Vec<Vec<[f64; 3]>>> {
    let decomposition = system
        .charges()
        .iter()
        .map(|q| q.single_site_decomposition())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| {
            Error::Contract("extensive mode needs charges that are sums of single-site terms".into())
        })?;
    let conserved = system.is_conserved() || system.max_conservation_violation()? <= 1e-12;
    if !conserved {
        return Err(Error::Contract("extensive mode needs charges that commute with H".into()));
    }
    Ok(decomposition)
}

impl PhiChannel {
    pub fn new(system: &ThermoSystem, mu: &[f64], temperature: f64, mode: PhiMode) -> Result<Self> {
        check_temperature(temperature)?;
        let data = match mode {
            PhiMode::Generic => PhiData::Generic {
                spectrum: SpectralDecomposition::of(&system.effective_hamiltonian(mu)?)?,
            },
            PhiMode::Extensive => {
                let dec = extensive_decomposition(system)?;
                if mu.len() != dec.len() {
                    return Err(Error::Structural("μ length does not match charges".into()));
                }
                let sites = (0..system.num_qubits())
                    .map(|j| {
                        let mut g = CMatrix::zeros(2, 2);
                        for (i, coeffs) in dec.iter().enumerate() {
                            for (c, p) in [Pauli::X, Pauli::Y, Pauli::Z].into_iter().enumerate() {
                                let w = -mu[i] * coeffs[j][c];
                                if w != 0.0 {
                                    g += pauli_matrix(p).scale(w);
                                }
                            }
                        }
                        SpectralDecomposition::of(&g)
                    })
                    .collect::<Result<Vec<_>>>()?;
                PhiData::Extensive { sites }
            }
        };
        Ok(Self {
            mode,
            temperature,
            num_qubits: system.num_qubits(),
            data,
            kernel_cache: Default::default(),
            quadrature_tol: 1e-11,
        })
    }

    pub fn mode(&self) -> PhiMode {
        self.mode
    }

    fn kernel(&self, omega: f64) -> f64 {
        let key = omega.abs().to_bits();
        if let Some(v) = self.kernel_cache.lock().unwrap().get(&key) {
            return *v;
        }
        let v = tent_characteristic_quadrature(omega.abs(), self.quadrature_tol);
        self.kernel_cache.lock().unwrap().insert(key, v);
        v
    }

    fn apply_in_basis(&self, spectrum: &SpectralDecomposition, x: &CMatrix) -> CMatrix {
        let mut xh = spectrum.to_eigenbasis(x);
        let d = spectrum.dim();
        for a in 0..d {
            for b in 0..d {
                if a != b {
                    let omega = (spectrum.eigenvalues[a] - spectrum.eigenvalues[b]) / self.temperature;
                    xh[(a, b)] *= self.kernel(omega);
                }
            }
        }
        &spectrum.eigenvectors * xh * spectrum.eigenvectors.adjoint()
    }

    /// `Φ_μ(Q)` with the time integral done by adaptive quadrature.
    ///
    /// In extensive mode `q` must be a sum of single-site terms.
    pub fn apply(&self, q: &Observable) -> Result<CMatrix> {
        match &self.data {
            PhiData::Generic { spectrum } => Ok(self.apply_in_basis(spectrum, q.to_dense()?)),
            PhiData::Extensive { sites } => {
                let dec = q.single_site_decomposition().ok_or_else(|| {
                    Error::Contract("extensive mode needs a sum of single-site terms".into())
                })?;
                let d = 1usize << self.num_qubits;
                let mut out = CMatrix::zeros(d, d);
                for (j, coeffs) in dec.iter().enumerate() {
                    let mut local = CMatrix::zeros(2, 2);
                    for (c, p) in [Pauli::X, Pauli::Y, Pauli::Z].into_iter().enumerate() {
                        if coeffs[c] != 0.0 {
                            local += pauli_matrix(p).scale(coeffs[c]);
                        }
                    }
                    let phi = self.apply_in_basis(&sites[j], &local);
                    out += embed_single_site(&phi, j, self.num_qubits);
                }
                Ok(out)
            }
        }
    }

    /// Frequency representation of `t ↦ Tr[P_k(t) P_l ρ]` for single Pauli words.
    fn pair_frequencies(
        &self,
        pk: &PauliString,
        pl: &PauliString,
        state: &ThermalState,
        rotated: Option<(&CMatrix, &CMatrix)>,
    ) -> Result<FrequencySum> {
        match &self.data {
            PhiData::Generic { spectrum } => {
                let (pk_hat, pl_hat) = rotated.expect("generic mode needs rotated words");
                let d = spectrum.dim();
                let mut entries = Vec::with_capacity(d * d);
                for a in 0..d {
                    let pa = state.populations[a];
                    if pa == 0.0 {
                        continue;
                    }
                    for b in 0..d {
                        let c = pk_hat[(a, b)] * pl_hat[(b, a)] * pa;
                        if c.norm() > 1e-15 {
                            let omega = (spectrum.eigenvalues[a] - spectrum.eigenvalues[b]) / self.temperature;
                            entries.push((omega, c));
                        }
                    }
                }
                Ok(FrequencySum::compress(entries))
            }
            PhiData::Extensive { sites } => {
                let (site, letter) = pk
                    .letters()
                    .iter()
                    .enumerate()
                    .find(|(_, p)| **p != Pauli::I)
                    .map(|(j, p)| (j, *p))
                    .ok_or_else(|| Error::Contract("identity term in extensive mode".into()))?;
                if pk.weight() != 1 {
                    return Err(Error::Contract(format!("{pk} is not a single-site term")));
                }
                let s = &sites[site];
                let local_hat = s.to_eigenbasis(&pauli_matrix(letter));
                let pl_rho = pl.to_dense()? * &state.rho;
                let mut entries = Vec::with_capacity(4);
                for a in 0..2 {
                    for b in 0..2 {
                        let va = s.eigenvectors.column(a);
                        let vb = s.eigenvectors.column(b);
                        let outer: CMatrix = &va * vb.adjoint();
                        let e = embed_single_site(&outer, site, self.num_qubits);
                        let c = local_hat[(a, b)] * trace_product(&e, &pl_rho);
                        let omega = (s.eigenvalues[a] - s.eigenvalues[b]) / self.temperature;
                        entries.push((omega, c));
                    }
                }
                Ok(FrequencySum::compress(entries))
            }
        }
    }
}

/// `t ↦ Re Σ_r c_r e^{−iω_r t}`.
#[derive(Debug, Clone)]
struct FrequencySum {
    omegas: Vec<f64>,
    coeffs: Vec<Complex64>,
}

impl FrequencySum {
    fn compress(mut entries: Vec<(f64, Complex64)>) -> Self {
        entries.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut omegas: Vec<f64> = Vec::new();
        let mut coeffs: Vec<Complex64> = Vec::new();
        for (w, c) in entries {
            match omegas.last() {
                Some(&last) if (w - last).abs() <= 1e-12 * last.abs().max(1.0) => {
                    *coeffs.last_mut().unwrap() += c;
                }
                _ => {
                    omegas.push(w);
                    coeffs.push(c);
                }
            }
        }
        Self { omegas, coeffs }
    }

    fn eval(&self, t: f64) -> f64 {
        self.omegas
            .iter()
            .zip(&self.coeffs)
            .map(|(&w, c)| {
                let (s, co) = (w * t).sin_cos();
                c.re * co + c.im * s
            })
            .sum()
    }

    fn time_average(&self) -> f64 {
        self.omegas
            .iter()
            .zip(&self.coeffs)
            .map(|(&w, c)| c.re * tent_characteristic(w))
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Hessian estimates

/// Fourier-form Hessian with every time integral done by quadrature.
pub fn hessian_fourier_quadrature(
    system: &ThermoSystem,
    mu: &[f64],
    temperature: f64,
    mode: PhiMode,
) -> Result<DMatrix<f64>> {
    let channel = PhiChannel::new(system, mu, temperature, mode)?;
    let state = crate::gibbs::thermal_state(system, mu, temperature)?;
    let means = state.charge_expectations(system)?;
    let c = system.num_charges();
    let phis = system
        .charges()
        .iter()
        .map(|q| channel.apply(q))
        .collect::<Result<Vec<_>>>()?;
    let inv_t = 1.0 / temperature;
    let mut h = DMatrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            let qj_rho = system.charges()[j].to_dense()? * &state.rho;
            let s = trace_product(&phis[i], &qj_rho).re;
            h[(i, j)] = -inv_t * s + inv_t * means[i] * means[j];
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// How the time integral of each Hadamard-test outcome is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeSampling {
    /// Draw `t` from the tent table, evaluate `Re Tr[P_k(t) P_l ρ]` at that
    /// time, then draw one `±1` outcome.
    Explicit,
    /// Draw the outcomes from their distribution with `t` integrated out
    /// (same law as `Explicit`, cost independent of the sample count).
    Marginal,
}

/// Budget and mode of one stochastic Hessian estimate.
#[derive(Debug, Clone, Copy)]
pub struct HessianSampling {
    /// Time samples (one Hadamard outcome each) per Pauli pair.
    pub time_samples: u64,
    /// Shots per Pauli term for each factor of `⟨Q_i⟩⟨Q_j⟩`.
    pub shots: u64,
    pub mode: PhiMode,
    pub time_sampling: TimeSampling,
}

const TIME_BLOCK: u64 = 1 << 14;

fn map_jobs<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Hadamard-test estimate of the Fourier-form Hessian at `μ`.
///
/// Entry `(i, j)` is `−(1/T) Σ_{k,l} a_k b_l ŵ_kl + (1/T) Q̃_i Q̃_j`, where
/// `ŵ_kl` averages one `±1` outcome per time sample with mean
/// `Re Tr[P_k(t) P_l ρ]`, and the two factors of the product term come from
/// independent streams. The result is symmetrized.
pub fn estimate_hessian(
    system: &ThermoSystem,
    mu: &[f64],
    temperature: f64,
    sampling: &HessianSampling,
    streams: &RngStreamSpec,
    iteration: u64,
) -> Result<DMatrix<f64>> {
    if sampling.time_samples == 0 || sampling.shots == 0 {
        return Err(Error::Config("Hessian sample budgets must be positive".into()));
    }
    let state = crate::gibbs::thermal_state(system, mu, temperature)?;
    let channel = PhiChannel::new(system, mu, temperature, sampling.mode)?;
    let c = system.num_charges();

    let mut rotated: HashMap<&PauliString, CMatrix> = HashMap::new();
    if let PhiData::Generic { spectrum } = &channel.data {
        for q in system.charges() {
            for (_, w) in q.terms() {
                if !rotated.contains_key(w) {
                    rotated.insert(w, spectrum.to_eigenbasis(&w.to_dense()?));
                }
            }
        }
    }

    // One job per (entry, Pauli pair).
    let mut jobs = Vec::new();
    for i in 0..c {
        for j in 0..c {
            for (a, pk) in system.charges()[i].terms() {
                for (b, pl) in system.charges()[j].terms() {
                    jobs.push((i, j, a * b, pk, pl));
                }
            }
        }
    }
    let tent = TentSampler::shared();
    let results: Vec<Result<f64>> = map_jobs(jobs.len(), |idx| {
        let (_, _, _, pk, pl) = jobs[idx];
        let rot = match channel.data {
            PhiData::Generic { .. } => Some((&rotated[pk], &rotated[pl])),
            PhiData::Extensive { .. } => None,
        };
        let freq = channel.pair_frequencies(pk, pl, &state, rot)?;
        let id = stream_ids::hessian_pair(idx);
        let n = sampling.time_samples;
        let mean = match sampling.time_sampling {
            TimeSampling::Marginal => {
                let w = freq.time_average();
                let mut rng = streams.stream(iteration, id, 0);
                sample_pm_one_mean(&mut rng, w, n)
            }
            TimeSampling::Explicit => {
                let mut plus = 0u64;
                let blocks = n.div_ceil(TIME_BLOCK);
                for block in 0..blocks {
                    let mut rng = streams.stream(iteration, id, block);
                    let count = TIME_BLOCK.min(n - block * TIME_BLOCK);
                    for _ in 0..count {
                        let t = tent.sample(&mut rng);
                        let w = freq.eval(t).clamp(-1.0, 1.0);
                        if rng.random::<f64>() < 0.5 * (1.0 + w) {
                            plus += 1;
                        }
                    }
                }
                (2.0 * plus as f64 - n as f64) / n as f64
            }
        };
        Ok(mean)
    });

    let mut kubo = DMatrix::<f64>::zeros(c, c);
    for (job, r) in jobs.iter().zip(results) {
        kubo[(job.0, job.1)] += job.2 * r?;
    }

    let inv_t = 1.0 / temperature;
    let mut h = DMatrix::<f64>::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            let mut r1 = streams.stream(iteration, stream_ids::hessian_product(i, j, c, 0), 0);
            let mut r2 = streams.stream(iteration, stream_ids::hessian_product(i, j, c, 1), 0);
            let qi = estimate_observable(&state.rho, &system.charges()[i], sampling.shots, &mut r1)?;
            let qj = estimate_observable(&state.rho, &system.charges()[j], sampling.shots, &mut r2)?;
            h[(i, j)] = -inv_t * kubo[(i, j)] + inv_t * qi * qj;
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}
