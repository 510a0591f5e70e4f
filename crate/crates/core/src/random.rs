//! Seeded random instances for tests, verification suites and demos.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::CMatrix;
use crate::models::ThermoSystem;
use crate::operators::{Observable, Pauli, PauliString, Phase};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| Complex64::new(gaussian(rng), gaussian(rng)))
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    let qr = ginibre(rng, d).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Full-rank density matrix `GG†/Tr[GG†]`.
pub fn random_density_matrix<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    let g = ginibre(rng, d);
    let m = &g * g.adjoint();
    let tr: Complex64 = m.diagonal().iter().sum();
    m.unscale(tr.re)
}

/// Random Pauli word on `n` qubits other than the identity.
pub fn random_word<R: Rng + ?Sized>(rng: &mut R, n: usize) -> PauliString {
    loop {
        let letters: Vec<Pauli> = (0..n)
            .map(|_| Pauli::from_index(rng.random_range(0..4)).unwrap())
            .collect();
        let w = PauliString::new(Phase::ONE, letters).unwrap();
        if !w.is_identity() {
            return w;
        }
    }
}

/// Sum of `terms` random non-identity words with standard-normal coefficients.
pub fn random_pauli_sum<R: Rng + ?Sized>(rng: &mut R, n: usize, terms: usize) -> Observable {
    let list: Vec<(f64, PauliString)> = (0..terms)
        .map(|_| (gaussian(rng), random_word(rng, n)))
        .collect();
    Observable::new(n, list).unwrap()
}

/// Dense random Hermitian operator: every Pauli word gets a normal coefficient
/// scaled so that the operator norm is of order one.
pub fn random_hermitian_observable<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Observable {
    let d = 1usize << n;
    let scale = 1.0 / (d as f64).sqrt();
    let mut list = Vec::with_capacity(d * d);
    for idx in 0..d * d {
        let letters: Vec<Pauli> = (0..n)
            .map(|j| Pauli::from_index(((idx >> (2 * (n - 1 - j))) & 3) as u8).unwrap())
            .collect();
        list.push((scale * gaussian(rng), PauliString::new(Phase::ONE, letters).unwrap()));
    }
    Observable::new(n, list).unwrap()
}

/// Random system: dense random `H`, `charges` random Pauli sums of three
/// terms each, targets taken from a random full-rank state so they are feasible.
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, n: usize, charges: usize) -> ThermoSystem {
    let h = random_hermitian_observable(rng, n);
    let qs: Vec<Observable> = (0..charges).map(|_| random_pauli_sum(rng, n, 3)).collect();
    let rho = random_density_matrix(rng, 1 << n);
    let targets = qs.iter().map(|q| q.expectation(&rho).unwrap()).collect();
    ThermoSystem::new("random", h, qs, targets, false).unwrap()
}

/// Hermitian matrix with spectrum in `[−1, 1]`, a ground space of dimension
/// `ground_dim`, spectral gap at least `min_gap`, and Haar-random eigenbasis.
pub fn random_gapped_hamiltonian<R: Rng + ?Sized>(
    rng: &mut R,
    d: usize,
    ground_dim: usize,
    min_gap: f64,
) -> CMatrix {
    let mut spectrum = vec![-1.0; ground_dim];
    for _ in ground_dim..d {
        spectrum.push(rng.random_range((-1.0 + min_gap)..=1.0));
    }
    let u = random_unitary(rng, d);
    let diag = CMatrix::from_diagonal(&DVector::from_iterator(
        d,
        spectrum.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    let m = &u * diag * u.adjoint();
    crate::linalg::hermitian_part(&m)
}
