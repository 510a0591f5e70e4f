//! Pauli-string algebra and dense Hermitian observables on `n` qubits.
//!
//! Qubit 0 is the leftmost tensor factor and the most significant bit of a
//! computational-basis index. Phases are kept as an exponent of `i` so that
//! products never accumulate floating-point drift.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Largest register materialized as a dense matrix unless a caller asks otherwise.
pub const MAX_DENSE_QUBITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(Pauli::I),
            1 => Some(Pauli::X),
            2 => Some(Pauli::Y),
            3 => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// Single-qubit product `self · other` as (exponent of i, letter).
    fn mul(self, other: Pauli) -> (u8, Pauli) {
        let (a, b) = (self.index(), other.index());
        if a == 0 {
            return (0, other);
        }
        if b == 0 {
            return (0, self);
        }
        if a == b {
            return (0, Pauli::I);
        }
        let letter = Pauli::from_index(a ^ b).unwrap();
        // X→Y→Z→X is the positive cycle: XY = iZ, YZ = iX, ZX = iY.
        let phase = if (b + 3 - a) % 3 == 1 { 1 } else { 3 };
        (phase, letter)
    }

    fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Overall phase `i^k`, `k ∈ {0,1,2,3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_exponent(k: u8) -> Self {
        Phase(k % 4)
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn is_real(self) -> bool {
        self.0 % 2 == 0
    }

    /// `+1.0` or `-1.0` for real phases.
    pub fn sign(self) -> Option<f64> {
        match self.0 {
            0 => Some(1.0),
            2 => Some(-1.0),
            _ => None,
        }
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

impl std::ops::Mul for Phase {
    type Output = Phase;
    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

/// Signed Pauli word `i^k · P₀ ⊗ P₁ ⊗ … ⊗ P_{n−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    phase: Phase,
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(phase: Phase, letters: Vec<Pauli>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::Structural("Pauli word must act on at least one qubit".into()));
        }
        Ok(Self { phase, letters })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            phase: Phase::ONE,
            letters: vec![Pauli::I; n.max(1)],
        }
    }

    /// Single-site operator `letter` on qubit `site` of an `n`-qubit register.
    pub fn single(n: usize, site: usize, letter: Pauli) -> Self {
        let mut letters = vec![Pauli::I; n];
        letters[site] = letter;
        Self {
            phase: Phase::ONE,
            letters,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&p| p != Pauli::I).count()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    /// Group product `self · other`.
    pub fn mul(&self, other: &PauliString) -> Result<PauliString> {
        if self.num_qubits() != other.num_qubits() {
            return Err(Error::Structural(format!(
                "Pauli product of words with {} and {} qubits",
                self.num_qubits(),
                other.num_qubits()
            )));
        }
        let mut k = self.phase.0 + other.phase.0;
        let letters = self
            .letters
            .iter()
            .zip(&other.letters)
            .map(|(&a, &b)| {
                let (p, l) = a.mul(b);
                k += p;
                l
            })
            .collect();
        Ok(PauliString {
            phase: Phase::from_exponent(k),
            letters,
        })
    }

    /// `true` when `ab` and `ba` carry the same phase.
    pub fn commutes_with(&self, other: &PauliString) -> Result<bool> {
        Ok(self.mul(other)?.phase == other.mul(self)?.phase)
    }

    fn flip_mask(&self) -> usize {
        let n = self.num_qubits();
        self.letters
            .iter()
            .enumerate()
            .filter(|(_, p)| p.flips())
            .fold(0usize, |m, (j, _)| m | (1 << (n - 1 - j)))
    }

    /// The unique non-zero entry of row `row`: `(column, value)`.
    pub fn row_entry(&self, row: usize) -> (usize, Complex64) {
        let n = self.num_qubits();
        let col = row ^ self.flip_mask();
        let mut k = self.phase.0 as u32;
        for (j, &p) in self.letters.iter().enumerate() {
            let bit = (col >> (n - 1 - j)) & 1;
            match p {
                Pauli::Y => k += if bit == 0 { 1 } else { 3 },
                Pauli::Z if bit == 1 => k += 2,
                _ => {}
            }
        }
        (col, Phase::from_exponent((k % 4) as u8).to_complex())
    }

    pub fn to_dense(&self) -> Result<CMatrix> {
        check_dense_size(self.num_qubits(), MAX_DENSE_QUBITS)?;
        let d = 1usize << self.num_qubits();
        let mut m = CMatrix::zeros(d, d);
        for r in 0..d {
            let (c, v) = self.row_entry(r);
            m[(r, c)] = v;
        }
        Ok(m)
    }

    /// `Tr[P ρ]` in `O(2ⁿ)`.
    pub fn expectation_complex(&self, rho: &CMatrix) -> Complex64 {
        let d = rho.nrows();
        (0..d)
            .map(|r| {
                let (c, v) = self.row_entry(r);
                v * rho[(c, r)]
            })
            .sum()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase.0 {
            0 => "+",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        f.write_str(prefix)?;
        for p in &self.letters {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    /// Parses `"±XIZY"`; the sign is optional and `+i` / `-i` prefixes are accepted.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (mut k, rest) = if let Some(r) = s.strip_prefix('-') {
            (2u8, r)
        } else if let Some(r) = s.strip_prefix('+') {
            (0, r)
        } else {
            (0, s)
        };
        let rest = if let Some(r) = rest.strip_prefix('i') {
            k += 1;
            r
        } else {
            rest
        };
        let letters = rest
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::Config(format!("invalid Pauli letter {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        PauliString::new(Phase::from_exponent(k), letters)
    }
}

fn check_dense_size(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::Resource(format!(
            "{n}-qubit operator exceeds the dense limit of {limit} qubits"
        )));
    }
    Ok(())
}

/// Real-weighted sum of Pauli words with a lazily built dense matrix.
///
/// Terms are kept in canonical form: sorted by letters, one entry per word,
/// every word carrying phase `+1` (signs are folded into the coefficients).
#[derive(Debug, Clone)]
pub struct Observable {
    num_qubits: usize,
    terms: Vec<(f64, PauliString)>,
    dense: OnceLock<CMatrix>,
}

impl PartialEq for Observable {
    fn eq(&self, other: &Self) -> bool {
        self.num_qubits == other.num_qubits && self.terms == other.terms
    }
}

impl Observable {
    /// Builds a canonical sum. Words with an imaginary phase would make the
    /// sum non-Hermitian and are rejected.
    pub fn new<I>(num_qubits: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, PauliString)>,
    {
        if num_qubits == 0 {
            return Err(Error::Structural("observable on zero qubits".into()));
        }
        let mut merged: BTreeMap<Vec<Pauli>, f64> = BTreeMap::new();
        for (coef, word) in terms {
            if word.num_qubits() != num_qubits {
                return Err(Error::Structural(format!(
                    "term {word} has {} qubits, observable has {num_qubits}",
                    word.num_qubits()
                )));
            }
            let sign = word.phase.sign().ok_or_else(|| {
                Error::NumericalIntegrity(format!("term {word} has an imaginary phase"))
            })?;
            if !coef.is_finite() {
                return Err(Error::NumericalIntegrity(format!("non-finite coefficient on {word}")));
            }
            *merged.entry(word.letters).or_insert(0.0) += sign * coef;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(letters, c)| {
                (
                    c,
                    PauliString {
                        phase: Phase::ONE,
                        letters,
                    },
                )
            })
            .collect();
        Ok(Self {
            num_qubits,
            terms,
            dense: OnceLock::new(),
        })
    }

    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::new(num_qubits, std::iter::empty())
    }

    pub fn from_word(word: PauliString) -> Result<Self> {
        Self::new(word.num_qubits(), [(1.0, word)])
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Σ |coefficient|`, an upper bound on the spectral norm.
    pub fn coefficient_one_norm(&self) -> f64 {
        self.terms.iter().map(|(c, _)| c.abs()).sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.num_qubits,
            self.terms.iter().map(|(c, w)| (c * factor, w.clone())),
        )
    }

    pub fn plus(&self, other: &Observable) -> Result<Self> {
        Self::new(
            self.num_qubits,
            self.terms.iter().chain(other.terms.iter()).cloned(),
        )
    }

    /// Dense `2ⁿ × 2ⁿ` matrix, built once and cached.
    pub fn to_dense(&self) -> Result<&CMatrix> {
        self.to_dense_with_limit(MAX_DENSE_QUBITS)
    }

    pub fn to_dense_with_limit(&self, max_qubits: usize) -> Result<&CMatrix> {
        check_dense_size(self.num_qubits, max_qubits)?;
        Ok(self.dense.get_or_init(|| {
            let d = self.dim();
            let mut m = CMatrix::zeros(d, d);
            for (coef, word) in &self.terms {
                for r in 0..d {
                    let (c, v) = word.row_entry(r);
                    m[(r, c)] += v * *coef;
                }
            }
            m
        }))
    }

    /// `Tr[obs · ρ]`, rejecting states whose trace is off or whose result has
    /// an imaginary part above round-off.
    pub fn expectation(&self, rho: &CMatrix) -> Result<f64> {
        let d = self.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::Structural(format!(
                "state is {}x{}, observable acts on dimension {d}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let tr = crate::linalg::trace(rho);
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::NumericalIntegrity(format!(
                "density matrix trace {tr} is not 1"
            )));
        }
        let value: Complex64 = self
            .terms
            .iter()
            .map(|(c, w)| w.expectation_complex(rho) * *c)
            .sum();
        let scale = self.coefficient_one_norm().max(1.0);
        if value.im.abs() > 1e-10 * scale {
            return Err(Error::NumericalIntegrity(format!(
                "expectation has imaginary residue {:e}",
                value.im
            )));
        }
        Ok(value.re)
    }

    /// Per-site `(x, y, z)` coefficients when every term has weight one.
    ///
    /// Returns `None` if any term acts on two or more qubits or is the identity.
    pub fn single_site_decomposition(&self) -> Option<Vec<[f64; 3]>> {
        let mut sites = vec![[0.0; 3]; self.num_qubits];
        for (c, w) in &self.terms {
            if w.weight() != 1 {
                return None;
            }
            let (j, p) = w
                .letters
                .iter()
                .enumerate()
                .find(|(_, p)| **p != Pauli::I)
                .unwrap();
            sites[j][p.index() as usize - 1] += *c;
        }
        Some(sites)
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (c, w)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            let letters: String = w.letters.iter().map(|p| p.as_char()).collect();
            write!(f, "{c}·{letters}")?;
        }
        Ok(())
    }
}

/// Sum of `letter` over every site: `X_tot`, `Y_tot` or `Z_tot`.
pub fn total_magnetization(n: usize, letter: Pauli) -> Result<Observable> {
    Observable::new(n, (0..n).map(|j| (1.0, PauliString::single(n, j, letter))))
}

/// Free-standing form of [`Observable::expectation`].
pub fn expectation(obs: &Observable, rho: &CMatrix) -> Result<f64> {
    obs.expectation(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermiticity_error, max_abs, SpectralDecomposition};
    use proptest::prelude::*;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn dense_oracle(word: &PauliString) -> CMatrix {
        // Kronecker product of the 2x2 matrices, independent of row_entry.
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let z = Complex64::new(0.0, 0.0);
        let mut m = CMatrix::from_element(1, 1, word.phase().to_complex());
        for p in word.letters() {
            let s = match p {
                Pauli::I => CMatrix::from_row_slice(2, 2, &[one, z, z, one]),
                Pauli::X => CMatrix::from_row_slice(2, 2, &[z, one, one, z]),
                Pauli::Y => CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
                Pauli::Z => CMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
            };
            m = m.kronecker(&s);
        }
        m
    }

    #[test]
    fn x_times_y_is_i_z() {
        let p = ps("X").mul(&ps("Y")).unwrap();
        assert_eq!(p, ps("+iZ"));
        let q = ps("Y").mul(&ps("X")).unwrap();
        assert_eq!(q, ps("-iZ"));
    }

    #[test]
    fn pauli_squares_to_identity() {
        let p = ps("XZ").mul(&ps("XZ")).unwrap();
        assert_eq!(p, ps("II"));
    }

    #[test]
    fn two_qubit_product_matches_dense() {
        let a = ps("XY");
        let b = ps("YY");
        let p = a.mul(&b).unwrap();
        let lhs = dense_oracle(&p);
        let rhs = dense_oracle(&a) * dense_oracle(&b);
        assert!(max_abs(&(lhs - rhs)) < 1e-12);
        assert_eq!(p, ps("+iZI"));
    }

    #[test]
    fn length_mismatch_is_structural() {
        assert!(matches!(ps("X").mul(&ps("XX")), Err(Error::Structural(_))));
    }

    #[test]
    fn parse_and_display() {
        assert_eq!(ps("-XIZY").to_string(), "-XIZY");
        assert_eq!(ps("XZ").to_string(), "+XZ");
        assert!("XQ".parse::<PauliString>().is_err());
        assert!("".parse::<PauliString>().is_err());
    }

    #[test]
    fn z_is_diag_one_minus_one() {
        let z = Observable::from_word(ps("Z")).unwrap();
        let m = z.to_dense().unwrap();
        assert_eq!(m[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(m[(1, 1)], Complex64::new(-1.0, 0.0));
        assert_eq!(m[(0, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn empty_observable_is_zero_matrix() {
        let o = Observable::zero(2).unwrap();
        assert_eq!(max_abs(o.to_dense().unwrap()), 0.0);
    }

    #[test]
    fn heisenberg_bond_spectrum() {
        let o = Observable::new(2, [(1.0, ps("XX")), (1.0, ps("YY")), (1.0, ps("ZZ"))]).unwrap();
        let s = SpectralDecomposition::of(o.to_dense().unwrap()).unwrap();
        let expected = [-3.0, 1.0, 1.0, 1.0];
        for (a, b) in s.eigenvalues.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_cache_is_bitwise_stable() {
        let o = Observable::new(3, [(0.3, ps("XYZ")), (-1.1, ps("ZZI"))]).unwrap();
        let a = o.to_dense().unwrap().clone();
        let b = o.to_dense().unwrap();
        assert_eq!(&a, b);
        assert!(hermiticity_error(b) <= 1e-12);
    }

    #[test]
    fn dense_limit_is_a_resource_error() {
        let o = Observable::from_word(PauliString::identity(11)).unwrap();
        assert!(matches!(o.to_dense(), Err(Error::Resource(_))));
    }

    #[test]
    fn canonical_merge_and_order() {
        let a = Observable::new(2, [(1.0, ps("ZI")), (2.0, ps("XI")), (1.0, ps("-ZI"))]).unwrap();
        let b = Observable::new(2, [(2.0, ps("XI"))]).unwrap();
        assert_eq!(a, b);
        let c = Observable::new(2, [(1.0, ps("ZZ")), (1.0, ps("XX"))]).unwrap();
        assert_eq!(c.terms()[0].1, ps("XX"));
        assert!(matches!(
            Observable::new(1, [(1.0, ps("iX"))]),
            Err(Error::NumericalIntegrity(_))
        ));
    }

    #[test]
    fn expectation_basics() {
        let z = Observable::from_word(ps("Z")).unwrap();
        let mut rho = CMatrix::zeros(2, 2);
        rho[(0, 0)] = Complex64::new(1.0, 0.0);
        assert_eq!(z.expectation(&rho).unwrap(), 1.0);

        let mixed = CMatrix::identity(8, 8).scale(1.0 / 8.0);
        for w in ["XII", "IYZ", "ZZZ", "XYX"] {
            let o = Observable::from_word(ps(w)).unwrap();
            assert!(o.expectation(&mixed).unwrap().abs() < 1e-15);
        }
        let bad = CMatrix::identity(2, 2);
        assert!(matches!(z.expectation(&bad), Err(Error::NumericalIntegrity(_))));
    }

    #[test]
    fn expectation_matches_elementwise_trace() {
        let rho = crate::random::random_density_matrix(&mut crate::random::rng(7), 8);
        let x = total_magnetization(3, Pauli::X).unwrap();
        let m = dense_oracle(&ps("XII")) + dense_oracle(&ps("IXI")) + dense_oracle(&ps("IIX"));
        let mut direct = Complex64::new(0.0, 0.0);
        for i in 0..8 {
            for j in 0..8 {
                direct += m[(i, j)] * rho[(j, i)];
            }
        }
        assert!((x.expectation(&rho).unwrap() - direct.re).abs() < 1e-12);
    }

    #[test]
    fn single_site_decomposition() {
        let x = total_magnetization(3, Pauli::Y).unwrap();
        let s = x.single_site_decomposition().unwrap();
        assert_eq!(s, vec![[0.0, 1.0, 0.0]; 3]);
        let o = Observable::from_word(ps("XX")).unwrap();
        assert!(o.single_site_decomposition().is_none());
    }

    fn arb_word(n: usize) -> impl Strategy<Value = PauliString> {
        (0u8..4, proptest::collection::vec(0u8..4, n)).prop_map(|(k, ls)| {
            PauliString::new(
                Phase::from_exponent(k),
                ls.into_iter().map(|i| Pauli::from_index(i).unwrap()).collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn product_matches_dense_multiplication((a, b) in (1usize..5).prop_flat_map(|n| (arb_word(n), arb_word(n)))) {
            let p = a.mul(&b).unwrap();
            let lhs = p.to_dense().unwrap();
            let rhs = dense_oracle(&a) * dense_oracle(&b);
            prop_assert!(max_abs(&(lhs - rhs)) < 1e-12);
        }

        #[test]
        fn commutation_matches_dense((a, b) in (1usize..5).prop_flat_map(|n| (arb_word(n), arb_word(n)))) {
            let da = dense_oracle(&a);
            let db = dense_oracle(&b);
            let dense_commute = max_abs(&(&da * &db - &db * &da)) < 1e-12;
            prop_assert_eq!(a.commutes_with(&b).unwrap(), dense_commute);
        }

        #[test]
        fn expectation_is_linear(alpha in -2.0f64..2.0, beta in -2.0f64..2.0, seed in 0u64..1000) {
            let rho = crate::random::random_density_matrix(&mut crate::random::rng(seed), 4);
            let a = Observable::new(2, [(0.7, ps("XZ")), (-0.2, ps("YY"))]).unwrap();
            let b = Observable::new(2, [(1.3, ps("ZI")), (0.4, ps("XZ"))]).unwrap();
            let combo = a.scaled(alpha).unwrap().plus(&b.scaled(beta).unwrap()).unwrap();
            let lhs = combo.expectation(&rho).unwrap();
            let rhs = alpha * a.expectation(&rho).unwrap() + beta * b.expectation(&rho).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
