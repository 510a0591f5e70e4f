//! Thermodynamic systems: Heisenberg spin models on graphs and stabilizer
//! systems built from small error-correcting codes.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{commutator, max_abs, spectral_norm_hermitian, CMatrix};
use crate::operators::{total_magnetization, Observable, Pauli, PauliString, Phase};

/// Hamiltonian, charges and constraint targets.
#[derive(Debug, Clone)]
pub struct ThermoSystem {
    label: String,
    hamiltonian: Observable,
    charges: Vec<Observable>,
    targets: Vec<f64>,
    conserved: bool,
    charge_norms: OnceLock<Vec<f64>>,
}

impl ThermoSystem {
    /// When `conserved` is set, every `[H, Q_i]` is checked to vanish.
    pub fn new(
        label: impl Into<String>,
        hamiltonian: Observable,
        charges: Vec<Observable>,
        targets: Vec<f64>,
        conserved: bool,
    ) -> Result<Self> {
        let n = hamiltonian.num_qubits();
        if charges.len() != targets.len() {
            return Err(Error::Config(format!(
                "{} charges but {} targets",
                charges.len(),
                targets.len()
            )));
        }
        if let Some(q) = charges.iter().find(|q| q.num_qubits() != n) {
            return Err(Error::Structural(format!(
                "charge acts on {} qubits, Hamiltonian on {n}",
                q.num_qubits()
            )));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("non-finite constraint target".into()));
        }
        let system = Self {
            label: label.into(),
            hamiltonian,
            charges,
            targets,
            conserved,
            charge_norms: OnceLock::new(),
        };
        if conserved {
            let worst = system.max_conservation_violation()?;
            if worst > 1e-12 {
                return Err(Error::Contract(format!(
                    "charges flagged conserved but max |[H, Q]| = {worst:e}"
                )));
            }
        }
        Ok(system)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn hamiltonian(&self) -> &Observable {
        &self.hamiltonian
    }

    pub fn charges(&self) -> &[Observable] {
        &self.charges
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn is_conserved(&self) -> bool {
        self.conserved
    }

    pub fn num_qubits(&self) -> usize {
        self.hamiltonian.num_qubits()
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn num_charges(&self) -> usize {
        self.charges.len()
    }

    /// Same system with a different target vector.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        if targets.len() != self.charges.len() {
            return Err(Error::Config(format!(
                "{} charges but {} targets",
                self.charges.len(),
                targets.len()
            )));
        }
        let mut s = self.clone();
        s.targets = targets;
        Ok(s)
    }

    /// Dense `H − Σ μ_i Q_i`.
    pub fn effective_hamiltonian(&self, mu: &[f64]) -> Result<CMatrix> {
        if mu.len() != self.charges.len() {
            return Err(Error::Structural(format!(
                "μ has length {}, system has {} charges",
                mu.len(),
                self.charges.len()
            )));
        }
        let mut a = self.hamiltonian.to_dense()?.clone();
        for (m, q) in mu.iter().zip(&self.charges) {
            if *m != 0.0 {
                a -= q.to_dense()?.scale(*m);
            }
        }
        Ok(a)
    }

    /// Spectral norms `‖Q_i‖`, computed once.
    pub fn charge_norms(&self) -> Result<&[f64]> {
        if let Some(v) = self.charge_norms.get() {
            return Ok(v);
        }
        let norms = self
            .charges
            .iter()
            .map(|q| spectral_norm_hermitian(q.to_dense()?))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.charge_norms.get_or_init(|| norms))
    }

    /// `max_i ‖[H, Q_i]‖_max`.
    pub fn max_conservation_violation(&self) -> Result<f64> {
        let h = self.hamiltonian.to_dense()?;
        let mut worst: f64 = 0.0;
        for q in &self.charges {
            worst = worst.max(max_abs(&commutator(h, q.to_dense()?)));
        }
        Ok(worst)
    }
}

/// Weighted simple graph on `vertex_count` sites.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingGraph {
    vertex_count: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl CouplingGraph {
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for &(i, j, w) in &edges {
            if i >= vertex_count || j >= vertex_count {
                return Err(Error::Config(format!(
                    "edge ({i}, {j}) outside {vertex_count} vertices"
                )));
            }
            if i == j {
                return Err(Error::Config(format!("self-loop at vertex {i}")));
            }
            if !w.is_finite() {
                return Err(Error::Config(format!("non-finite coupling on ({i}, {j})")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::Config(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(Self {
            vertex_count,
            edges,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// `Σ_{(i,j)} J_ij (X_i X_j + Y_i Y_j + Z_i Z_j)`.
    pub fn heisenberg_hamiltonian(&self) -> Result<Observable> {
        let n = self.vertex_count;
        let mut terms = Vec::with_capacity(3 * self.edges.len());
        for &(i, j, w) in &self.edges {
            for p in [Pauli::X, Pauli::Y, Pauli::Z] {
                let mut letters = vec![Pauli::I; n];
                letters[i] = p;
                letters[j] = p;
                terms.push((w, PauliString::new(Phase::ONE, letters)?));
            }
        }
        Observable::new(n, terms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Line { n: usize },
    Grid { rows: usize, cols: usize },
}

/// Heisenberg model on a line or square grid with open boundaries.
///
/// Next-to-nearest neighbors are sites two apart on a line and the two
/// diagonals of each grid plaquette; their coupling is `λJ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeisenbergSpec {
    pub geometry: Geometry,
    pub nnn: bool,
    pub j: f64,
    pub lambda: f64,
}

impl HeisenbergSpec {
    pub const DEFAULT_LAMBDA: f64 = 0.5;

    pub fn line(n: usize, nnn: bool) -> Self {
        Self {
            geometry: Geometry::Line { n },
            nnn,
            j: 1.0,
            lambda: Self::DEFAULT_LAMBDA,
        }
    }

    pub fn grid(rows: usize, cols: usize, nnn: bool) -> Self {
        Self {
            geometry: Geometry::Grid { rows, cols },
            nnn,
            j: 1.0,
            lambda: Self::DEFAULT_LAMBDA,
        }
    }

    pub fn num_sites(&self) -> usize {
        match self.geometry {
            Geometry::Line { n } => n,
            Geometry::Grid { rows, cols } => rows * cols,
        }
    }

    pub fn graph(&self) -> Result<CouplingGraph> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !self.j.is_finite() {
            return Err(Error::Config("non-finite coupling J".into()));
        }
        let nnn_weight = self.lambda * self.j;
        let mut edges = Vec::new();
        match self.geometry {
            Geometry::Line { n } => {
                if n < 2 {
                    return Err(Error::Config(format!("line needs n >= 2, got {n}")));
                }
                edges.extend((0..n - 1).map(|i| (i, i + 1, self.j)));
                if self.nnn {
                    edges.extend((0..n.saturating_sub(2)).map(|i| (i, i + 2, nnn_weight)));
                }
            }
            Geometry::Grid { rows, cols } => {
                if rows * cols < 2 {
                    return Err(Error::Config(format!("{rows}x{cols} grid has fewer than 2 sites")));
                }
                if self.nnn && (rows < 2 || cols < 2) {
                    return Err(Error::Config(format!(
                        "diagonal neighbors need at least 2 rows and 2 columns, got {rows}x{cols}"
                    )));
                }
                let site = |r: usize, c: usize| r * cols + c;
                for r in 0..rows {
                    for c in 0..cols {
                        if c + 1 < cols {
                            edges.push((site(r, c), site(r, c + 1), self.j));
                        }
                        if r + 1 < rows {
                            edges.push((site(r, c), site(r + 1, c), self.j));
                        }
                        if self.nnn && r + 1 < rows && c + 1 < cols {
                            edges.push((site(r, c), site(r + 1, c + 1), nnn_weight));
                            edges.push((site(r, c + 1), site(r + 1, c), nnn_weight));
                        }
                    }
                }
            }
        }
        CouplingGraph::new(self.num_sites(), edges)
    }

    pub fn label(&self) -> String {
        let shape = match self.geometry {
            Geometry::Line { n } => format!("line{n}"),
            Geometry::Grid { rows, cols } => format!("grid{rows}x{cols}"),
        };
        format!("heisenberg-{shape}-{}", if self.nnn { "nnn" } else { "nn" })
    }
}

/// Heisenberg system with charges `(X_tot, Y_tot, Z_tot)`.
pub fn build_heisenberg(spec: &HeisenbergSpec, targets: [f64; 3]) -> Result<ThermoSystem> {
    let graph = spec.graph()?;
    let n = graph.vertex_count();
    let h = graph.heisenberg_hamiltonian()?;
    let charges = [Pauli::X, Pauli::Y, Pauli::Z]
        .into_iter()
        .map(|p| total_magnetization(n, p))
        .collect::<Result<Vec<_>>>()?;
    ThermoSystem::new(spec.label(), h, charges, targets.to_vec(), true)
}

/// Stabilizer code given by generators and logical operator pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizerCode {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub generators: Vec<PauliString>,
    pub logical_x: Vec<PauliString>,
    pub logical_z: Vec<PauliString>,
}

impl StabilizerCode {
    /// Checks commutation structure and independence of the generators.
    pub fn new(
        name: impl Into<String>,
        generators: Vec<PauliString>,
        logical_x: Vec<PauliString>,
        logical_z: Vec<PauliString>,
    ) -> Result<Self> {
        let n = generators
            .first()
            .map(|g| g.num_qubits())
            .ok_or_else(|| Error::Config("code without generators".into()))?;
        if generators.len() >= n {
            return Err(Error::Config(format!(
                "{} generators on {n} qubits leave no logical qubit",
                generators.len()
            )));
        }
        let k = n - generators.len();
        if logical_x.len() != k || logical_z.len() != k {
            return Err(Error::Config(format!(
                "expected {k} logical X and Z operators, got {} and {}",
                logical_x.len(),
                logical_z.len()
            )));
        }
        let code = Self {
            name: name.into(),
            n,
            k,
            generators,
            logical_x,
            logical_z,
        };
        code.check_invariants()?;
        Ok(code)
    }

    fn check_invariants(&self) -> Result<()> {
        let all = self
            .generators
            .iter()
            .chain(&self.logical_x)
            .chain(&self.logical_z);
        for p in all {
            if p.num_qubits() != self.n {
                return Err(Error::Config(format!("{p} does not act on {} qubits", self.n)));
            }
            if !p.phase().is_real() {
                return Err(Error::Config(format!("{p} is not Hermitian")));
            }
        }
        for (a, ga) in self.generators.iter().enumerate() {
            for gb in &self.generators[a + 1..] {
                if !ga.commutes_with(gb)? {
                    return Err(Error::Config(format!("generators {ga} and {gb} anticommute")));
                }
            }
            for l in self.logical_x.iter().chain(&self.logical_z) {
                if !l.commutes_with(ga)? {
                    return Err(Error::Config(format!("logical {l} anticommutes with {ga}")));
                }
            }
        }
        for i in 0..self.k {
            for j in 0..self.k {
                let xz = self.logical_x[i].commutes_with(&self.logical_z[j])?;
                if xz == (i == j) {
                    return Err(Error::Config(format!(
                        "logical X{i} and Z{j} have the wrong commutation relation"
                    )));
                }
                if i != j
                    && (!self.logical_x[i].commutes_with(&self.logical_x[j])?
                        || !self.logical_z[i].commutes_with(&self.logical_z[j])?)
                {
                    return Err(Error::Config(format!(
                        "logical operators of qubits {i} and {j} do not commute"
                    )));
                }
            }
        }
        if self.n <= crate::operators::MAX_DENSE_QUBITS {
            let tr = crate::linalg::trace(&self.codespace_projector()?).re;
            let expected = (1usize << self.k) as f64;
            if (tr - expected).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "generators are dependent: codespace trace {tr}, expected {expected}"
                )));
            }
        }
        Ok(())
    }

    /// `Π (I + S_i)/2`.
    pub fn codespace_projector(&self) -> Result<CMatrix> {
        let d = 1usize << self.n;
        let mut p = CMatrix::identity(d, d);
        for g in &self.generators {
            let s = g.to_dense()?;
            p = (&p + &p * s).scale(0.5);
        }
        Ok(p)
    }

    /// `Ȳ_i = i X̄_i Z̄_i`.
    pub fn logical_y(&self, i: usize) -> Result<PauliString> {
        let xz = self.logical_x[i].mul(&self.logical_z[i])?;
        Ok(xz.clone().with_phase(Phase::I * xz.phase()))
    }

    /// Logical Pauli `σ̄_index` on logical qubit `i` (0 = identity).
    pub fn logical_pauli(&self, i: usize, index: u8) -> Result<PauliString> {
        match index {
            0 => Ok(PauliString::identity(self.n)),
            1 => Ok(self.logical_x[i].clone()),
            2 => self.logical_y(i),
            3 => Ok(self.logical_z[i].clone()),
            _ => Err(Error::Config(format!("logical Pauli index {index} outside 0..=3"))),
        }
    }

    /// `σ̄_{w₁,1} ⋯ σ̄_{w_k,k}` as a single signed word.
    pub fn logical_word(&self, word: &LogicalWord) -> Result<PauliString> {
        if word.len() != self.k {
            return Err(Error::Config(format!(
                "logical word {word} has length {}, code has k = {}",
                word.len(),
                self.k
            )));
        }
        let mut acc = PauliString::identity(self.n);
        for (i, &idx) in word.indices().iter().enumerate() {
            acc = acc.mul(&self.logical_pauli(i, idx)?)?;
        }
        if !acc.phase().is_real() {
            return Err(Error::NumericalIntegrity(format!(
                "logical product {word} has imaginary phase"
            )));
        }
        Ok(acc)
    }
}

/// Logical Pauli product as an [`Observable`].
pub fn logical_pauli_product(code: &StabilizerCode, word: &LogicalWord) -> Result<Observable> {
    Observable::from_word(code.logical_word(word)?)
}

fn words(list: &[&str]) -> Vec<PauliString> {
    list.iter().map(|s| s.parse().unwrap()).collect()
}

/// Built-in codes: `repetition3`, `perfect5`, `detect422`.
pub fn builtin_code(name: &str) -> Result<StabilizerCode> {
    match name {
        "repetition3" => StabilizerCode::new(
            name,
            words(&["ZZI", "IZZ"]),
            words(&["XXX"]),
            words(&["ZII"]),
        ),
        "perfect5" => StabilizerCode::new(
            name,
            words(&["XZZXI", "IXZZX", "XIXZZ", "ZXIXZ"]),
            words(&["XXXXX"]),
            words(&["ZZZZZ"]),
        ),
        "detect422" => StabilizerCode::new(
            name,
            words(&["XXXX", "ZZZZ"]),
            words(&["XXII", "XIXI"]),
            words(&["IZIZ", "IIZZ"]),
        ),
        other => Err(Error::Config(format!(
            "unknown code {other:?}; expected repetition3, perfect5 or detect422"
        ))),
    }
}

pub const BUILTIN_CODES: [&str; 3] = ["repetition3", "perfect5", "detect422"];

/// Tuple over `{0,1,2,3}^k` naming a logical Pauli product; written as a
/// digit string such as `"22"` for `Ȳ₁Ȳ₂`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LogicalWord(Vec<u8>);

impl LogicalWord {
    pub fn new(indices: Vec<u8>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Config("empty logical word".into()));
        }
        if let Some(bad) = indices.iter().find(|&&i| i > 3) {
            return Err(Error::Config(format!("logical Pauli index {bad} outside 0..=3")));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&i| i == 0)
    }

    /// All `4^k − 1` non-identity words in lexicographic order.
    pub fn all_nontrivial(k: usize) -> Vec<LogicalWord> {
        (1..(1usize << (2 * k)))
            .map(|idx| {
                LogicalWord(
                    (0..k)
                        .map(|j| ((idx >> (2 * (k - 1 - j))) & 3) as u8)
                        .collect(),
                )
            })
            .collect()
    }
}

impl FromStr for LogicalWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .filter(|&d| d <= 3)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::Config(format!("invalid logical word {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(digits)
    }
}

impl fmt::Display for LogicalWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// `H = −Σ γ_i S_i` with logical-product charges. `weights` defaults to all ones.
pub fn build_stabilizer_system(
    code: &StabilizerCode,
    charges: &[LogicalWord],
    targets: &[f64],
    weights: Option<&[f64]>,
) -> Result<ThermoSystem> {
    if charges.len() != targets.len() {
        return Err(Error::Config(format!(
            "{} charges but {} targets",
            charges.len(),
            targets.len()
        )));
    }
    let gamma: Vec<f64> = match weights {
        Some(w) if w.len() != code.generators.len() => {
            return Err(Error::Config(format!(
                "{} generator weights for {} generators",
                w.len(),
                code.generators.len()
            )))
        }
        Some(w) => w.to_vec(),
        None => vec![1.0; code.generators.len()],
    };
    let h = Observable::new(
        code.n,
        code.generators
            .iter()
            .zip(&gamma)
            .map(|(g, w)| (-w, g.clone())),
    )?;
    let qs = charges
        .iter()
        .map(|w| {
            if w.is_identity() {
                return Err(Error::Config("identity word cannot be a charge".into()));
            }
            logical_pauli_product(code, w)
        })
        .collect::<Result<Vec<_>>>()?;
    let label = format!("{}-stabilizer", code.name);
    ThermoSystem::new(label, h, qs, targets.to_vec(), true)
}

/// Charges `X̄, Ȳ, Z̄` on a single logical qubit.
pub fn single_qubit_logical_words() -> Vec<LogicalWord> {
    (1..=3).map(|i| LogicalWord(vec![i])).collect()
}
