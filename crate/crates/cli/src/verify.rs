//! Property suites behind `qthermo verify`.

use rand::Rng;
use serde::Serialize;

use qthermo::gibbs::{gradient, hessian_exact, objective_f, smoothness_l, thermal_state};
use qthermo::linalg::{trace_product, SpectralDecomposition};
use qthermo::models::{
    build_heisenberg, build_stabilizer_system, builtin_code, HeisenbergSpec, LogicalWord, BUILTIN_CODES,
};
use qthermo::oracle::closeness_metrics;
use qthermo::random::{random_gapped_hamiltonian, random_hermitian_observable, random_system, rng};
use qthermo::shots::{hessian_fourier_quadrature, PhiMode};
use qthermo::ThermoSystem;

use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Formulas,
    Gradients,
    Codes,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Self::Formulas => "formulas",
            Self::Gradients => "gradients",
            Self::Codes => "codes",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// Largest deviation observed (0 for exact checks).
    pub value: f64,
    pub tolerance: f64,
    pub cases: usize,
    pub passed: bool,
}

impl Check {
    fn max_error(name: impl Into<String>, errors: &[f64], tolerance: f64) -> Self {
        let value = errors
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if m.is_nan() || x.is_nan() { f64::NAN } else { m.max(x) });
        let finite = errors.iter().all(|e| e.is_finite());
        Self {
            name: name.into(),
            value,
            tolerance,
            cases: errors.len(),
            passed: finite && value <= tolerance,
        }
    }

    fn exact(name: impl Into<String>, outcomes: &[bool]) -> Self {
        let failures = outcomes.iter().filter(|&&ok| !ok).count();
        Self {
            name: name.into(),
            value: failures as f64,
            tolerance: 0.0,
            cases: outcomes.len(),
            passed: failures == 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: &'static str,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}/{}: max {:.3e} (tol {:.0e}, {} cases)",
                    if c.passed { "PASS" } else { "FAIL" },
                    self.suite,
                    c.name,
                    c.value,
                    c.tolerance,
                    c.cases
                )
            })
            .collect()
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> CliResult<Report> {
    let checks = match suite {
        Suite::Formulas => formulas(seed)?,
        Suite::Gradients => gradients(seed)?,
        Suite::Codes => codes()?,
    };
    Ok(Report {
        suite: suite.name(),
        seed,
        checks,
    })
}

fn formulas(seed: u64) -> CliResult<Vec<Check>> {
    let mut r = rng(seed);
    let mut direct = Vec::new();
    let mut identities = Vec::new();
    for h_index in 0..50 {
        // Alternate generic spectra with planted degenerate ground spaces.
        let h = if h_index % 2 == 0 {
            random_hermitian_observable(&mut r, 3).to_dense()?.clone()
        } else {
            let dg = r.random_range(2..=3);
            random_gapped_hamiltonian(&mut r, 8, dg, 0.05)
        };
        for beta in [0.1, 1.0, 10.0] {
            let rep = closeness_metrics(&h, beta)?;
            let (a, b) = (&rep.direct, &rep.closed_form);
            direct.push((a.trace_distance - b.trace_distance).abs());
            direct.push((a.fidelity - b.fidelity).abs());
            direct.push((a.relative_entropy - b.relative_entropy).abs());
            for (x, y) in a.renyi.iter().zip(&b.renyi) {
                direct.push((x.petz - y.petz).abs());
                direct.push((x.sandwiched - y.sandwiched).abs());
                direct.push((x.geometric - y.geometric).abs());
            }
            identities.push((b.trace_distance - (1.0 - b.fidelity)).abs());
            identities.push((b.relative_entropy + b.fidelity.ln()).abs());
        }
    }

    let mut duality = Vec::new();
    let sys = random_system(&mut r, 3, 3);
    for _ in 0..100 {
        let mu: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
        let t = r.random_range(0.1..2.0);
        let state = thermal_state(&sys, &mu, t)?;
        let a = sys.effective_hamiltonian(&mu)?;
        let mq: f64 = mu.iter().zip(sys.targets()).map(|(m, q)| m * q).sum();
        let rhs = mq + trace_product(&a, &state.rho).re - t * state.entropy();
        duality.push((objective_f(&sys, sys.targets(), &mu, t)? - rhs).abs());
    }

    Ok(vec![
        Check::max_error("closeness direct vs closed form", &direct, 1e-10),
        Check::max_error("TD = 1 - F and D = -ln F", &identities, 1e-12),
        Check::max_error("dual objective = free-energy expression", &duality, 1e-10),
    ])
}

fn central_difference<F>(x: &[f64], h: f64, f: F) -> CliResult<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> CliResult<Vec<f64>>,
{
    (0..x.len())
        .map(|i| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let (fp, fm) = (f(&plus)?, f(&minus)?);
            Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        })
        .collect()
}

fn random_point<R: Rng>(r: &mut R, c: usize) -> (Vec<f64>, f64) {
    let mu = (0..c).map(|_| r.random_range(-1.0..1.0)).collect();
    (mu, r.random_range(0.1..2.0))
}

fn gradients(seed: u64) -> CliResult<Vec<Check>> {
    let mut r = rng(seed);
    let h = 1e-5;

    let mut grad_err = Vec::new();
    for _ in 0..25 {
        let sys = random_system(&mut r, 3, 3);
        let (mu, t) = random_point(&mut r, 3);
        let q = sys.targets();
        let fd = central_difference(&mu, h, |m| Ok(vec![objective_f(&sys, q, m, t)?]))?;
        let g = gradient(&sys, q, &mu, t)?;
        for i in 0..3 {
            grad_err.push((g[i] - fd[i][0]).abs());
        }
    }

    let mut hess_err = Vec::new();
    let mut max_eig = Vec::new();
    let mut norm_excess = Vec::new();
    for _ in 0..100 {
        let sys = random_system(&mut r, 3, 3);
        let (mu, t) = random_point(&mut r, 3);
        let q = sys.targets();
        let hess = hessian_exact(&sys, &mu, t)?;
        let fd = central_difference(&mu, h, |m| Ok(gradient(&sys, q, m, t)?))?;
        for (j, col) in fd.iter().enumerate() {
            for i in 0..3 {
                hess_err.push((hess[(i, j)] - col[i]).abs());
            }
        }
        let eig = hess.clone().symmetric_eigen().eigenvalues;
        let top = eig.max();
        let norm = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        max_eig.push(top.max(0.0));
        norm_excess.push((norm - smoothness_l(&sys, t)?).max(0.0));
    }

    let mut fourier = Vec::new();
    for _ in 0..10 {
        let sys = random_system(&mut r, 2, 3);
        let (mu, t) = random_point(&mut r, 3);
        let exact = hessian_exact(&sys, &mu, t)?;
        let quad = hessian_fourier_quadrature(&sys, &mu, t, PhiMode::Generic)?;
        fourier.push((exact - quad).abs().max());
    }

    let mut extensive = Vec::new();
    for nnn in [false, true] {
        let sys = build_heisenberg(&HeisenbergSpec::line(3, nnn), [1.0, 0.0, 1.0])?;
        for _ in 0..3 {
            let (mu, t) = random_point(&mut r, 3);
            let g = hessian_fourier_quadrature(&sys, &mu, t, PhiMode::Generic)?;
            let e = hessian_fourier_quadrature(&sys, &mu, t, PhiMode::Extensive)?;
            extensive.push((g - e).abs().max());
        }
    }

    Ok(vec![
        Check::max_error("gradient vs central differences", &grad_err, 1e-6),
        Check::max_error("hessian vs differences of gradient", &hess_err, 1e-5),
        Check::max_error("hessian max eigenvalue", &max_eig, 1e-10),
        Check::max_error("hessian norm above L", &norm_excess, 0.0),
        Check::max_error("fourier quadrature vs log-mean hessian", &fourier, 1e-3),
        Check::max_error("extensive vs generic channel", &extensive, 1e-6),
    ])
}

fn codes() -> CliResult<Vec<Check>> {
    let mut checks = Vec::new();
    for name in BUILTIN_CODES {
        let code = builtin_code(name)?;
        let mut ok = Vec::new();
        for (a, ga) in code.generators.iter().enumerate() {
            for gb in &code.generators[a + 1..] {
                ok.push(ga.commutes_with(gb)?);
            }
            for l in code.logical_x.iter().chain(&code.logical_z) {
                ok.push(l.commutes_with(ga)?);
            }
        }
        for i in 0..code.k {
            for j in 0..code.k {
                ok.push(code.logical_x[i].commutes_with(&code.logical_z[j])? == (i != j));
            }
            let y = code.logical_y(i)?;
            ok.push(y.phase().is_real());
        }
        let words = LogicalWord::all_nontrivial(code.k);
        for w in &words {
            ok.push(code.logical_word(w)?.phase().is_real());
        }
        checks.push(Check::exact(format!("{name} commutation and phases"), &ok));

        let sys: ThermoSystem =
            build_stabilizer_system(&code, &words, &vec![0.0; words.len()], None)?;
        checks.push(Check::max_error(
            format!("{name} charges conserved"),
            &[sys.max_conservation_violation()?],
            1e-12,
        ));
        let spectrum = SpectralDecomposition::of(sys.hamiltonian().to_dense()?)?;
        let expected = -((code.n - code.k) as f64);
        checks.push(Check::max_error(
            format!("{name} ground energy -(n-k)"),
            &[(spectrum.min_eigenvalue() - expected).abs()],
            1e-10,
        ));
        let dim = 1usize << code.k;
        checks.push(Check::exact(
            format!("{name} ground space dimension 2^k"),
            &[spectrum.ground_multiplicity(1e-9) == dim],
        ));
    }
    Ok(checks)
}
