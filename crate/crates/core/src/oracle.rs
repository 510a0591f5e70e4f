//! Reference solutions independent of the thermal machinery: the dual
//! eigenvalue problem `sup_μ μ·q + λ_min(H − μ·Q)`, closeness of thermal
//! states to ground states, and complementary slackness.

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use crate::error::{Error, Result};
use crate::linalg::{fidelity, trace_distance, trace_product, CMatrix, SpectralDecomposition};
use crate::models::ThermoSystem;

#[derive(Debug, Clone)]
pub struct DualSolveConfig {
    /// Supergradient iterations.
    pub iterations: usize,
    /// Target gap between the certified lower and upper bounds.
    pub tolerance: f64,
    /// Initial supergradient step; the step at iteration `m` is `η₀/√m`.
    pub eta0: f64,
    /// Supergradient iterations without improvement before moving on.
    pub patience: usize,
    /// Cutting-plane refinement iterations after the supergradient phase.
    pub refine_iterations: usize,
    /// Eigenvalues within this of the minimum count as ground states.
    pub degeneracy_tol: f64,
}

impl Default for DualSolveConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            tolerance: 1e-7,
            eta0: 1.0,
            patience: 200,
            refine_iterations: 1500,
            degeneracy_tol: 1e-6,
        }
    }
}

/// Maximizer of the dual eigenvalue problem.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub mu_star: Vec<f64>,
    /// Best dual value found; a certified lower bound on the optimum.
    pub value: f64,
    /// Upper bound from the cutting-plane model over the final search box
    /// (`+∞` if none).
    pub upper_bound: f64,
    pub ground_multiplicity: usize,
    pub ground_projector: CMatrix,
    /// Set when the bound gap did not close to the requested tolerance.
    pub low_confidence: bool,
    pub evaluations: usize,
}

impl DualSolution {
    pub fn gap(&self) -> f64 {
        self.upper_bound - self.value
    }
}

/// Dual value and one linear upper model per ground vector.
struct DualPoint {
    value: f64,
    /// `(⟨ψ|H|ψ⟩, ⟨ψ|Q|ψ⟩)` for each ground vector `ψ`.
    cuts: Vec<(f64, Vec<f64>)>,
}

struct DualProblem<'a> {
    system: &'a ThermoSystem,
    q: &'a [f64],
    h: &'a CMatrix,
    charges: Vec<&'a CMatrix>,
    evaluations: usize,
}

impl<'a> DualProblem<'a> {
    fn new(system: &'a ThermoSystem, q: &'a [f64]) -> Result<Self> {
        Ok(Self {
            system,
            q,
            h: system.hamiltonian().to_dense()?,
            charges: system
                .charges()
                .iter()
                .map(|c| c.to_dense())
                .collect::<Result<_>>()?,
            evaluations: 0,
        })
    }

    fn evaluate(&mut self, mu: &[f64]) -> Result<DualPoint> {
        self.evaluations += 1;
        let a = self.system.effective_hamiltonian(mu)?;
        let s = SpectralDecomposition::of(&a)?;
        let e0 = s.min_eigenvalue();
        let value = dot(mu, self.q) + e0;
        let g = s.ground_multiplicity(1e-9 * e0.abs().max(1.0)).min(8);
        let cuts = (0..g)
            .map(|k| {
                let psi = s.eigenvectors.column(k).into_owned();
                let rq = |m: &CMatrix| (psi.adjoint() * m * &psi)[(0, 0)].re;
                (rq(self.h), self.charges.iter().map(|c| rq(c)).collect())
            })
            .collect();
        Ok(DualPoint { value, cuts })
    }

    fn supergradient(&self, point: &DualPoint) -> Vec<f64> {
        self.q.iter().zip(&point.cuts[0].1).map(|(q, r)| q - r).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sup_μ μ·q + λ_min(H − μ·Q)`.
///
/// Supergradient ascent with `η₀/√m` steps and iterate averaging locates the
/// optimum approximately; a cutting-plane model built from the same
/// supergradients then tightens it. Every cut `t ≤ ⟨ψ|H|ψ⟩ + μ·(q − ⟨ψ|Q|ψ⟩)`
/// is a valid upper model of the dual, so the LP optimum bounds the true
/// optimum from above while the best evaluated point bounds it from below.
pub fn dual_eigenvalue_solve(system: &ThermoSystem, q: &[f64], config: &DualSolveConfig) -> Result<DualSolution> {
    let c = system.num_charges();
    if q.len() != c {
        return Err(Error::Structural(format!("{} targets for {c} charges", q.len())));
    }
    let mut problem = DualProblem::new(system, q)?;
    let mut all_cuts: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut best_mu = vec![0.0; c];
    let first = problem.evaluate(&best_mu)?;
    let mut best_value = first.value;

    if c == 0 {
        return finish(&mut problem, best_mu, best_value, best_value, false, config);
    }

    // Supergradient phase.
    let mut mu = best_mu.clone();
    let mut average = vec![0.0; c];
    let mut point = first;
    let mut since_improvement = 0;
    for m in 1..=config.iterations {
        all_cuts.extend(point.cuts.iter().cloned());
        let g = problem.supergradient(&point);
        let step = config.eta0 / (m as f64).sqrt();
        for (x, gi) in mu.iter_mut().zip(&g) {
            *x += step * gi;
        }
        for (a, x) in average.iter_mut().zip(&mu) {
            *a += (x - *a) / m as f64;
        }
        point = problem.evaluate(&mu)?;
        if point.value > best_value {
            best_value = point.value;
            best_mu = mu.clone();
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= config.patience {
                break;
            }
        }
    }
    all_cuts.extend(point.cuts.iter().cloned());
    let avg_point = problem.evaluate(&average)?;
    all_cuts.extend(avg_point.cuts.iter().cloned());
    if avg_point.value > best_value {
        best_value = avg_point.value;
        best_mu = average.clone();
    }

    // Cutting-plane refinement inside a box that grows while its optimum
    // sits on the boundary.
    let mut radius = 4.0 * best_mu.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut center = best_mu.clone();
    let mut upper = f64::INFINITY;
    let mut remaining = config.refine_iterations;
    let mut certified = false;
    'boxes: for _ in 0..8 {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<Variable> = center
            .iter()
            .map(|&x| lp.add_var(0.0, (x - radius, x + radius)))
            .collect();
        let t = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
        let cut_expr = |cut: &(f64, Vec<f64>)| {
            let mut expr: Vec<(Variable, f64)> = vec![(t, 1.0)];
            for (k, v) in vars.iter().enumerate() {
                expr.push((*v, -(q[k] - cut.1[k])));
            }
            (expr, cut.0)
        };
        for cut in &all_cuts {
            let (expr, rhs) = cut_expr(cut);
            lp.add_constraint(expr.as_slice(), ComparisonOp::Le, rhs);
        }
        let mut solution = lp
            .solve()
            .map_err(|e| Error::Numerical(format!("cutting-plane LP failed: {e}")))?;
        loop {
            let lp_mu: Vec<f64> = vars.iter().map(|v| solution[*v]).collect();
            let bound = solution.objective();
            if bound - best_value <= config.tolerance {
                upper = bound;
                // Concavity extends the certificate beyond the box when the
                // best point is well inside it.
                let best_interior = best_mu
                    .iter()
                    .zip(&center)
                    .all(|(x, c0)| (x - c0).abs() <= 0.75 * radius);
                if best_interior {
                    certified = true;
                    break 'boxes;
                }
                break;
            }
            if remaining == 0 {
                upper = bound;
                break 'boxes;
            }
            remaining -= 1;
            let p = problem.evaluate(&lp_mu)?;
            if p.value > best_value {
                best_value = p.value;
                best_mu = lp_mu.clone();
            }
            for cut in &p.cuts {
                let (expr, rhs) = cut_expr(cut);
                solution = solution
                    .add_constraint(expr.as_slice(), ComparisonOp::Le, rhs)
                    .map_err(|e| Error::Numerical(format!("cutting-plane LP failed: {e}")))?;
                all_cuts.push(cut.clone());
            }
        }
        center = best_mu.clone();
        radius *= 4.0;
    }
    finish(&mut problem, best_mu, best_value, upper, !certified, config)
}

fn finish(
    problem: &mut DualProblem<'_>,
    mu: Vec<f64>,
    value: f64,
    upper: f64,
    low_confidence: bool,
    config: &DualSolveConfig,
) -> Result<DualSolution> {
    let a = problem.system.effective_hamiltonian(&mu)?;
    let s = SpectralDecomposition::of(&a)?;
    let g = s.ground_multiplicity(config.degeneracy_tol);
    Ok(DualSolution {
        ground_projector: s.lowest_projector(g),
        ground_multiplicity: g,
        mu_star: mu,
        value,
        upper_bound: upper,
        low_confidence,
        evaluations: problem.evaluations,
    })
}

/// `|Tr[(H − μ*·Q)ρ] − λ_min(H − μ*·Q)|`.
pub fn complementary_slackness_residual(system: &ThermoSystem, dual: &DualSolution, rho: &CMatrix) -> Result<f64> {
    let a = system.effective_hamiltonian(&dual.mu_star)?;
    let e0 = SpectralDecomposition::of(&a)?.min_eigenvalue();
    Ok((trace_product(&a, rho).re - e0).abs())
}

// ---------------------------------------------------------------------------
// Closeness of thermal and ground states

pub const RENYI_ORDERS: [f64; 3] = [0.5, 2.0, 3.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenyiValues {
    pub alpha: f64,
    pub petz: f64,
    pub sandwiched: f64,
    pub geometric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosenessValues {
    pub trace_distance: f64,
    pub fidelity: f64,
    /// `D(Π₁/d_G ‖ ρ_β)`.
    pub relative_entropy: f64,
    pub renyi: Vec<RenyiValues>,
}

/// Closeness of `ρ_β = e^{−βH}/Z` to the maximally mixed ground state,
/// computed from the matrices directly and from the spectrum in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosenessReport {
    pub direct: ClosenessValues,
    pub closed_form: ClosenessValues,
    pub ground_dim: usize,
    pub dim: usize,
    /// `λ₂ − λ₁`, or 0 for a fully degenerate spectrum.
    pub gap: f64,
}

fn zero_values() -> ClosenessValues {
    ClosenessValues {
        trace_distance: 0.0,
        fidelity: 1.0,
        relative_entropy: 0.0,
        renyi: RENYI_ORDERS
            .iter()
            .map(|&alpha| RenyiValues {
                alpha,
                petz: 0.0,
                sandwiched: 0.0,
                geometric: 0.0,
            })
            .collect(),
    }
}

/// Relative cutoff defining the support of `σ`.
const SUPPORT_FLOOR: f64 = 1e-12;

/// `σ` on its support, with `ρ` compressed to that support: `M = W†ρW`
/// where the columns of `W` span `supp σ`.
///
/// Valid because `ρ` and `σ` commute here, so `supp σ` is invariant under
/// `ρ` and `W† f(ρ) W = f(M)`. Applying `f` to `M` rather than to the
/// eigenvalues of `ρ` keeps negative powers of tiny excited populations
/// (down to `e^{−β·spread}`) from amplifying roundoff overlaps between the
/// two eigenbases.
struct SupportFrame {
    sigma: Vec<f64>,
    m: SpectralDecomposition,
}

impl SupportFrame {
    fn new(rho: &CMatrix, sigma: &CMatrix) -> Result<Self> {
        let ss = SpectralDecomposition::of(sigma)?;
        let cut = SUPPORT_FLOOR * ss.max_eigenvalue();
        let keep: Vec<usize> = (0..ss.dim()).filter(|&i| ss.eigenvalues[i] > cut).collect();
        let w = ss.eigenvectors.select_columns(&keep);
        let m = crate::linalg::hermitian_part(&(w.adjoint() * rho * &w));
        let m = SpectralDecomposition::of(&m)?;
        if m.min_eigenvalue() <= 0.0 {
            return Err(Error::NumericalIntegrity(
                "ρ is not positive on the support of σ".into(),
            ));
        }
        Ok(Self {
            sigma: keep.iter().map(|&i| ss.eigenvalues[i]).collect(),
            m,
        })
    }

    /// `S^{a} f(M) S^{a}`.
    fn compressed<F: Fn(f64) -> f64>(&self, f: F, a: f64) -> CMatrix {
        let mut m = self.m.apply(f);
        for (i, &si) in self.sigma.iter().enumerate() {
            for (j, &sj) in self.sigma.iter().enumerate() {
                m[(i, j)] *= (si * sj).powf(a);
            }
        }
        crate::linalg::hermitian_part(&m)
    }

    /// `Σ_i s_i^p M_ii`.
    fn weighted_trace(&self, m: &CMatrix, p: f64) -> f64 {
        self.sigma.iter().enumerate().map(|(i, s)| s.powf(p) * m[(i, i)].re).sum()
    }

    fn entropy_term(&self) -> f64 {
        self.sigma.iter().map(|s| s * s.ln()).sum()
    }
}

fn trace_power(m: &CMatrix, p: f64) -> Result<f64> {
    let s = SpectralDecomposition::of(m)?;
    Ok(s.eigenvalues.iter().filter(|&&x| x > 0.0).map(|x| x.powf(p)).sum())
}

fn direct_values(rho: &CMatrix, sigma: &CMatrix) -> Result<ClosenessValues> {
    let td = trace_distance(rho, sigma)?;
    let f = fidelity(rho, sigma)?;
    let frame = SupportFrame::new(rho, sigma)?;

    // D(σ‖ρ) = Tr[σ ln σ] − Tr[σ ln ρ]
    let d = frame.entropy_term() - frame.weighted_trace(&frame.compressed(f64::ln, 0.0), 1.0);

    let renyi = RENYI_ORDERS
        .iter()
        .map(|&alpha| {
            let k = 1.0 / (alpha - 1.0);
            // Tr[σ^α ρ^{1−α}]
            let petz = frame.weighted_trace(&frame.compressed(|x| x.powf(1.0 - alpha), 0.0), alpha);
            // Tr[(ρ^γ σ ρ^γ)^α] = Tr[(σ^{1/2} ρ^{2γ} σ^{1/2})^α], γ = (1−α)/2α
            let sandwiched = trace_power(&frame.compressed(|x| x.powf((1.0 - alpha) / alpha), 0.5), alpha)?;
            // Tr[ρ (ρ^{-1/2} σ ρ^{-1/2})^α] = Tr[σ (σ^{1/2} ρ^{-1} σ^{1/2})^{α−1}]
            let inner = SpectralDecomposition::of(&frame.compressed(|x| 1.0 / x, 0.5))?;
            let geometric = frame.weighted_trace(&inner.apply(|x| x.powf(alpha - 1.0)), 1.0);
            Ok(RenyiValues {
                alpha,
                petz: k * petz.ln(),
                sandwiched: k * sandwiched.ln(),
                geometric: k * geometric.ln(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClosenessValues {
        trace_distance: td,
        fidelity: f,
        relative_entropy: d,
        renyi,
    })
}

/// Direct and closed-form closeness between `e^{−βH}/Z` and `Π₁/Tr[Π₁]`.
pub fn closeness_metrics(h: &CMatrix, beta: f64) -> Result<ClosenessReport> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("β must be finite and non-negative, got {beta}")));
    }
    let s = SpectralDecomposition::of(h)?;
    let d = s.dim();
    let spread = s.max_eigenvalue() - s.min_eigenvalue();
    let tol = 1e-9 * spread.abs().max(1.0);
    let dg = s.ground_multiplicity(tol);
    if dg == d {
        let z = zero_values();
        return Ok(ClosenessReport {
            direct: z.clone(),
            closed_form: z,
            ground_dim: d,
            dim: d,
            gap: 0.0,
        });
    }
    let e1 = s.min_eigenvalue();
    let excited: f64 = s.eigenvalues.iter().skip(dg).map(|&e| (-beta * (e - e1)).exp()).sum();
    let ratio = excited / dg as f64;
    let td = 1.0 / (1.0 + dg as f64 / excited);
    let f = 1.0 / (1.0 + ratio);
    let rel = ratio.ln_1p();
    let closed_form = ClosenessValues {
        trace_distance: td,
        fidelity: f,
        relative_entropy: rel,
        renyi: RENYI_ORDERS
            .iter()
            .map(|&alpha| RenyiValues {
                alpha,
                petz: rel,
                sandwiched: rel,
                geometric: rel,
            })
            .collect(),
    };

    let rho = s.apply(|e| (-beta * (e - e1)).exp());
    let rho = rho.unscale(crate::linalg::trace(&rho).re);
    let sigma = s.lowest_projector(dg).unscale(dg as f64);
    let direct = direct_values(&rho, &sigma)?;
    Ok(ClosenessReport {
        direct,
        closed_form,
        ground_dim: dg,
        dim: d,
        gap: s.eigenvalues[dg] - e1,
    })
}

fn check_inversion(epsilon: f64, gap: f64, d: usize, dg: usize) -> Result<()> {
    if !(gap > 0.0) || dg == 0 || dg >= d {
        return Err(Error::Domain("need a positive gap and 0 < d_G < d".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("ε must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Inverse temperature at which the trace-distance bound equals `ε`:
/// `β = (1/Δ) ln[((1 − ε)/ε)((d − d_G)/d_G)]`.
pub fn beta_for_trace_distance(epsilon: f64, gap: f64, d: usize, dg: usize) -> Result<f64> {
    check_inversion(epsilon, gap, d, dg)?;
    if epsilon >= 1.0 {
        return Err(Error::Domain("ε must be below 1".into()));
    }
    let r = (d - dg) as f64 / dg as f64;
    Ok((((1.0 - epsilon) / epsilon) * r).ln() / gap)
}

/// Inverse temperature at which the relative-entropy bound equals `ε`:
/// `β = (1/Δ) ln[(1/(e^ε − 1))((d − d_G)/d_G)]`.
pub fn beta_for_relative_entropy(epsilon: f64, gap: f64, d: usize, dg: usize) -> Result<f64> {
    check_inversion(epsilon, gap, d, dg)?;
    let r = (d - dg) as f64 / dg as f64;
    Ok((r / epsilon.exp_m1()).ln() / gap)
}

/// Upper bound `1/(1 + e^{βΔ} d_G/(d − d_G))` on the trace distance.
pub fn trace_distance_bound(beta: f64, gap: f64, d: usize, dg: usize) -> f64 {
    1.0 / (1.0 + (beta * gap).exp() * dg as f64 / (d - dg) as f64)
}

/// Lower bound `1/(1 + e^{−βΔ}(d − d_G)/d_G)` on the fidelity.
pub fn fidelity_bound(beta: f64, gap: f64, d: usize, dg: usize) -> f64 {
    1.0 / (1.0 + (-beta * gap).exp() * (d - dg) as f64 / dg as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{gradient, hessian_exact, objective_f, thermal_state};
    use crate::models::{build_heisenberg, build_stabilizer_system, builtin_code, single_qubit_logical_words, HeisenbergSpec};
    use crate::operators::Observable;
    use crate::random::{random_gapped_hamiltonian, rng};
    use nalgebra::DVector;
    use num_complex::Complex64;
    use rand::Rng;

    fn perfect5() -> ThermoSystem {
        let code = builtin_code("perfect5").unwrap();
        build_stabilizer_system(&code, &single_qubit_logical_words(), &[0.2, 0.0, 0.5], None).unwrap()
    }

    /// Damped Newton ascent on the smooth dual, for brackets in tests.
    fn smooth_dual_max(system: &ThermoSystem, q: &[f64], t: f64, start: &[f64]) -> (Vec<f64>, f64) {
        let mut mu = start.to_vec();
        for _ in 0..200 {
            let g = gradient(system, q, &mu, t).unwrap();
            if g.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-11 {
                break;
            }
            let h = hessian_exact(system, &mu, t).unwrap();
            let step = h.lu().solve(&DVector::from_column_slice(&g)).unwrap();
            let f0 = objective_f(system, q, &mu, t).unwrap();
            let mut eta = 1.0;
            loop {
                let trial: Vec<f64> = mu.iter().zip(step.iter()).map(|(m, s)| m - eta * s).collect();
                if objective_f(system, q, &trial, t).unwrap() >= f0 || eta < 1e-8 {
                    mu = trial;
                    break;
                }
                eta *= 0.5;
            }
        }
        let f = objective_f(system, q, &mu, t).unwrap();
        (mu, f)
    }

    #[test]
    fn perfect5_ground_energy() {
        let sys = perfect5();
        let sol = dual_eigenvalue_solve(&sys, sys.targets(), &DualSolveConfig::default()).unwrap();
        assert!((sol.value + 4.0).abs() < 1e-3, "{}", sol.value);
        assert!(!sol.low_confidence, "{:?} {} {} {}", sol.mu_star, sol.value, sol.upper_bound, sol.evaluations);
        assert!(sol.upper_bound + 1e-12 >= sol.value);
    }

    #[test]
    fn no_charges_gives_ground_energy() {
        let h = crate::random::random_hermitian_observable(&mut rng(2), 3);
        let sys = ThermoSystem::new("h", h.clone(), vec![], vec![], false).unwrap();
        let sol = dual_eigenvalue_solve(&sys, &[], &DualSolveConfig::default()).unwrap();
        let e0 = SpectralDecomposition::of(h.to_dense().unwrap()).unwrap().min_eigenvalue();
        assert_eq!(sol.value, e0);
    }

    #[test]
    fn heisenberg_bracket() {
        let sys = build_heisenberg(&HeisenbergSpec::line(3, true), [1.0, 0.0, 1.0]).unwrap();
        let q = sys.targets().to_vec();
        let sol = dual_eigenvalue_solve(&sys, &q, &DualSolveConfig::default()).unwrap();
        assert!(!sol.low_confidence, "gap {}", sol.gap());
        let t = 1e-3 / (3.0 * std::f64::consts::LN_2);
        let (_, f) = smooth_dual_max(&sys, &q, t, &sol.mu_star);
        let slack = 3.0 * t * std::f64::consts::LN_2;
        assert!(f <= sol.upper_bound + 1e-9);
        assert!(sol.value <= f + slack + 1e-9);
    }

    #[test]
    fn weak_duality_on_feasible_states() {
        // Codespace states with the target logical expectations are feasible.
        let code = builtin_code("repetition3").unwrap();
        let sys = build_stabilizer_system(&code, &single_qubit_logical_words(), &[0.2, 0.0, 0.5], None).unwrap();
        let sol = dual_eigenvalue_solve(&sys, sys.targets(), &DualSolveConfig::default()).unwrap();
        let p = code.codespace_projector().unwrap();
        let mut r = rng(4);
        for _ in 0..10 {
            // Mix the encoded target with a random state outside the codespace
            // that has zero logical expectations.
            let mut rho = p.clone() * Complex64::new(0.5, 0.0);
            for (w, qi) in sys.charges().iter().zip(sys.targets()) {
                rho += w.to_dense().unwrap() * &p * Complex64::new(0.5 * qi, 0.0);
            }
            let lam: f64 = r.random_range(0.0..0.3);
            let outside = (CMatrix::identity(8, 8) - &p).scale(1.0 / 6.0);
            let mix = rho.scale(1.0 - lam) + outside.scale(lam);
            let ok = sys
                .charges()
                .iter()
                .zip(sys.targets())
                .all(|(c, qi)| (c.expectation(&mix).unwrap() - qi).abs() < 1e-9);
            if ok {
                let e = sys.hamiltonian().expectation(&mix).unwrap();
                assert!(e >= sol.value - 1e-6);
            }
        }
    }

    #[test]
    fn complementary_slackness() {
        let sys = build_heisenberg(&HeisenbergSpec::line(3, true), [1.0, 0.0, 1.0]).unwrap();
        let sol = dual_eigenvalue_solve(&sys, sys.targets(), &DualSolveConfig::default()).unwrap();
        let ground = sol.ground_projector.unscale(sol.ground_multiplicity as f64);
        assert!(complementary_slackness_residual(&sys, &sol, &ground).unwrap() <= 1e-6);

        let a = sys.effective_hamiltonian(&sol.mu_star).unwrap();
        let s = SpectralDecomposition::of(&a).unwrap();
        let d = 8.0;
        let dg = s.ground_multiplicity(1e-9);
        let gap = s.eigenvalues[dg] - s.eigenvalues[0];
        let mixed = CMatrix::identity(8, 8).scale(1.0 / d);
        let r = complementary_slackness_residual(&sys, &sol, &mixed).unwrap();
        assert!(r >= gap * (1.0 - dg as f64 / d) - 1e-9);

        let t = 1e-3;
        let st = thermal_state(&sys, &sol.mu_star, t).unwrap();
        let r = complementary_slackness_residual(&sys, &sol, &st.rho).unwrap();
        let norm = s.min_eigenvalue().abs().max(s.max_eigenvalue().abs());
        let bound = trace_distance_bound(1.0 / t, gap, 8, dg) * 2.0 * norm;
        assert!(r <= bound + 1e-9);
    }

    #[test]
    fn infinite_temperature_closeness() {
        let h = random_gapped_hamiltonian(&mut rng(1), 8, 2, 0.05);
        let rep = closeness_metrics(&h, 0.0).unwrap();
        assert!((rep.closed_form.trace_distance - 6.0 / 8.0).abs() < 1e-12);
        assert!((rep.closed_form.fidelity - 2.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_identities() {
        let h = random_gapped_hamiltonian(&mut rng(2), 8, 3, 0.05);
        for beta in [0.1, 1.0, 10.0] {
            let c = closeness_metrics(&h, beta).unwrap().closed_form;
            assert!((c.trace_distance - (1.0 - c.fidelity)).abs() < 1e-12);
            assert!((c.relative_entropy + c.fidelity.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_matches_closed_form() {
        let mut r = rng(3);
        for _ in 0..10 {
            let dg = r.random_range(1..=3);
            let h = random_gapped_hamiltonian(&mut r, 8, dg, 0.05);
            for beta in [0.1, 1.0, 10.0] {
                let rep = closeness_metrics(&h, beta).unwrap();
                let (a, b) = (&rep.direct, &rep.closed_form);
                assert!((a.trace_distance - b.trace_distance).abs() < 1e-10);
                assert!((a.fidelity - b.fidelity).abs() < 1e-10);
                assert!((a.relative_entropy - b.relative_entropy).abs() < 1e-10);
                for (x, y) in a.renyi.iter().zip(&b.renyi) {
                    assert!((x.petz - y.petz).abs() < 1e-10);
                    assert!((x.sandwiched - y.sandwiched).abs() < 1e-10);
                    assert!((x.geometric - y.geometric).abs() < 1e-10, "{} {beta} {} {}", x.alpha, x.geometric, y.geometric);
                }
            }
        }
    }

    #[test]
    fn wide_spectra_at_low_temperature() {
        // Spectral spread near 10, so excited populations reach e^{-100} at β = 10.
        let mut r = rng(11);
        for _ in 0..10 {
            let h = crate::random::random_hermitian_observable(&mut r, 3).to_dense().unwrap().clone();
            let rep = closeness_metrics(&h, 10.0).unwrap();
            let (a, b) = (&rep.direct, &rep.closed_form);
            for (x, y) in a.renyi.iter().zip(&b.renyi) {
                for (u, v) in [(x.petz, y.petz), (x.sandwiched, y.sandwiched), (x.geometric, y.geometric)] {
                    assert!((u - v).abs() < 1e-10, "alpha {}: {u} vs {v}", x.alpha);
                }
            }
            assert!((a.relative_entropy - b.relative_entropy).abs() < 1e-10);
        }
    }

    #[test]
    fn fully_degenerate_spectrum() {
        let rep = closeness_metrics(&CMatrix::identity(4, 4), 2.0).unwrap();
        assert_eq!(rep.closed_form.trace_distance, 0.0);
        assert_eq!(rep.direct.relative_entropy, 0.0);
    }

    #[test]
    fn trace_distance_decreases_with_beta() {
        let h = random_gapped_hamiltonian(&mut rng(5), 8, 2, 0.1);
        let mut last = f64::INFINITY;
        for k in 0..30 {
            let td = closeness_metrics(&h, 0.5 * k as f64).unwrap().closed_form.trace_distance;
            assert!(td <= last);
            last = td;
        }
    }

    #[test]
    fn beta_inversions_hit_epsilon() {
        let (gap, d, dg) = (0.3, 8, 2);
        let eps = 0.01;
        let b = beta_for_trace_distance(eps, gap, d, dg).unwrap();
        assert!((trace_distance_bound(b, gap, d, dg) - eps).abs() < 1e-12);
        let b = beta_for_relative_entropy(eps, gap, d, dg).unwrap();
        let bound = ((-b * gap).exp() * (d - dg) as f64 / dg as f64).ln_1p();
        assert!((bound - eps).abs() < 1e-12);
    }

    #[test]
    fn single_charge_trivial_system() {
        let h = Observable::zero(1).unwrap();
        let z = Observable::from_word("Z".parse().unwrap()).unwrap();
        let sys = ThermoSystem::new("z", h, vec![z], vec![0.3], false).unwrap();
        // D(μ) = 0.3μ − |μ| is maximized at μ = 0 with value 0.
        let sol = dual_eigenvalue_solve(&sys, &[0.3], &DualSolveConfig::default()).unwrap();
        assert!(sol.value.abs() < 1e-7);
        assert!(!sol.low_confidence);
    }
}
