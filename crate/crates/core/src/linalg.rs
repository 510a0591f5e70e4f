//! Dense complex linear algebra helpers built on `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_SWEEPS: usize = 10_000;

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns, in eigenvalue order.
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn of(matrix: &CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Structural(format!(
                "eigen-decomposition of non-square {}x{} matrix",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let eig = matrix
            .clone()
            .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_SWEEPS)
            .ok_or_else(|| Error::Numerical("Hermitian eigensolver did not converge".into()))?;
        let d = matrix.nrows();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut eigenvectors = CMatrix::zeros(d, d);
        for (dst, &src) in order.iter().enumerate() {
            eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// `V f(Λ) V†`.
    pub fn apply<F: Fn(f64) -> f64>(&self, f: F) -> CMatrix {
        let d = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for j in 0..d {
            let w = f(self.eigenvalues[j]);
            scaled.column_mut(j).scale_mut(w);
        }
        &scaled * self.eigenvectors.adjoint()
    }

    /// `‖A − VΛV†‖_max`.
    pub fn reconstruction_error(&self, original: &CMatrix) -> f64 {
        max_abs(&(self.apply(|x| x) - original))
    }

    /// Number of eigenvalues within `tol` of the minimum.
    pub fn ground_multiplicity(&self, tol: f64) -> usize {
        let e0 = self.min_eigenvalue();
        self.eigenvalues.iter().take_while(|&&e| e - e0 <= tol).count()
    }

    /// Projector onto the first `count` eigenvectors.
    pub fn lowest_projector(&self, count: usize) -> CMatrix {
        let v = self.eigenvectors.columns(0, count);
        &v * v.adjoint()
    }

    /// Matrix expressed in this eigenbasis: `V† M V`.
    pub fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        self.eigenvectors.adjoint() * m * &self.eigenvectors
    }
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_error(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// `Tr[AB]` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let d = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Largest absolute eigenvalue of a Hermitian matrix.
pub fn spectral_norm_hermitian(m: &CMatrix) -> Result<f64> {
    let s = SpectralDecomposition::of(m)?;
    Ok(s.min_eigenvalue().abs().max(s.max_eigenvalue().abs()))
}

/// Square root of a PSD matrix; eigenvalues below `floor · λ_max` are treated as 0.
pub fn psd_sqrt(m: &CMatrix, floor: f64) -> Result<CMatrix> {
    let s = SpectralDecomposition::of(&hermitian_part(m))?;
    let cut = floor * s.max_eigenvalue().abs().max(1.0);
    Ok(s.apply(|x| if x <= cut { 0.0 } else { x.sqrt() }))
}

/// Sum of singular values.
pub fn trace_norm(m: &CMatrix) -> f64 {
    m.clone().singular_values().iter().sum()
}

/// Uhlmann fidelity `‖√ρ √σ‖₁²`.
pub fn fidelity(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    let a = psd_sqrt(rho, 1e-14)?;
    let b = psd_sqrt(sigma, 1e-14)?;
    let f = trace_norm(&(a * b));
    Ok(f * f)
}

/// `½‖ρ − σ‖₁` for Hermitian arguments.
pub fn trace_distance(rho: &CMatrix, sigma: &CMatrix) -> Result<f64> {
    let s = SpectralDecomposition::of(&hermitian_part(&(rho - sigma)))?;
    Ok(0.5 * s.eigenvalues.iter().map(|x| x.abs()).sum::<f64>())
}

/// Von Neumann entropy with the `0 · ln 0 = 0` convention.
pub fn von_neumann_entropy(rho: &CMatrix) -> Result<f64> {
    let s = SpectralDecomposition::of(&hermitian_part(rho))?;
    Ok(s.eigenvalues
        .iter()
        .filter(|&&p| p > 1e-300)
        .map(|&p| -p * p.ln())
        .sum())
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}
