//! Dense complex linear algebra and the quantum primitives built on it.
//!
//! Vectorization follows the column-stacking convention: component `a + d*b`
//! of `vec_col(A)` is `A[(a, b)]`, so that `(A ⊗ B) vec_col(C) = vec_col(B C Aᵀ)`.
//! Choi matrices, measurement operators and partial traces all use this
//! ordering, where the first tensor factor indexes operator columns.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Entrywise Hermiticity tolerance.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Slack allowed below zero for eigenvalues of PSD operators.
pub const PSD_TOL: f64 = 1e-9;
/// Tolerance on unit trace and on the trace-preserving condition.
pub const TRACE_TOL: f64 = 1e-9;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

/// Builds a matrix from real row-major entries.
pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> ComplexMatrix {
    ComplexMatrix::from_row_iterator(rows, cols, entries.iter().map(|&x| c(x, 0.0)))
}

pub fn sigma_x() -> ComplexMatrix {
    real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn sigma_z() -> ComplexMatrix {
    real_matrix(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

pub fn trace(a: &ComplexMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

pub fn is_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest entrywise deviation `max |A - A†|`.
pub fn hermitian_deviation(a: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn ensure_square(a: &ComplexMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

fn ensure_hermitian(a: &ComplexMatrix) -> Result<()> {
    ensure_square(a)?;
    if !is_finite(a) {
        return Err(Error::NonFinite);
    }
    let deviation = hermitian_deviation(a);
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// Symmetrizes `A` to `(A + A†)/2`.
pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Kronecker product, `(A⊗B)[(i*p + k, j*q + l)] = A[(i, j)] * B[(k, l)]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Column-stacking vectorization of a square matrix.
pub fn vec_col(a: &ComplexMatrix) -> Result<ComplexVector> {
    ensure_square(a)?;
    // nalgebra storage is column-major, which is exactly the stacking order.
    Ok(ComplexVector::from_column_slice(a.as_slice()))
}

/// Inverse of [`vec_col`].
pub fn unvec_col(v: &ComplexVector, d: usize) -> Result<ComplexMatrix> {
    if v.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: format!("vector of length {}", d * d),
            found: format!("length {}", v.len()),
        });
    }
    Ok(ComplexMatrix::from_column_slice(d, d, v.as_slice()))
}

/// `|A⟩⟩⟨⟨B|` under the column-stacking convention.
pub fn vec_outer(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let va = vec_col(a)?;
    let vb = vec_col(b)?;
    Ok(&va * vb.adjoint())
}

/// Which tensor factor of `H ⊗ H` a partial trace removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorFactor {
    First,
    Second,
}

/// Partial trace of a `d²×d²` operator over one tensor factor.
///
/// Row index `i1*d + i2` addresses `(first, second)`. Tracing the second
/// factor of `|E⟩⟩⟨⟨E|` yields `(E†E)ᵀ`.
pub fn partial_trace(x: &ComplexMatrix, factor: TensorFactor, d: usize) -> Result<ComplexMatrix> {
    if x.nrows() != d * d || x.ncols() != d * d {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", d * d),
            found: format!("{}x{}", x.nrows(), x.ncols()),
        });
    }
    let mut out = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += match factor {
                    TensorFactor::Second => x[(i * d + k, j * d + k)],
                    TensorFactor::First => x[(k * d + i, k * d + j)],
                };
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    /// Unitary whose columns are the eigenvectors, in eigenvalue order.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let mut scaled = self.eigenvectors.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            for i in 0..n {
                scaled[(i, j)] *= lam;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }

    /// Applies `f` to the spectrum: `U f(Λ) U†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let mapped = HermitianEigen {
            eigenvalues: self.eigenvalues.iter().map(|&l| f(l)).collect(),
            eigenvectors: self.eigenvectors.clone(),
        };
        mapped.reconstruct()
    }
}

pub fn herm_eig(a: &ComplexMatrix) -> Result<HermitianEigen> {
    ensure_hermitian(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(HermitianEigen {
            eigenvalues: vec![],
            eigenvectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(a: &ComplexMatrix) -> Result<f64> {
    Ok(herm_eig(a)?
        .eigenvalues
        .first()
        .copied()
        .unwrap_or(f64::INFINITY))
}

/// Square root of a PSD matrix; rounding-level negative eigenvalues clamp to zero.
pub fn sqrtm_psd(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(herm_eig(a)?.map(|l| l.max(0.0).sqrt()))
}

/// Hilbert–Schmidt norm `sqrt(Tr A†A)`.
pub fn hs_norm(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// A validated density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        ensure_hermitian(&matrix)?;
        let tr = trace(&matrix);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::TraceNotOne { trace: tr.re });
        }
        let min_eig = min_eigenvalue(&matrix)?;
        if min_eig < -PSD_TOL {
            return Err(Error::NotPsd { min_eig });
        }
        Ok(Self { matrix })
    }

    /// Skips validation; callers guarantee the invariants up to solver tolerance.
    pub(crate) fn new_unchecked(matrix: ComplexMatrix) -> Self {
        Self {
            matrix: hermitian_part(&matrix),
        }
    }

    /// `|ψ⟩⟨ψ|` for a state vector, normalized first.
    pub fn from_pure(psi: &ComplexVector) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NonFinite);
        }
        let unit = psi.unscale(norm);
        Self::new(&unit * unit.adjoint())
    }

    /// Qubit state with Bloch vector `r`, `(I + r·σ)/2`.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let m = (identity(2) + sigma_x() * c(r[0], 0.0) + sigma_y() * c(r[1], 0.0)
            + sigma_z() * c(r[2], 0.0))
        .scale(0.5);
        Self::new(m)
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            matrix: identity(d).unscale(d as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        trace(&(&self.matrix * &self.matrix)).re
    }
}

/// A `d²×d²` Hermitian Choi matrix. Positivity and trace preservation are
/// properties to query, not construction invariants, since affine models
/// can leave the CPTP set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    d: usize,
    matrix: ComplexMatrix,
}

impl ChoiMatrix {
    pub fn new(matrix: ComplexMatrix, d: usize) -> Result<Self> {
        if matrix.nrows() != d * d || matrix.ncols() != d * d {
            return Err(Error::DimensionMismatch {
                expected: format!("{0}x{0}", d * d),
                found: format!("{}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        ensure_hermitian(&matrix)?;
        Ok(Self { d, matrix })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix).expect("Choi matrix is Hermitian by construction")
    }

    /// `max |Tr₂(X) − I|` entrywise.
    pub fn tp_deviation(&self) -> f64 {
        let reduced = partial_trace(&self.matrix, TensorFactor::Second, self.d)
            .expect("dimensions checked at construction");
        (reduced - identity(self.d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_cptp(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol && self.tp_deviation() <= tol
    }
}

/// Root fidelity `Tr sqrt(sqrt(ρ) σ sqrt(ρ))`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("dimension {}", rho.dim()),
            found: format!("dimension {}", sigma.dim()),
        });
    }
    let sqrt_rho = sqrtm_psd(rho.matrix())?;
    let inner = hermitian_part(&(&sqrt_rho * sigma.matrix() * &sqrt_rho));
    let eig = herm_eig(&inner)?;
    Ok(eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum())
}
