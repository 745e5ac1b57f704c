use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::num::{cabs, lit, to_f64, Complex, Real};

/// Acceptance thresholds for computed states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    /// Max-norm bound on `L vec(rho)` for a steady state.
    pub residual: T,
    /// Lowest admissible eigenvalue.
    pub positivity: T,
    /// Max deviation from Hermiticity and from unit trace.
    pub hermiticity: T,
}

impl<T: Real> Default for Tolerances<T> {
    /// The double-precision thresholds, widened for coarser scalars.
    fn default() -> Self {
        let eps = T::default_epsilon();
        Tolerances {
            residual: lit::<T>(1e-9).max(eps * lit(1e4)),
            positivity: lit::<T>(1e-9).max(eps * lit(1e2)),
            hermiticity: lit::<T>(1e-10).max(eps * lit(1e2)),
        }
    }
}

/// An `n x n` density matrix in the fixed sublevel basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    matrix: DMatrix<Complex<T>>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates trace, Hermiticity and positivity against `tol`.
    pub fn new(matrix: DMatrix<Complex<T>>, tol: &Tolerances<T>) -> Result<Self> {
        let rho = DensityMatrix::new_unchecked(matrix)?;
        rho.check(tol)?;
        Ok(rho)
    }

    /// Wraps a square matrix without physical checks.
    pub fn new_unchecked(matrix: DMatrix<Complex<T>>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::invalid("rho", "must be a non-empty square matrix"));
        }
        Ok(DensityMatrix { matrix })
    }

    /// Pure state `|i><i|`.
    pub fn basis_state(dim: usize, i: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(i, i)] = Complex::new(T::one(), T::zero());
        DensityMatrix { matrix: m }
    }

    /// `I / n`.
    pub fn maximally_mixed(dim: usize) -> Self {
        let w = T::one() / lit(dim as f64);
        DensityMatrix {
            matrix: DMatrix::from_diagonal_element(dim, dim, Complex::new(w, T::zero())),
        }
    }

    /// Rebuilds a matrix from its column-stacked vector.
    pub(crate) fn from_vec(dim: usize, v: &DVector<Complex<T>>) -> Self {
        DensityMatrix {
            matrix: DMatrix::from_column_slice(dim, dim, v.as_slice()),
        }
    }

    /// Column-stacked `vec(rho)`: element `(i, j)` sits at `i + j * n`.
    pub fn to_vec(&self) -> DVector<Complex<T>> {
        DVector::from_column_slice(self.matrix.as_slice())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.matrix
    }

    pub fn population(&self, i: usize) -> T {
        self.matrix[(i, i)].re
    }

    pub fn populations(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.population(i)).collect()
    }

    pub fn trace(&self) -> Complex<T> {
        self.matrix.trace()
    }

    /// `max |rho - rho^†|`.
    pub fn hermiticity_error(&self) -> T {
        let n = self.dim();
        let mut worst = T::zero();
        for i in 0..n {
            for j in i..n {
                worst = worst.max(cabs(self.matrix[(i, j)] - self.matrix[(j, i)].conj()));
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> T {
        let h = self.hermitian_part();
        let eig = SymmetricEigen::new(h);
        eig.eigenvalues
            .iter()
            .copied()
            .fold(eig.eigenvalues[0], |a, b| a.min(b))
    }

    fn hermitian_part(&self) -> DMatrix<Complex<T>> {
        let half = Complex::new(lit::<T>(0.5), T::zero());
        (&self.matrix + self.matrix.adjoint()) * half
    }

    /// Replaces the matrix by its Hermitian part.
    pub(crate) fn hermitize(&mut self) {
        self.matrix = self.hermitian_part();
    }

    pub fn check(&self, tol: &Tolerances<T>) -> Result<()> {
        let herm = self.hermiticity_error();
        if !(herm <= tol.hermiticity) {
            return Err(Error::NonPhysical {
                reason: format!("Hermiticity error {:.3e}", to_f64(herm)),
            });
        }
        let tr = self.trace();
        if !(cabs(tr - Complex::new(T::one(), T::zero())) <= tol.hermiticity) {
            return Err(Error::NonPhysical {
                reason: format!("trace {:.15} differs from 1", to_f64(tr.re)),
            });
        }
        let min_eig = self.min_eigenvalue();
        if !(min_eig >= -tol.positivity) {
            return Err(Error::NonPhysical {
                reason: format!("eigenvalue {:.3e} below the positivity floor", to_f64(min_eig)),
            });
        }
        Ok(())
    }

    /// Max-norm distance to another state.
    pub fn distance(&self, other: &DensityMatrix<T>) -> T {
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .fold(T::zero(), |acc, (a, b)| acc.max(cabs(*a - *b)))
    }
}
