use nalgebra::{DMatrix, DVector};

use super::density::DensityMatrix;
use crate::num::{creal, lit, Complex, Real};

/// A decay channel `rate * D[op]`, rate in MHz.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperator<T: Real> {
    pub rate: T,
    pub op: DMatrix<Complex<T>>,
}

impl<T: Real> JumpOperator<T> {
    pub fn new(rate: T, op: DMatrix<Complex<T>>) -> Self {
        JumpOperator { rate, op }
    }
}

/// Master-equation generator acting on column-stacked density matrices,
/// in angular units (rad/µs) so that `exp(L t)` takes `t` in µs.
///
/// With `vec(A X B) = (B^T ⊗ A) vec(X)`:
///
/// ```text
/// L = -i (I ⊗ H - H^T ⊗ I)
///     + Σ_k γ_k [ conj(A_k) ⊗ A_k - ½ I ⊗ A_k^†A_k - ½ (A_k^†A_k)^T ⊗ I ]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian<T: Real> {
    dim: usize,
    matrix: DMatrix<Complex<T>>,
}

impl<T: Real> Liouvillian<T> {
    /// Builds the generator for any `n`-level system. `hamiltonian` and the
    /// rates are ordinary frequencies in MHz.
    pub fn from_lindblad(hamiltonian: &DMatrix<Complex<T>>, jumps: &[JumpOperator<T>]) -> Self {
        let n = hamiltonian.nrows();
        assert!(hamiltonian.is_square(), "Hamiltonian must be square");
        let two_pi = T::two_pi();
        let zero = Complex::new(T::zero(), T::zero());

        // Effective non-Hermitian part: -i H - ½ Σ γ A†A, applied from both
        // sides; the recycling terms are added per jump below.
        let mut k_eff = hamiltonian * Complex::new(T::zero(), -two_pi);
        for jump in jumps {
            assert_eq!(jump.op.shape(), (n, n), "jump operator dimension mismatch");
            k_eff -= (jump.op.adjoint() * &jump.op) * creal(lit::<T>(0.5) * two_pi * jump.rate);
        }
        let k_adj = k_eff.adjoint();

        // Element ((i, j), (k, l)) sits at (i + n j, k + n l).
        let mut l = DMatrix::from_element(n * n, n * n, zero);
        for j in 0..n {
            for i in 0..n {
                let row = i + j * n;
                for k in 0..n {
                    l[(row, k + j * n)] += k_eff[(i, k)];
                    l[(row, i + k * n)] += k_adj[(k, j)];
                }
            }
        }
        for jump in jumps {
            if jump.rate == T::zero() {
                continue;
            }
            let g = creal(two_pi * jump.rate);
            let nz: Vec<(usize, usize, Complex<T>)> = (0..n)
                .flat_map(|c| (0..n).map(move |r| (r, c)))
                .filter_map(|(r, c)| {
                    let z = jump.op[(r, c)];
                    (z != zero).then_some((r, c, z))
                })
                .collect();
            for &(i, k, a_ik) in &nz {
                for &(j, m, a_jm) in &nz {
                    l[(i + j * n, k + m * n)] += g * a_ik * a_jm.conj();
                }
            }
        }
        Liouvillian { dim: n, matrix: l }
    }

    /// Wraps a raw `n^2 x n^2` generator.
    pub fn from_matrix(dim: usize, matrix: DMatrix<Complex<T>>) -> Self {
        assert_eq!(matrix.shape(), (dim * dim, dim * dim), "generator must be n^2 x n^2");
        Liouvillian { dim, matrix }
    }

    /// Number of levels `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.matrix
    }

    pub fn apply(&self, rho: &DensityMatrix<T>) -> DensityMatrix<T> {
        DensityMatrix::from_vec(self.dim, &self.apply_vec(&rho.to_vec()))
    }

    pub(crate) fn apply_vec(&self, v: &DVector<Complex<T>>) -> DVector<Complex<T>> {
        &self.matrix * v
    }

    /// Largest `|Σ_i L[(i,i), col]|` over all columns; zero for a
    /// trace-preserving generator.
    pub fn trace_costate_error(&self) -> T {
        let n = self.dim;
        (0..n * n)
            .map(|col| {
                let s = (0..n).fold(Complex::new(T::zero(), T::zero()), |acc, i| {
                    acc + self.matrix[(i + i * n, col)]
                });
                (s.re * s.re + s.im * s.im).sqrt()
            })
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Max-norm of `L vec(rho)`.
    pub fn residual(&self, rho: &DensityMatrix<T>) -> T {
        self.apply_vec(&rho.to_vec())
            .iter()
            .fold(T::zero(), |acc, z| acc.max((z.re * z.re + z.im * z.im).sqrt()))
    }
}
