use nalgebra::{DMatrix, DVector};

use super::density::{DensityMatrix, Tolerances};
use super::liouvillian::Liouvillian;
use crate::error::{Error, Result};
use crate::num::{creal, lit, to_f64, Complex, Real};

/// What to do when the stationary manifold is more than one-dimensional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegeneracyPolicy {
    /// Report [`Error::SingularSystem`].
    #[default]
    Reject,
    /// Return the minimal-norm trace-one solution.
    MinimalNorm,
}

/// Steady state under [`DegeneracyPolicy::Reject`] and default tolerances.
pub fn steady_state<T: Real>(l: &Liouvillian<T>) -> Result<DensityMatrix<T>> {
    steady_state_with(l, DegeneracyPolicy::Reject, &Tolerances::default())
}

/// Orthonormal real coordinates of a Hermitian matrix: `rho[i,i]`, then
/// `√2 Re rho[i,j]` and `√2 Im rho[i,j]` for `i < j`.
#[derive(Debug, Clone, Copy)]
enum Coord {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

fn coords(n: usize) -> Vec<Coord> {
    let mut out: Vec<Coord> = (0..n).map(Coord::Diag).collect();
    for i in 0..n {
        for j in i + 1..n {
            out.push(Coord::Re(i, j));
            out.push(Coord::Im(i, j));
        }
    }
    out
}

/// `L` restricted to Hermitian matrices, in the coordinates of [`coords`].
/// Exact because `L` maps Hermitian matrices to Hermitian matrices.
fn real_generator<T: Real>(l: &Liouvillian<T>, basis: &[Coord]) -> DMatrix<T> {
    let n = l.dim();
    let m = l.matrix();
    let r2 = lit::<T>(2.0).sqrt();
    let inv_r2 = T::one() / r2;
    let i_unit = Complex::new(T::zero(), T::one());
    let column = |c: Coord| -> DVector<Complex<T>> {
        match c {
            Coord::Diag(i) => m.column(i + i * n).into_owned(),
            Coord::Re(i, j) => (m.column(i + j * n) + m.column(j + i * n)) * creal(inv_r2),
            Coord::Im(i, j) => (m.column(i + j * n) - m.column(j + i * n)) * (i_unit * creal(inv_r2)),
        }
    };
    let mut out = DMatrix::zeros(basis.len(), basis.len());
    for (col, &c) in basis.iter().enumerate() {
        let v = column(c);
        for (row, &r) in basis.iter().enumerate() {
            out[(row, col)] = match r {
                Coord::Diag(i) => v[i + i * n].re,
                Coord::Re(i, j) => v[i + j * n].re * r2,
                Coord::Im(i, j) => v[i + j * n].im * r2,
            };
        }
    }
    out
}

fn to_density<T: Real>(n: usize, basis: &[Coord], x: &DVector<T>) -> DensityMatrix<T> {
    let inv_r2 = T::one() / lit::<T>(2.0).sqrt();
    let mut v = DVector::from_element(n * n, Complex::new(T::zero(), T::zero()));
    for (k, &c) in basis.iter().enumerate() {
        match c {
            Coord::Diag(i) => v[i + i * n].re = x[k],
            Coord::Re(i, j) => {
                v[i + j * n].re = x[k] * inv_r2;
                v[j + i * n].re = x[k] * inv_r2;
            }
            Coord::Im(i, j) => {
                v[i + j * n].im = x[k] * inv_r2;
                v[j + i * n].im = -x[k] * inv_r2;
            }
        }
    }
    DensityMatrix::from_vec(n, &v)
}

/// Solves `L vec(rho) = 0` over Hermitian `rho`, with the equation for
/// `rho[0,0]` replaced by `tr(rho) = 1`. The dropped equation is redundant
/// because the trace of `L vec(rho)` vanishes identically.
pub fn steady_state_with<T: Real>(
    l: &Liouvillian<T>,
    policy: DegeneracyPolicy,
    tol: &Tolerances<T>,
) -> Result<DensityMatrix<T>> {
    let n = l.dim();
    let basis = coords(n);
    let mut a = real_generator(l, &basis);
    a.row_mut(0).fill(T::zero());
    for i in 0..n {
        a[(0, i)] = T::one();
    }
    let mut b = DVector::zeros(basis.len());
    b[0] = T::one();

    let lu = a.clone().lu();
    let (lo, hi) = lu
        .u()
        .diagonal()
        .iter()
        .fold((T::max_value().unwrap_or(T::one()), T::zero()), |(lo, hi), z| {
            (lo.min(z.abs()), hi.max(z.abs()))
        });
    let ratio = if hi > T::zero() { lo / hi } else { T::zero() };
    let singular = !(ratio > T::default_epsilon() * lit(1e3));

    let x = if !singular {
        lu.solve(&b).ok_or(Error::SingularSystem {
            pivot_ratio: to_f64(ratio),
        })?
    } else {
        match policy {
            DegeneracyPolicy::Reject => {
                return Err(Error::SingularSystem {
                    pivot_ratio: to_f64(ratio),
                })
            }
            DegeneracyPolicy::MinimalNorm => {
                let svd = a.svd(true, true);
                let cutoff = svd.singular_values.max() * T::default_epsilon() * lit(basis.len() as f64 * 10.0);
                svd.solve(&b, cutoff).map_err(|_| Error::SingularSystem {
                    pivot_ratio: to_f64(ratio),
                })?
            }
        }
    };

    let mut rho = to_density(n, &basis, &x);
    let residual = l.residual(&rho);
    if !(residual <= tol.residual) {
        return Err(Error::ResidualTooLarge {
            residual: to_f64(residual),
        });
    }
    rho.check(tol)?;
    rho.hermitize();
    Ok(rho)
}
