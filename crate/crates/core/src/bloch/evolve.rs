use nalgebra::DVector;

use super::density::DensityMatrix;
use super::liouvillian::Liouvillian;
use crate::error::{Error, Result};
use crate::num::{cabs, creal, lit, to_f64, Complex, Real};

/// Step control for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions<T> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: usize,
}

impl<T: Real> Default for EvolveOptions<T> {
    fn default() -> Self {
        EvolveOptions {
            rtol: lit(1e-9),
            atol: lit(1e-12),
            max_steps: 5_000_000,
        }
    }
}

// Dormand-Prince 5(4) tableau. The generator is autonomous, so the nodes
// are not needed; the last row holds the fifth-order weights (FSAL).
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `d rho / dt = L rho` from 0 to `t_us` microseconds.
pub fn evolve<T: Real>(
    l: &Liouvillian<T>,
    rho0: &DensityMatrix<T>,
    t_us: T,
    opts: &EvolveOptions<T>,
) -> Result<DensityMatrix<T>> {
    if !(t_us >= T::zero()) {
        return Err(Error::invalid("t_us", "must be >= 0"));
    }
    if rho0.dim() != l.dim() {
        return Err(Error::invalid("rho0", "dimension does not match the generator"));
    }
    if t_us == T::zero() {
        return Ok(rho0.clone());
    }
    let tableau_a: Vec<Vec<Complex<T>>> = A
        .iter()
        .map(|row| row.iter().map(|&x| creal(lit::<T>(x))).collect())
        .collect();
    let err_w: Vec<Complex<T>> = E.iter().map(|&x| creal(lit::<T>(x))).collect();

    let gen_norm = l
        .matrix()
        .row_iter()
        .map(|row| row.iter().fold(T::zero(), |acc, z| acc + cabs(*z)))
        .fold(T::zero(), |a, b| a.max(b));
    let mut y = rho0.to_vec();
    if gen_norm == T::zero() {
        return Ok(rho0.clone());
    }

    let mut t = T::zero();
    let mut h = (lit::<T>(0.5) / gen_norm).min(t_us);
    let mut k: Vec<DVector<Complex<T>>> = Vec::with_capacity(7);
    k.push(l.apply_vec(&y));
    let h_floor = t_us * T::default_epsilon() * lit(16.0);

    for _ in 0..opts.max_steps {
        if t >= t_us {
            return Ok(DensityMatrix::from_vec(l.dim(), &y));
        }
        let last = t + h >= t_us;
        if last {
            h = t_us - t;
        }
        let hc = creal(h);
        k.truncate(1);
        let mut y_new = y.clone();
        for row in tableau_a.iter().skip(1) {
            let mut arg = y.clone();
            for (kj, w) in k.iter().zip(row) {
                if *w != creal(T::zero()) {
                    arg.axpy(hc * *w, kj, creal(T::one()));
                }
            }
            k.push(l.apply_vec(&arg));
            y_new = arg;
        }
        let mut err = DVector::from_element(y.len(), creal(T::zero()));
        for (kj, w) in k.iter().zip(&err_w) {
            if *w != creal(T::zero()) {
                err.axpy(hc * *w, kj, creal(T::one()));
            }
        }
        let mut err_norm = T::zero();
        for i in 0..y.len() {
            let scale = opts.atol + opts.rtol * cabs(y[i]).max(cabs(y_new[i]));
            err_norm = err_norm.max(cabs(err[i]) / scale);
        }

        if err_norm <= T::one() {
            t = if last { t_us } else { t + h };
            y = y_new;
            let fsal = k.pop().expect("seven stages");
            k.clear();
            k.push(fsal);
        }
        let factor = if err_norm == T::zero() {
            lit(5.0)
        } else {
            (lit::<T>(0.9) * err_norm.powf(lit(-0.2))).max(lit(0.2)).min(lit(5.0))
        };
        h *= factor;
        if h < h_floor && t < t_us {
            return Err(Error::StepFailure {
                t_us: to_f64(t),
                step: to_f64(h),
            });
        }
    }
    if t >= t_us {
        return Ok(DensityMatrix::from_vec(l.dim(), &y));
    }
    Err(Error::StepFailure {
        t_us: to_f64(t),
        step: to_f64(h),
    })
}
