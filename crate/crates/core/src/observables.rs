//! Fringe observables recorded while the mirror phase is scanned.
//!
//! For every mirror phase the model is solved for its steady state. The red
//! fluorescence is proportional to the P1/2 population; the detected green
//! rate additionally carries the interference of the ion with its mirror
//! image, modelled as a `(1 ∓ c cos ψ)` factor with detection contrast `c`.
//! Each channel is fitted to `a + b cos ψ + c sin ψ` over one period.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bloch::{
    build_liouvillian, p_population, steady_state_with, DegeneracyPolicy, DensityMatrix, SystemParams, Tolerances,
};
use crate::drive::modified_gamma;
use crate::error::{Error, Result};
use crate::num::{lit, to_f64, wrap_two_pi, Real};

/// Which green fringe extremum coincides with enhanced green decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GreenConvention {
    /// Green maximum at `cos ψ = -1`, where `Γ_g(ψ)` is largest.
    #[default]
    EnhancedDecayMax,
    /// Green maximum at `cos ψ = +1`.
    InhibitedDecayMax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableConfig<T> {
    /// Uniform ψ samples per period.
    pub psi_points: usize,
    pub detection_contrast: T,
    pub green_convention: GreenConvention,
    /// Minimum fringe contrast for which a phase is reported.
    pub contrast_floor: T,
    pub policy: DegeneracyPolicy,
}

impl<T: Real> Default for ObservableConfig<T> {
    fn default() -> Self {
        ObservableConfig {
            psi_points: 32,
            detection_contrast: lit(0.72),
            green_convention: GreenConvention::default(),
            contrast_floor: lit(1e-6),
            policy: DegeneracyPolicy::Reject,
        }
    }
}

impl<T: Real> ObservableConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.psi_points < 8 {
            return Err(Error::invalid("psi_points", "must be at least 8"));
        }
        if !(self.detection_contrast >= T::zero() && self.detection_contrast <= T::one()) {
            return Err(Error::invalid("detection_contrast", "must lie in [0, 1]"));
        }
        if !(self.contrast_floor >= T::zero()) {
            return Err(Error::invalid("contrast_floor", "must be >= 0"));
        }
        Ok(())
    }
}

/// `ψ_k = 2πk/n`, `k = 0..n`.
pub fn psi_grid<T: Real>(n: usize) -> Vec<T> {
    let step = T::two_pi() / lit(n as f64);
    (0..n).map(|k| step * lit(k as f64)).collect()
}

/// Steady state at the phase stored in `p`, under `cfg.policy`.
pub fn solve<T: Real>(p: &SystemParams<T>, policy: DegeneracyPolicy) -> Result<DensityMatrix<T>> {
    steady_state_with(&build_liouvillian(p)?, policy, &Tolerances::default())
}

/// Detected green rate for a known P population, with unit scale.
pub fn green_signal<T: Real>(p_pop: T, p: &SystemParams<T>, detection_contrast: T, convention: GreenConvention) -> T {
    let cos = p.mirror.psi.cos();
    let fringe = match convention {
        GreenConvention::EnhancedDecayMax => T::one() - detection_contrast * cos,
        GreenConvention::InhibitedDecayMax => T::one() + detection_contrast * cos,
    };
    p_pop * modified_gamma(&p.rates, &p.mirror) * fringe
}

/// Green rate `P_P(ψ) Γ_g(ψ) (1 ∓ c cos ψ)` at the phase stored in `p`.
pub fn green_signal_model<T: Real>(
    p: &SystemParams<T>,
    detection_contrast: T,
    convention: GreenConvention,
) -> Result<T> {
    if !(detection_contrast >= T::zero() && detection_contrast <= T::one()) {
        return Err(Error::invalid("detection_contrast", "must lie in [0, 1]"));
    }
    let rho = solve(p, DegeneracyPolicy::Reject)?;
    Ok(green_signal(p_population(&rho), p, detection_contrast, convention))
}

/// Red (P population) and green signals on a uniform ψ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeScan<T> {
    pub psi_values: Vec<T>,
    pub red_signal: Vec<T>,
    pub green_signal: Vec<T>,
}

pub fn fringe_scan<T: Real>(p: &SystemParams<T>, cfg: &ObservableConfig<T>) -> Result<FringeScan<T>> {
    cfg.validate()?;
    p.validate()?;
    let psi_values = psi_grid::<T>(cfg.psi_points);
    let samples: Vec<(T, T)> = psi_values
        .par_iter()
        .map(|&psi| {
            let at = p.at_psi(psi);
            let rho = solve(&at, cfg.policy).map_err(|e| Error::AtPsi {
                psi: to_f64(psi),
                source: Box::new(e),
            })?;
            let red = p_population(&rho);
            Ok((
                red,
                green_signal(red, &at, cfg.detection_contrast, cfg.green_convention),
            ))
        })
        .collect::<Result<_>>()?;
    let (red_signal, green_signal) = samples.into_iter().unzip();
    Ok(FringeScan {
        psi_values,
        red_signal,
        green_signal,
    })
}

/// Least-squares fit of `a + b cos ψ + c sin ψ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit<T> {
    pub mean: T,
    pub cos_amp: T,
    pub sin_amp: T,
    /// `atan2(c, b)` in `[0, 2π)`; meaningless unless `phase_defined`.
    pub phase: T,
    pub phase_defined: bool,
    /// `sqrt(b² + c²) / a`.
    pub contrast: T,
    pub residual_rms: T,
    pub residual_max: T,
}

impl<T: Real> FringeFit<T> {
    pub fn amplitude(&self) -> T {
        (self.cos_amp * self.cos_amp + self.sin_amp * self.sin_amp).sqrt()
    }

    pub fn evaluate(&self, psi: T) -> T {
        self.mean + self.cos_amp * psi.cos() + self.sin_amp * psi.sin()
    }
}

/// Weighted fit together with the parameter covariance `(AᵀWA)⁻¹`, which is
/// the standard error matrix when the weights are inverse variances.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFringeFit<T: Real> {
    pub fit: FringeFit<T>,
    pub covariance: DMatrix<T>,
}

pub fn fit_fringe<T: Real>(psi: &[T], signal: &[T]) -> Result<FringeFit<T>> {
    Ok(fit_fringe_weighted(psi, signal, None)?.fit)
}

/// Fits `a + b cos ψ + c sin ψ`, optionally with per-point weights.
pub fn fit_fringe_weighted<T: Real>(psi: &[T], signal: &[T], weights: Option<&[T]>) -> Result<WeightedFringeFit<T>> {
    let n = psi.len();
    if n != signal.len() || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::invalid(
            "signal",
            "psi, signal and weights must have equal length",
        ));
    }
    if n < 3 {
        return Err(Error::invalid("signal", "at least three points are needed"));
    }
    if !covers_period(psi) {
        return Err(Error::invalid("psi", "samples do not cover a full period"));
    }
    let root_w: Vec<T> = match weights {
        Some(w) => {
            if w.iter().any(|x| !(*x > T::zero())) {
                return Err(Error::invalid("weights", "must be positive"));
            }
            w.iter().map(|x| x.sqrt()).collect()
        }
        None => vec![T::one(); n],
    };
    let design = DMatrix::from_fn(n, 3, |i, j| {
        root_w[i]
            * match j {
                0 => T::one(),
                1 => psi[i].cos(),
                _ => psi[i].sin(),
            }
    });
    let rhs = DVector::from_iterator(n, signal.iter().zip(&root_w).map(|(y, w)| *y * *w));
    let svd = design.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_min > s_max * lit(1e-10)) {
        return Err(Error::DegenerateGrid);
    }
    let coef = svd.solve(&rhs, T::zero()).map_err(|_| Error::DegenerateGrid)?;
    let v_t = svd.v_t.as_ref().ok_or(Error::DegenerateGrid)?;
    let inv_sq = DMatrix::from_diagonal(&svd.singular_values.map(|s| T::one() / (s * s)));
    let covariance = v_t.transpose() * inv_sq * v_t;

    let (a, b, c) = (coef[0], coef[1], coef[2]);
    let mut sum_sq = T::zero();
    let mut worst = T::zero();
    let mut scale = a.abs();
    for (x, y) in psi.iter().zip(signal) {
        let r = *y - (a + b * x.cos() + c * x.sin());
        sum_sq += r * r;
        worst = worst.max(r.abs());
        scale = scale.max(y.abs());
    }
    if a == T::zero() {
        return Err(Error::invalid("signal", "fringe mean is zero"));
    }
    let amp = (b * b + c * c).sqrt();
    let phase_defined = amp > scale * T::default_epsilon() * lit(1e3);
    Ok(WeightedFringeFit {
        fit: FringeFit {
            mean: a,
            cos_amp: b,
            sin_amp: c,
            phase: if phase_defined {
                wrap_two_pi(c.atan2(b))
            } else {
                T::zero()
            },
            phase_defined,
            contrast: amp / a.abs(),
            residual_rms: (sum_sq / lit(n as f64)).sqrt(),
            residual_max: worst,
        },
        covariance,
    })
}

/// True when no circular gap between sorted phases reaches π.
fn covers_period<T: Real>(psi: &[T]) -> bool {
    let mut wrapped: Vec<T> = psi.iter().map(|&x| wrap_two_pi(x)).collect();
    if wrapped.iter().any(|x| !x.is_finite()) {
        return false;
    }
    wrapped.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let first = wrapped[0];
    let last = wrapped[wrapped.len() - 1];
    let mut gap = first + T::two_pi() - last;
    for w in wrapped.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    gap < T::pi()
}

/// Phase of the red fringe relative to the green one, in `[0, 2π)`:
/// 0 is correlated, π anti-correlated.
pub fn correlation_phase<T: Real>(green: &FringeFit<T>, red: &FringeFit<T>, floor: T) -> Result<T> {
    for fit in [green, red] {
        if !fit.phase_defined || !(fit.contrast >= floor) {
            return Err(Error::UndefinedPhase {
                contrast: to_f64(fit.contrast),
                floor: to_f64(floor),
            });
        }
    }
    Ok(wrap_two_pi(red.phase - green.phase))
}

/// `(A1, A2, A3)` in `P_P ≈ A1 + ε (A2 cos ψ + A3 sin ψ)`, read off the
/// fitted red fringe.
pub fn expansion_coefficients<T: Real>(p: &SystemParams<T>, cfg: &ObservableConfig<T>) -> Result<(T, T, T)> {
    let eps = p.mirror.epsilon;
    if !(eps > T::zero()) {
        return Err(Error::invalid("epsilon", "expansion coefficients need epsilon > 0"));
    }
    let scan = fringe_scan(p, cfg)?;
    let fit = fit_fringe(&scan.psi_values, &scan.red_signal)?;
    Ok((fit.mean, fit.cos_amp / eps, fit.sin_amp / eps))
}

/// Both channels of one red-detuning grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint<T> {
    pub detuning_r: T,
    /// `None` flags a contrast below the floor.
    pub phase: Option<T>,
    pub red: FringeFit<T>,
    pub green: FringeFit<T>,
}

impl<T: Real> PhasePoint<T> {
    pub fn red_contrast(&self) -> T {
        self.red.contrast
    }
}

fn fit_point<T: Real>(p: &SystemParams<T>, detuning_r: T, cfg: &ObservableConfig<T>) -> Result<PhasePoint<T>> {
    let at = p.with_red_detuning(detuning_r);
    let wrap = |e: Error| Error::AtDetuning {
        detuning_r_mhz: to_f64(detuning_r),
        source: Box::new(e),
    };
    let scan = fringe_scan(&at, cfg).map_err(wrap)?;
    let red = fit_fringe(&scan.psi_values, &scan.red_signal).map_err(wrap)?;
    let green = fit_fringe(&scan.psi_values, &scan.green_signal).map_err(wrap)?;
    let phase = match correlation_phase(&green, &red, cfg.contrast_floor) {
        Ok(phi) => Some(phi),
        Err(Error::UndefinedPhase { .. }) => None,
        Err(e) => return Err(wrap(e)),
    };
    Ok(PhasePoint {
        detuning_r,
        phase,
        red,
        green,
    })
}

fn check_grid<T: Real>(grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("red_detuning_grid", "must not be empty"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("red_detuning_grid", "must be finite"));
    }
    Ok(())
}

/// Correlation phase and fringe contrasts across red detunings, in grid
/// order. Solver failures abort; undefined phases are flagged.
pub fn phase_vs_detuning<T: Real>(
    p: &SystemParams<T>,
    red_detuning_grid: &[T],
    cfg: &ObservableConfig<T>,
) -> Result<Vec<PhasePoint<T>>> {
    check_grid(red_detuning_grid)?;
    red_detuning_grid.par_iter().map(|&d| fit_point(p, d, cfg)).collect()
}

/// `(Δ_r, red contrast)` across red detunings.
pub fn contrast_vs_detuning<T: Real>(
    p: &SystemParams<T>,
    red_detuning_grid: &[T],
    cfg: &ObservableConfig<T>,
) -> Result<Vec<(T, T)>> {
    check_grid(red_detuning_grid)?;
    red_detuning_grid
        .par_iter()
        .map(|&d| {
            let at = p.with_red_detuning(d);
            fringe_scan(&at, cfg)
                .and_then(|scan| fit_fringe(&scan.psi_values, &scan.red_signal))
                .map(|red| (d, red.contrast))
                .map_err(|e| Error::AtDetuning {
                    detuning_r_mhz: to_f64(d),
                    source: Box::new(e),
                })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPoint<T> {
    pub detuning_r: T,
    /// P population, or the solver failure at this point.
    pub population: Result<T>,
}

/// Steady-state P population across red detunings at the mirror phase
/// stored in `p`. Failures are kept per point.
pub fn excitation_spectrum<T: Real>(
    p: &SystemParams<T>,
    red_detuning_grid: &[T],
    policy: DegeneracyPolicy,
) -> Result<Vec<SpectrumPoint<T>>> {
    check_grid(red_detuning_grid)?;
    p.validate()?;
    Ok(red_detuning_grid
        .par_iter()
        .map(|&d| SpectrumPoint {
            detuning_r: d,
            population: solve(&p.with_red_detuning(d), policy).map(|rho| p_population(&rho)),
        })
        .collect())
}

/// Summary of one red-power slice of [`anomaly_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRow<T> {
    pub omega_r: T,
    pub min_red_contrast: T,
    pub detuning_at_min: T,
    pub below_threshold: bool,
    /// Unwrapped phase change from the first to the last defined point;
    /// `None` when fewer than two phases are defined.
    pub phase_winding: Option<T>,
    /// Whether the phase curve ends where it started instead of winding
    /// once around.
    pub returns_to_zero: bool,
}

/// Net unwrapped change of a phase sequence, skipping undefined entries.
pub fn phase_winding<T: Real>(phases: &[Option<T>]) -> Option<T> {
    let mut defined = phases.iter().flatten().copied();
    let first = defined.next()?;
    let mut prev = first;
    let mut total = T::zero();
    let mut count = 1;
    for phi in defined {
        let mut step = phi - prev;
        while step > T::pi() {
            step -= T::two_pi();
        }
        while step <= -T::pi() {
            step += T::two_pi();
        }
        total += step;
        prev = phi;
        count += 1;
    }
    (count >= 2).then_some(total)
}

/// Scans red Rabi frequency and red detuning for low red contrast and for
/// phase curves that fall back to zero instead of reaching 2π.
pub fn anomaly_search<T: Real>(
    p: &SystemParams<T>,
    omega_r_grid: &[T],
    red_detuning_grid: &[T],
    contrast_threshold: T,
    cfg: &ObservableConfig<T>,
) -> Result<Vec<AnomalyRow<T>>> {
    if omega_r_grid.is_empty() {
        return Err(Error::invalid("omega_r_grid", "must not be empty"));
    }
    omega_r_grid
        .iter()
        .map(|&omega_r| {
            let mut at = *p;
            at.red.rabi = omega_r;
            at.validate()?;
            let points = phase_vs_detuning(&at, red_detuning_grid, cfg)?;
            let (detuning_at_min, min_red_contrast) = points.iter().map(|pt| (pt.detuning_r, pt.red.contrast)).fold(
                (points[0].detuning_r, points[0].red.contrast),
                |best, cur| {
                    if cur.1 < best.1 {
                        cur
                    } else {
                        best
                    }
                },
            );
            let phases: Vec<Option<T>> = points.iter().map(|pt| pt.phase).collect();
            let winding = phase_winding(&phases);
            Ok(AnomalyRow {
                omega_r,
                min_red_contrast,
                detuning_at_min,
                below_threshold: min_red_contrast < contrast_threshold,
                phase_winding: winding,
                returns_to_zero: winding.is_some_and(|w| w.abs() < T::pi()),
            })
        })
        .collect()
}
