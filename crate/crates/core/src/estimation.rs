//! Bounded nonlinear least squares on top of the observables.
//!
//! [`nlls_fit`] is a Levenberg–Marquardt loop with Marquardt diagonal
//! scaling, central-difference Jacobians and bounds enforced by projection.
//! Uncertainties come from the curvature `(JᵀJ)⁻¹` of the weighted
//! residuals at the optimum and are only as good as that local quadratic
//! approximation.
//!
//! Everything here is `f64`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bloch::{DegeneracyPolicy, SystemParams};
use crate::error::{Error, Result};
use crate::observables::{contrast_vs_detuning, excitation_spectrum, ObservableConfig};

/// One data point with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

impl Observation {
    pub fn new(x: f64, y: f64, sigma: f64) -> Self {
        Observation { x, y, sigma }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeParam {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl FreeParam {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        FreeParam {
            name: name.into(),
            lower,
            upper,
        }
    }

    fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

/// Model predictions at the given abscissae for the given free parameter
/// values. Fixed parameters live in the closure.
pub type ModelFn<'a> = dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync + 'a;

pub struct FitProblem<'a> {
    observed: Vec<Observation>,
    free_params: Vec<FreeParam>,
    model: Box<ModelFn<'a>>,
    xs: Vec<f64>,
}

impl<'a> FitProblem<'a> {
    pub fn new(
        observed: Vec<Observation>,
        free_params: Vec<FreeParam>,
        model: impl Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync + 'a,
    ) -> Result<Self> {
        if observed.is_empty() {
            return Err(Error::invalid("observed", "no data points"));
        }
        if observed
            .iter()
            .any(|o| !(o.sigma > 0.0 && o.sigma.is_finite()) || !o.x.is_finite() || !o.y.is_finite())
        {
            return Err(Error::invalid("observed", "values must be finite and sigma > 0"));
        }
        if free_params.is_empty() {
            return Err(Error::invalid("free_params", "at least one parameter must be free"));
        }
        for fp in &free_params {
            if !(fp.lower.is_finite() && fp.upper.is_finite() && fp.lower < fp.upper) {
                return Err(Error::InvalidParameter {
                    field: "free_params",
                    reason: format!("bounds of `{}` must be finite and ordered", fp.name),
                });
            }
        }
        let xs = observed.iter().map(|o| o.x).collect();
        Ok(FitProblem {
            observed,
            free_params,
            model: Box::new(model),
            xs,
        })
    }

    pub fn observed(&self) -> &[Observation] {
        &self.observed
    }

    pub fn free_params(&self) -> &[FreeParam] {
        &self.free_params
    }

    /// Weighted residuals `(y - f) / σ`.
    fn residuals(&self, params: &[f64]) -> Result<DVector<f64>> {
        let pred = (self.model)(params, &self.xs)?;
        if pred.len() != self.observed.len() {
            return Err(Error::InvalidParameter {
                field: "model",
                reason: format!("returned {} values for {} points", pred.len(), self.observed.len()),
            });
        }
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("model", "returned a non-finite value"));
        }
        Ok(DVector::from_iterator(
            pred.len(),
            self.observed.iter().zip(&pred).map(|(o, f)| (o.y - f) / o.sigma),
        ))
    }

    /// Jacobian of the model over σ, by central differences with relative
    /// step `1e-5`; one-sided where a bound is in the way.
    fn jacobian(&self, params: &[f64]) -> Result<DMatrix<f64>> {
        let columns: Vec<DVector<f64>> = self
            .free_params
            .par_iter()
            .enumerate()
            .map(|(j, fp)| {
                let x = params[j];
                let h = 1e-5 * x.abs().max(1e-3 * (fp.upper - fp.lower));
                let hi = (x + h).min(fp.upper);
                let lo = (x - h).max(fp.lower);
                let eval = |v: f64| {
                    let mut p = params.to_vec();
                    p[j] = v;
                    self.residuals(&p)
                };
                // Residuals carry a minus sign relative to the model.
                Ok((eval(lo)? - eval(hi)?) / (hi - lo))
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_columns(&columns))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Relative chi2 change that counts as converged.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iter: 200,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Converged,
    MaxIter,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub best_params: Vec<(String, f64)>,
    pub chi2: f64,
    /// Approximate 1σ errors from `(JᵀJ)⁻¹`; infinite for directions the
    /// data do not constrain.
    pub uncertainties: Vec<f64>,
    pub convergence: Convergence,
    pub iterations: usize,
    /// chi2 after every accepted step, starting with the initial point.
    pub chi2_history: Vec<f64>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.best_params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        let i = self.best_params.iter().position(|(n, _)| n == name)?;
        Some(self.uncertainties[i])
    }

    pub fn values(&self) -> Vec<f64> {
        self.best_params.iter().map(|(_, v)| *v).collect()
    }

    /// chi2 per degree of freedom.
    pub fn reduced_chi2(&self, n_points: usize) -> f64 {
        let dof = n_points.saturating_sub(self.best_params.len()).max(1);
        self.chi2 / dof as f64
    }
}

/// Solves `a x = b` for symmetric positive semi-definite `a`, falling back to
/// a truncated pseudo-inverse.
fn solve_normal(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if let Some(chol) = a.clone().cholesky() {
        return chol.solve(b);
    }
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-14;
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(b.len()))
}

fn uncertainties(jac: &DMatrix<f64>) -> Vec<f64> {
    let jtj = jac.transpose() * jac;
    let n = jtj.nrows();
    let svd = jtj.svd(true, true);
    let (u, v_t) = match (svd.u.as_ref(), svd.v_t.as_ref()) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return vec![f64::INFINITY; n],
    };
    let floor = svd.singular_values.max() * 1e-12;
    (0..n)
        .map(|i| {
            let mut var = 0.0;
            for k in 0..n {
                let s = svd.singular_values[k];
                let w = v_t[(k, i)] * u[(i, k)];
                if s > floor {
                    var += w / s;
                } else if w.abs() > 1e-12 {
                    return f64::INFINITY;
                }
            }
            var.max(0.0).sqrt()
        })
        .collect()
}

/// Bounded Levenberg–Marquardt from `initial`.
///
/// The fit is converged when an accepted step changes chi2 by less than
/// `tol` relative to its value, or when the damped step shrinks below the
/// parameter resolution without improving chi2. It has stalled when the
/// damping saturates first.
pub fn nlls_fit(problem: &FitProblem<'_>, initial: &[f64], cfg: &FitConfig) -> Result<FitResult> {
    let free = &problem.free_params;
    if initial.len() != free.len() {
        return Err(Error::invalid("initial", "one value per free parameter is required"));
    }
    for (fp, &v) in free.iter().zip(initial) {
        if !(v >= fp.lower && v <= fp.upper) {
            return Err(Error::InvalidParameter {
                field: "initial",
                reason: format!("`{}` = {v} lies outside [{}, {}]", fp.name, fp.lower, fp.upper),
            });
        }
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::invalid("tol", "must be >= 0"));
    }

    let mut x = initial.to_vec();
    let mut r = problem.residuals(&x).map_err(|e| Error::BadInitial(Box::new(e)))?;
    let mut chi2 = r.norm_squared();
    let mut history = vec![chi2];
    let mut lambda = 1.0;
    let mut convergence = Convergence::MaxIter;
    let mut iterations = 0;
    let mut jac = if cfg.max_iter > 0 {
        Some(problem.jacobian(&x)?)
    } else {
        None
    };

    while iterations < cfg.max_iter {
        if chi2 == 0.0 {
            convergence = Convergence::Converged;
            break;
        }
        iterations += 1;
        let j = jac.as_ref().expect("jacobian of the current point");
        let jtj = j.transpose() * j;
        let grad = j.transpose() * &r;
        let diag_floor = jtj.diagonal().max() * 1e-12 + f64::MIN_POSITIVE;

        let mut accepted = false;
        while lambda <= 1e16 {
            let mut damped = jtj.clone();
            for i in 0..x.len() {
                damped[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            // r = y - f and J = ∂f/∂p, so the step is along +Jᵀr.
            let step = solve_normal(&damped, &grad);
            let trial: Vec<f64> = free
                .iter()
                .zip(&x)
                .zip(step.iter())
                .map(|((fp, xi), s)| fp.clamp(xi + s))
                .collect();
            let moved = trial
                .iter()
                .zip(&x)
                .map(|(t, xi)| (t - xi).abs() / xi.abs().max(1e-300))
                .fold(0.0, f64::max);
            if moved < 1e-13 {
                convergence = Convergence::Converged;
                break;
            }
            match problem.residuals(&trial) {
                Ok(r_new) if r_new.norm_squared() < chi2 => {
                    let chi2_new = r_new.norm_squared();
                    let change = (chi2 - chi2_new) / chi2;
                    x = trial;
                    r = r_new;
                    chi2 = chi2_new;
                    history.push(chi2);
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = true;
                    if change < cfg.tol {
                        convergence = Convergence::Converged;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if accepted {
            jac = Some(problem.jacobian(&x)?);
            if convergence == Convergence::Converged {
                break;
            }
        } else {
            if convergence != Convergence::Converged {
                convergence = Convergence::Stalled;
            }
            break;
        }
    }

    let jac = match jac {
        Some(j) => j,
        None => problem.jacobian(&x)?,
    };
    Ok(FitResult {
        best_params: free.iter().map(|fp| fp.name.clone()).zip(x).collect(),
        chi2,
        uncertainties: uncertainties(&jac),
        convergence,
        iterations,
        chi2_history: history,
    })
}

/// Model inputs addressable by name, keyed like the configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamName {
    GammaG,
    GammaR,
    OmegaG,
    OmegaR,
    DeltaG,
    DeltaR,
    LarmorUnit,
    Epsilon,
    Psi,
    /// Multiplier from P population to the fitted signal.
    Scale,
}

impl ParamName {
    pub const ALL: [ParamName; 10] = [
        ParamName::GammaG,
        ParamName::GammaR,
        ParamName::OmegaG,
        ParamName::OmegaR,
        ParamName::DeltaG,
        ParamName::DeltaR,
        ParamName::LarmorUnit,
        ParamName::Epsilon,
        ParamName::Psi,
        ParamName::Scale,
    ];

    pub fn key(self) -> &'static str {
        match self {
            ParamName::GammaG => "gamma_g_mhz",
            ParamName::GammaR => "gamma_r_mhz",
            ParamName::OmegaG => "omega_g_mhz",
            ParamName::OmegaR => "omega_r_mhz",
            ParamName::DeltaG => "delta_g_mhz",
            ParamName::DeltaR => "delta_r_mhz",
            ParamName::LarmorUnit => "larmor_unit_mhz",
            ParamName::Epsilon => "epsilon",
            ParamName::Psi => "psi_rad",
            ParamName::Scale => "scale",
        }
    }

    /// Reads the value from `p`; the scale is not part of the model.
    pub fn get(self, p: &SystemParams<f64>) -> Option<f64> {
        Some(match self {
            ParamName::GammaG => p.rates.gamma_g,
            ParamName::GammaR => p.rates.gamma_r,
            ParamName::OmegaG => p.green.rabi,
            ParamName::OmegaR => p.red.rabi,
            ParamName::DeltaG => p.green.detuning,
            ParamName::DeltaR => p.red.detuning,
            ParamName::LarmorUnit => p.scheme.larmor_unit,
            ParamName::Epsilon => p.mirror.epsilon,
            ParamName::Psi => p.mirror.psi,
            ParamName::Scale => return None,
        })
    }

    /// Writes the value into `p`; a no-op for the scale.
    pub fn set(self, p: &mut SystemParams<f64>, v: f64) {
        match self {
            ParamName::GammaG => p.rates.gamma_g = v,
            ParamName::GammaR => p.rates.gamma_r = v,
            ParamName::OmegaG => p.green.rabi = v,
            ParamName::OmegaR => p.red.rabi = v,
            ParamName::DeltaG => p.green.detuning = v,
            ParamName::DeltaR => p.red.detuning = v,
            ParamName::LarmorUnit => p.scheme.larmor_unit = v,
            ParamName::Epsilon => p.mirror.epsilon = v,
            ParamName::Psi => p.mirror.psi = v,
            ParamName::Scale => {}
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .into_iter()
            .find(|p| p.key() == s)
            .ok_or_else(|| Error::InvalidParameter {
                field: "free_params",
                reason: format!("unknown parameter `{s}`"),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBound {
    pub param: ParamName,
    pub lower: f64,
    pub upper: f64,
}

impl ParamBound {
    pub fn new(param: ParamName, lower: f64, upper: f64) -> Self {
        ParamBound { param, lower, upper }
    }
}

fn free_params(bounds: &[ParamBound]) -> Vec<FreeParam> {
    bounds
        .iter()
        .map(|b| FreeParam::new(b.param.key(), b.lower, b.upper))
        .collect()
}

/// Fits `scale · P_P(Δ_r)` to an excitation spectrum with `x = Δ_r` in MHz.
///
/// Free parameters start from their values in `base` (or `scale`) and must
/// not include the red detuning, which is the abscissa.
pub fn fit_spectrum(
    base: &SystemParams<f64>,
    scale: f64,
    data: &[Observation],
    free: &[ParamBound],
    policy: DegeneracyPolicy,
    cfg: &FitConfig,
) -> Result<FitResult> {
    if free.iter().any(|b| b.param == ParamName::DeltaR) {
        return Err(Error::invalid(
            "free_params",
            "the red detuning is the spectrum abscissa",
        ));
    }
    let names: Vec<ParamName> = free.iter().map(|b| b.param).collect();
    let initial: Vec<f64> = names.iter().map(|n| n.get(base).unwrap_or(scale)).collect();
    let base = *base;
    let model = move |values: &[f64], xs: &[f64]| -> Result<Vec<f64>> {
        let mut p = base;
        let mut s = scale;
        for (n, &v) in names.iter().zip(values) {
            match n {
                ParamName::Scale => s = v,
                _ => n.set(&mut p, v),
            }
        }
        p.validate()?;
        excitation_spectrum(&p, xs, policy)?
            .into_iter()
            .map(|pt| pt.population.map(|pop| s * pop))
            .collect()
    };
    let problem = FitProblem::new(data.to_vec(), free_params(free), model)?;
    nlls_fit(&problem, &initial, cfg)
}

/// Fits the mirror solid-angle fraction `ε ∈ [0, 0.5]` to red fringe
/// contrasts with `x = Δ_r` in MHz. The search starts at `base`'s ε.
pub fn fit_epsilon(
    base: &SystemParams<f64>,
    data: &[Observation],
    obs: &ObservableConfig<f64>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let bound = ParamBound::new(ParamName::Epsilon, 0.0, 0.5);
    let initial = [base.mirror.epsilon.clamp(bound.lower, bound.upper)];
    let base = *base;
    let obs = *obs;
    let model = move |values: &[f64], xs: &[f64]| -> Result<Vec<f64>> {
        let p = base.with_epsilon(values[0]);
        p.validate()?;
        Ok(contrast_vs_detuning(&p, xs, &obs)?
            .into_iter()
            .map(|(_, c)| c)
            .collect())
    };
    let problem = FitProblem::new(data.to_vec(), free_params(&[bound]), model)?;
    nlls_fit(&problem, &initial, cfg)
}
