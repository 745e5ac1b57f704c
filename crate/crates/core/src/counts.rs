//! Synthetic two-channel photon-count records and phase extraction.
//!
//! A record is a sequence of time bins taken while the mirror phase is
//! ramped linearly. Each bin holds independent Poisson counts of green and
//! red photons whose means follow the fringe model at the instantaneous
//! parameters: the red detuning may drift and the mirror phase may jitter
//! from bin to bin.

use std::collections::HashMap;
use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::bloch::{p_population, SystemParams};
use crate::error::{Error, Result};
use crate::num::wrap_two_pi;
use crate::observables::{fit_fringe_weighted, green_signal, solve, FringeFit, ObservableConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountBin {
    /// Bin start in seconds.
    pub t: f64,
    pub green: u64,
    pub red: u64,
    /// Nominal mirror phase in `[0, 2π)`.
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    /// Seconds.
    pub bin_duration: f64,
    pub bins: Vec<CountBin>,
}

impl CountRecord {
    pub fn new(bin_duration: f64, bins: Vec<CountBin>) -> Result<Self> {
        let rec = CountRecord { bin_duration, bins };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_duration > 0.0 && self.bin_duration.is_finite()) {
            return Err(Error::invalid("bin_duration", "must be positive"));
        }
        if self.bins.iter().any(|b| !b.t.is_finite() || !b.psi.is_finite()) {
            return Err(Error::invalid("bins", "times and phases must be finite"));
        }
        if self.bins.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::invalid("bins", "times must be strictly increasing"));
        }
        Ok(())
    }

    pub fn psi(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.psi).collect()
    }

    pub fn green(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.green as f64).collect()
    }

    pub fn red(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.red as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftModel {
    /// MHz per hour, applied to the red detuning from `t = 0`.
    pub red_detuning_drift: f64,
    /// Gaussian rms of the mirror-phase error per bin, radians.
    pub acoustic_phase_jitter_rms: f64,
    /// Background counts per second in each channel.
    pub dark_cps: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        DriftModel {
            red_detuning_drift: 2.0,
            acoustic_phase_jitter_rms: 0.0,
            dark_cps: 0.0,
        }
    }
}

impl DriftModel {
    pub fn none() -> Self {
        DriftModel {
            red_detuning_drift: 0.0,
            ..DriftModel::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.red_detuning_drift.is_finite() {
            return Err(Error::invalid("red_detuning_drift", "must be finite"));
        }
        if !(self.acoustic_phase_jitter_rms >= 0.0 && self.acoustic_phase_jitter_rms.is_finite()) {
            return Err(Error::invalid("acoustic_phase_jitter_rms", "must be >= 0"));
        }
        if !(self.dark_cps >= 0.0 && self.dark_cps.is_finite()) {
            return Err(Error::invalid("dark_cps", "must be >= 0"));
        }
        Ok(())
    }

    /// Red detuning after `t_s` seconds.
    pub fn red_detuning_at(&self, base: f64, t_s: f64) -> f64 {
        base + self.red_detuning_drift * t_s / 3600.0
    }
}

/// A linear mirror-phase ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSpec {
    pub periods: usize,
    pub bins_per_period: usize,
    /// Seconds.
    pub bin_duration: f64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        ScanSpec {
            periods: 80,
            bins_per_period: 32,
            bin_duration: 0.1,
        }
    }
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.periods < 1 {
            return Err(Error::invalid("periods", "at least one period is required"));
        }
        if self.bins_per_period < 3 {
            return Err(Error::invalid("bins_per_period", "must be at least 3"));
        }
        if !(self.bin_duration > 0.0 && self.bin_duration.is_finite()) {
            return Err(Error::invalid("bin_duration", "must be positive"));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.periods * self.bins_per_period
    }

    /// Nominal phase of bin `k`.
    pub fn psi(&self, k: usize) -> f64 {
        TAU * (k % self.bins_per_period) as f64 / self.bins_per_period as f64
    }
}

/// Period-averaged detected rates in counts per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRates {
    pub green_cps: f64,
    pub red_cps: f64,
}

impl Default for CountRates {
    fn default() -> Self {
        CountRates {
            green_cps: 15e3,
            red_cps: 25e3,
        }
    }
}

impl CountRates {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("green_cps", self.green_cps), ("red_cps", self.red_cps)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(field, "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Unscaled `(green, red)` signals with memoization on exact inputs.
struct SignalCache<'a> {
    base: &'a SystemParams<f64>,
    obs: &'a ObservableConfig<f64>,
    values: HashMap<(u64, u64), (f64, f64)>,
}

impl SignalCache<'_> {
    fn get(&mut self, psi: f64, detuning_r: f64) -> Result<(f64, f64)> {
        let key = (psi.to_bits(), detuning_r.to_bits());
        if let Some(v) = self.values.get(&key) {
            return Ok(*v);
        }
        let p = self.base.with_red_detuning(detuning_r).at_psi(psi);
        let rho = solve(&p, self.obs.policy).map_err(|e| Error::AtPsi {
            psi,
            source: Box::new(e),
        })?;
        let red = p_population(&rho);
        let green = green_signal(red, &p, self.obs.detection_contrast, self.obs.green_convention);
        self.values.insert(key, (green, red));
        Ok((green, red))
    }
}

fn poisson<R: rand::Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
    } else {
        0
    }
}

/// Draws a count record over `scan` from the fringe model of `p`.
///
/// Count scales are fixed so that the signals averaged over one period of
/// the undisturbed scan give `rates`. Per bin, the red detuning is the
/// drifted value at the bin start and the mirror phase is the nominal ramp
/// value plus jitter; only the nominal phase is recorded.
pub fn synth_counts(
    p: &SystemParams<f64>,
    scan: &ScanSpec,
    rates: &CountRates,
    drift: &DriftModel,
    obs: &ObservableConfig<f64>,
    seed: u64,
) -> Result<CountRecord> {
    p.validate()?;
    scan.validate()?;
    rates.validate()?;
    drift.validate()?;
    obs.validate()?;

    let mut cache = SignalCache {
        base: p,
        obs,
        values: HashMap::new(),
    };
    let base_detuning = p.red.detuning;
    let (mut green_mean, mut red_mean) = (0.0, 0.0);
    for k in 0..scan.bins_per_period {
        let (g, r) = cache.get(scan.psi(k), base_detuning)?;
        green_mean += g / scan.bins_per_period as f64;
        red_mean += r / scan.bins_per_period as f64;
    }
    let scale = |rate: f64, mean: f64| {
        if rate > 0.0 {
            rate * scan.bin_duration / mean
        } else {
            0.0
        }
    };
    let (green_scale, red_scale) = (scale(rates.green_cps, green_mean), scale(rates.red_cps, red_mean));
    let dark = drift.dark_cps * scan.bin_duration;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = (drift.acoustic_phase_jitter_rms > 0.0)
        .then(|| Normal::new(0.0, drift.acoustic_phase_jitter_rms).expect("finite rms"));
    let mut bins = Vec::with_capacity(scan.n_bins());
    for k in 0..scan.n_bins() {
        let t = k as f64 * scan.bin_duration;
        let nominal = scan.psi(k);
        let actual = match &jitter {
            Some(dist) => wrap_two_pi(nominal + dist.sample(&mut rng)),
            None => nominal,
        };
        let (g, r) = cache.get(actual, drift.red_detuning_at(base_detuning, t))?;
        let green = poisson(green_scale * g + dark, &mut rng);
        let red = poisson(red_scale * r + dark, &mut rng);
        bins.push(CountBin {
            t,
            green,
            red,
            psi: nominal,
        });
    }
    CountRecord::new(scan.bin_duration, bins)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractConfig {
    /// Minimum fringe contrast in either channel.
    pub contrast_floor: f64,
    /// Minimum ratio of fitted fringe amplitude to its standard error.
    pub min_significance: f64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            contrast_floor: 1e-6,
            min_significance: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEstimate {
    /// Red fringe phase relative to green, in `[0, 2π)`.
    pub phase: f64,
    /// Propagated 1σ error of `phase`.
    pub phase_error: f64,
    pub green_contrast: f64,
    pub red_contrast: f64,
    pub green: FringeFit<f64>,
    pub red: FringeFit<f64>,
}

struct ChannelFit {
    fit: FringeFit<f64>,
    phase_var: f64,
    amp_sigma: f64,
}

/// Two passes of Poisson-weighted regression: weights from the counts,
/// then from the first-pass model.
fn fit_channel(psi: &[f64], counts: &[f64]) -> Result<ChannelFit> {
    let w0: Vec<f64> = counts.iter().map(|n| 1.0 / n.max(1.0)).collect();
    let first = fit_fringe_weighted(psi, counts, Some(&w0))?.fit;
    let w1: Vec<f64> = psi.iter().map(|&x| 1.0 / first.evaluate(x).max(1.0)).collect();
    let second = fit_fringe_weighted(psi, counts, Some(&w1))?;
    let (b, c) = (second.fit.cos_amp, second.fit.sin_amp);
    let cov = &second.covariance;
    let amp2 = b * b + c * c;
    let (vb, vc, vbc) = (cov[(1, 1)], cov[(2, 2)], cov[(1, 2)]);
    let phase_var = (c * c * vb + b * b * vc - 2.0 * b * c * vbc) / (amp2 * amp2);
    let amp_sigma = ((b * b * vb + c * c * vc + 2.0 * b * c * vbc) / amp2).sqrt();
    Ok(ChannelFit {
        fit: second.fit,
        phase_var,
        amp_sigma,
    })
}

/// Correlation phase of a count record with its propagated error.
///
/// A channel whose contrast is below `cfg.contrast_floor`, or whose
/// amplitude is not resolved from shot noise by `cfg.min_significance`
/// standard errors, gives [`Error::UndefinedPhase`].
pub fn extract_correlation_phase(rec: &CountRecord, cfg: &ExtractConfig) -> Result<PhaseEstimate> {
    rec.validate()?;
    let psi = rec.psi();
    let green = fit_channel(&psi, &rec.green())?;
    let red = fit_channel(&psi, &rec.red())?;
    for ch in [&green, &red] {
        let amp = ch.fit.amplitude();
        let resolved = ch.fit.phase_defined && amp >= cfg.min_significance * ch.amp_sigma;
        if !(resolved && ch.fit.contrast >= cfg.contrast_floor) {
            return Err(Error::UndefinedPhase {
                contrast: ch.fit.contrast,
                floor: cfg
                    .contrast_floor
                    .max(cfg.min_significance * ch.amp_sigma / ch.fit.mean.abs()),
            });
        }
    }
    Ok(PhaseEstimate {
        phase: wrap_two_pi(red.fit.phase - green.fit.phase),
        phase_error: (green.phase_var + red.phase_var).sqrt(),
        green_contrast: green.fit.contrast,
        red_contrast: red.fit.contrast,
        green: green.fit,
        red: red.fit,
    })
}
