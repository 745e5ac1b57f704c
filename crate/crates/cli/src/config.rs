//! Flat TOML run configuration.
//!
//! Every key is optional and falls back to the defaults below. Values given
//! on the command line with `--set key=value` are parsed as TOML values and
//! replace the file's entries before validation.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use ionmirror::atomic::LevelScheme;
use ionmirror::bloch::{DegeneracyPolicy, SystemParams};
use ionmirror::counts::{CountRates, DriftModel, ExtractConfig, ScanSpec};
use ionmirror::drive::{DecayRates, LaserDrive, MirrorParams, Polarization, Transition};
use ionmirror::estimation::{FitConfig, ParamBound, ParamName};
use ionmirror::observables::{GreenConvention, ObservableConfig};
use ionmirror::Complex;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKey {
    Reject,
    MinimalNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionKey {
    EnhancedDecayMax,
    InhibitedDecayMax,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub gamma_g_mhz: f64,
    pub gamma_r_mhz: f64,
    pub omega_g_mhz: f64,
    pub omega_r_mhz: f64,
    pub delta_g_mhz: f64,
    pub delta_r_mhz: f64,
    pub larmor_unit_mhz: f64,
    /// Angle between a linear polarization and the field.
    pub green_pol_theta_deg: f64,
    pub red_pol_theta_deg: f64,
    /// Spherical components `[re, im]` for q = -1, 0, +1; overrides the angle.
    pub green_pol_spherical: Option<[f64; 6]>,
    pub red_pol_spherical: Option<[f64; 6]>,

    pub epsilon: f64,
    pub psi_rad: f64,
    pub decay_mod_enabled: bool,
    pub shift_enabled: bool,

    pub psi_points: usize,
    pub detection_contrast: f64,
    pub green_convention: ConventionKey,
    pub contrast_floor: f64,
    pub degeneracy_policy: PolicyKey,

    pub red_detuning_min_mhz: f64,
    pub red_detuning_max_mhz: f64,
    pub red_detuning_step_mhz: f64,

    pub omega_r_min_mhz: f64,
    pub omega_r_max_mhz: f64,
    pub omega_r_step_mhz: f64,
    pub contrast_threshold: f64,

    pub periods: usize,
    pub bins_per_period: usize,
    pub bin_duration_s: f64,
    pub green_cps: f64,
    pub red_cps: f64,
    pub red_detuning_drift_mhz_per_hr: f64,
    pub acoustic_phase_jitter_rms_rad: f64,
    pub dark_cps: f64,
    pub min_significance: f64,
    pub seed: u64,

    pub data_path: Option<String>,
    pub fit_free: Vec<String>,
    pub fit_bounds: BTreeMap<String, [f64; 2]>,
    pub fit_scale: f64,
    /// Used when the data file has no `sigma` column.
    pub fit_relative_sigma: f64,
    pub fit_max_iter: usize,
    pub fit_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma_g_mhz: 15.0,
            gamma_r_mhz: 5.0,
            omega_g_mhz: 10.0,
            omega_r_mhz: 10.0,
            delta_g_mhz: -10.0,
            delta_r_mhz: 0.0,
            larmor_unit_mhz: 3.0,
            green_pol_theta_deg: 90.0,
            red_pol_theta_deg: 90.0,
            green_pol_spherical: None,
            red_pol_spherical: None,
            epsilon: 0.02,
            psi_rad: 0.0,
            decay_mod_enabled: true,
            shift_enabled: true,
            psi_points: 32,
            detection_contrast: 0.72,
            green_convention: ConventionKey::EnhancedDecayMax,
            contrast_floor: 1e-6,
            degeneracy_policy: PolicyKey::Reject,
            red_detuning_min_mhz: -99.0,
            red_detuning_max_mhz: 99.0,
            red_detuning_step_mhz: 2.0,
            omega_r_min_mhz: 5.0,
            omega_r_max_mhz: 40.0,
            omega_r_step_mhz: 5.0,
            contrast_threshold: 1e-3,
            periods: 80,
            bins_per_period: 32,
            bin_duration_s: 0.1,
            green_cps: 15e3,
            red_cps: 25e3,
            red_detuning_drift_mhz_per_hr: 2.0,
            acoustic_phase_jitter_rms_rad: 0.0,
            dark_cps: 0.0,
            min_significance: 3.0,
            seed: 0,
            data_path: None,
            fit_free: ["omega_g_mhz", "omega_r_mhz", "delta_g_mhz", "larmor_unit_mhz"]
                .map(String::from)
                .to_vec(),
            fit_bounds: BTreeMap::new(),
            fit_scale: 1.0,
            fit_relative_sigma: 1e-3,
            fit_max_iter: 200,
            fit_tol: 1e-10,
        }
    }
}

/// Raw configuration text with command-line overrides, kept for error
/// locations.
#[derive(Debug)]
pub struct ConfigSource {
    text: String,
    overridden: Vec<String>,
}

impl ConfigSource {
    /// 1-based line of `key = ...` in the file, 0 when the value came from
    /// `--set` or the defaults.
    pub fn line_of(&self, key: &str) -> usize {
        if self.overridden.iter().any(|k| k == key) {
            return 0;
        }
        self.text
            .lines()
            .position(|l| {
                l.trim_start()
                    .strip_prefix(key)
                    .is_some_and(|rest| rest.trim_start().starts_with('='))
            })
            .map_or(0, |i| i + 1)
    }

    fn error(&self, key: &str, message: impl Into<String>) -> CliError {
        CliError::config(key, self.line_of(key), message)
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses `text` and applies `key=value` overrides.
pub fn load(text: &str, overrides: &[String]) -> Result<(RunConfig, ConfigSource), CliError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map_or(0, |s| line_at(text, s.start));
        CliError::config("syntax", line, e.message().trim().to_string())
    })?;
    let mut overridden = Vec::new();
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::config("--set", 0, format!("expected key=value, got `{item}`")))?;
        let key = key.trim();
        let value = format!("v = {}", raw.trim())
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        table.insert(key.to_string(), value);
        overridden.push(key.to_string());
    }
    let source = ConfigSource {
        text: text.to_string(),
        overridden,
    };
    let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().trim().to_string();
        let key = msg
            .split('`')
            .nth(1)
            .filter(|k| !k.contains(' '))
            .unwrap_or("config")
            .to_string();
        source.error(&key, msg)
    })?;
    cfg.validate(&source)?;
    Ok((cfg, source))
}

fn require(src: &ConfigSource, key: &str, ok: bool, reason: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(src.error(key, reason))
    }
}

impl RunConfig {
    /// Range checks per key, so that errors point at the offending entry.
    pub fn validate(&self, src: &ConfigSource) -> Result<(), CliError> {
        let finite = |key: &str, v: f64| require(src, key, v.is_finite(), "must be finite");
        for (key, v) in [
            ("delta_g_mhz", self.delta_g_mhz),
            ("delta_r_mhz", self.delta_r_mhz),
            ("green_pol_theta_deg", self.green_pol_theta_deg),
            ("red_pol_theta_deg", self.red_pol_theta_deg),
            ("red_detuning_min_mhz", self.red_detuning_min_mhz),
            ("red_detuning_max_mhz", self.red_detuning_max_mhz),
            ("red_detuning_drift_mhz_per_hr", self.red_detuning_drift_mhz_per_hr),
        ] {
            finite(key, v)?;
        }
        for (key, v) in [("gamma_g_mhz", self.gamma_g_mhz), ("gamma_r_mhz", self.gamma_r_mhz)] {
            require(src, key, v > 0.0 && v.is_finite(), "must be positive")?;
        }
        for (key, v) in [
            ("omega_g_mhz", self.omega_g_mhz),
            ("omega_r_mhz", self.omega_r_mhz),
            ("larmor_unit_mhz", self.larmor_unit_mhz),
            ("green_cps", self.green_cps),
            ("red_cps", self.red_cps),
            ("acoustic_phase_jitter_rms_rad", self.acoustic_phase_jitter_rms_rad),
            ("dark_cps", self.dark_cps),
            ("contrast_floor", self.contrast_floor),
            ("contrast_threshold", self.contrast_threshold),
            ("min_significance", self.min_significance),
            ("fit_tol", self.fit_tol),
        ] {
            require(src, key, v >= 0.0 && v.is_finite(), "must be non-negative")?;
        }
        require(src, "epsilon", (0.0..1.0).contains(&self.epsilon), "must lie in [0, 1)")?;
        require(
            src,
            "psi_rad",
            (0.0..TAU).contains(&self.psi_rad),
            "must lie in [0, 2π)",
        )?;
        require(
            src,
            "detection_contrast",
            (0.0..=1.0).contains(&self.detection_contrast),
            "must lie in [0, 1]",
        )?;
        require(src, "psi_points", self.psi_points >= 8, "must be at least 8")?;
        require(
            src,
            "red_detuning_max_mhz",
            self.red_detuning_max_mhz >= self.red_detuning_min_mhz,
            "must not be below red_detuning_min_mhz",
        )?;
        require(
            src,
            "red_detuning_step_mhz",
            self.red_detuning_step_mhz > 0.0 && self.red_detuning_step_mhz.is_finite(),
            "must be positive",
        )?;
        require(
            src,
            "omega_r_min_mhz",
            self.omega_r_min_mhz >= 0.0 && self.omega_r_min_mhz.is_finite(),
            "must be non-negative",
        )?;
        require(
            src,
            "omega_r_max_mhz",
            self.omega_r_max_mhz >= self.omega_r_min_mhz && self.omega_r_max_mhz.is_finite(),
            "must not be below omega_r_min_mhz",
        )?;
        require(
            src,
            "omega_r_step_mhz",
            self.omega_r_step_mhz > 0.0 && self.omega_r_step_mhz.is_finite(),
            "must be positive",
        )?;
        require(src, "periods", self.periods >= 1, "must be at least 1")?;
        require(src, "bins_per_period", self.bins_per_period >= 3, "must be at least 3")?;
        require(
            src,
            "bin_duration_s",
            self.bin_duration_s > 0.0 && self.bin_duration_s.is_finite(),
            "must be positive",
        )?;
        require(
            src,
            "fit_scale",
            self.fit_scale > 0.0 && self.fit_scale.is_finite(),
            "must be positive",
        )?;
        require(
            src,
            "fit_relative_sigma",
            self.fit_relative_sigma > 0.0 && self.fit_relative_sigma.is_finite(),
            "must be positive",
        )?;
        require(
            src,
            "fit_free",
            !self.fit_free.is_empty(),
            "must name at least one parameter",
        )?;
        for name in &self.fit_free {
            let param: ParamName = name
                .parse()
                .map_err(|_| src.error("fit_free", format!("unknown parameter `{name}`")))?;
            require(
                src,
                "fit_free",
                param != ParamName::DeltaR,
                "delta_r_mhz is the spectrum abscissa",
            )?;
        }
        for (name, [lo, hi]) in &self.fit_bounds {
            name.parse::<ParamName>()
                .map_err(|_| src.error("fit_bounds", format!("unknown parameter `{name}`")))?;
            require(
                src,
                "fit_bounds",
                lo.is_finite() && hi.is_finite() && lo < hi,
                "bounds must be finite and ordered",
            )?;
        }
        self.system_params().map_err(|e| src.error("config", e.to_string()))?;
        Ok(())
    }

    fn polarization(theta_deg: f64, spherical: Option<[f64; 6]>) -> ionmirror::Result<Polarization<f64>> {
        match spherical {
            Some(c) => Polarization::new([
                Complex::new(c[0], c[1]),
                Complex::new(c[2], c[3]),
                Complex::new(c[4], c[5]),
            ]),
            None => Ok(Polarization::linear(theta_deg.to_radians())),
        }
    }

    pub fn system_params(&self) -> ionmirror::Result<SystemParams<f64>> {
        let mut mirror = MirrorParams::new(self.epsilon, self.psi_rad)?;
        mirror.decay_mod_enabled = self.decay_mod_enabled;
        mirror.shift_enabled = self.shift_enabled;
        SystemParams::new(
            LevelScheme::new(self.larmor_unit_mhz)?,
            LaserDrive::new(
                Transition::Green,
                self.delta_g_mhz,
                self.omega_g_mhz,
                Self::polarization(self.green_pol_theta_deg, self.green_pol_spherical)?,
            )?,
            LaserDrive::new(
                Transition::Red,
                self.delta_r_mhz,
                self.omega_r_mhz,
                Self::polarization(self.red_pol_theta_deg, self.red_pol_spherical)?,
            )?,
            DecayRates::new(self.gamma_g_mhz, self.gamma_r_mhz)?,
            mirror,
        )
    }

    pub fn policy(&self) -> DegeneracyPolicy {
        match self.degeneracy_policy {
            PolicyKey::Reject => DegeneracyPolicy::Reject,
            PolicyKey::MinimalNorm => DegeneracyPolicy::MinimalNorm,
        }
    }

    pub fn observable_config(&self) -> ObservableConfig<f64> {
        ObservableConfig {
            psi_points: self.psi_points,
            detection_contrast: self.detection_contrast,
            green_convention: match self.green_convention {
                ConventionKey::EnhancedDecayMax => GreenConvention::EnhancedDecayMax,
                ConventionKey::InhibitedDecayMax => GreenConvention::InhibitedDecayMax,
            },
            contrast_floor: self.contrast_floor,
            policy: self.policy(),
        }
    }

    /// `min, min + step, ...` up to `max`, tolerating rounding at the end.
    fn grid(min: f64, max: f64, step: f64) -> Vec<f64> {
        let n = ((max - min) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| min + step * k as f64).collect()
    }

    pub fn red_detuning_grid(&self) -> Vec<f64> {
        Self::grid(
            self.red_detuning_min_mhz,
            self.red_detuning_max_mhz,
            self.red_detuning_step_mhz,
        )
    }

    pub fn omega_r_grid(&self) -> Vec<f64> {
        Self::grid(self.omega_r_min_mhz, self.omega_r_max_mhz, self.omega_r_step_mhz)
    }

    pub fn scan_spec(&self) -> ScanSpec {
        ScanSpec {
            periods: self.periods,
            bins_per_period: self.bins_per_period,
            bin_duration: self.bin_duration_s,
        }
    }

    pub fn rates(&self) -> CountRates {
        CountRates {
            green_cps: self.green_cps,
            red_cps: self.red_cps,
        }
    }

    pub fn drift(&self) -> DriftModel {
        DriftModel {
            red_detuning_drift: self.red_detuning_drift_mhz_per_hr,
            acoustic_phase_jitter_rms: self.acoustic_phase_jitter_rms_rad,
            dark_cps: self.dark_cps,
        }
    }

    pub fn extract_config(&self) -> ExtractConfig {
        ExtractConfig {
            contrast_floor: self.contrast_floor,
            min_significance: self.min_significance,
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            max_iter: self.fit_max_iter,
            tol: self.fit_tol,
        }
    }

    /// Bounds for the free spectrum parameters: explicit `fit_bounds`
    /// entries, otherwise a wide default range per parameter.
    pub fn spectrum_bounds(&self) -> Vec<ParamBound> {
        self.fit_free
            .iter()
            .map(|name| {
                let param: ParamName = name.parse().expect("validated");
                let [lo, hi] = self.fit_bounds.get(name).copied().unwrap_or(match param {
                    ParamName::GammaG | ParamName::GammaR => [0.1, 100.0],
                    ParamName::OmegaG | ParamName::OmegaR => [0.1, 100.0],
                    ParamName::DeltaG | ParamName::DeltaR => [-100.0, 100.0],
                    ParamName::LarmorUnit => [0.1, 20.0],
                    ParamName::Epsilon => [0.0, 0.5],
                    ParamName::Psi => [0.0, TAU - 1e-12],
                    ParamName::Scale => [self.fit_scale * 1e-3, self.fit_scale * 1e3],
                });
                ParamBound::new(param, lo, hi)
            })
            .collect()
    }
}
