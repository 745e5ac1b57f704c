//! Command-line driver: loads a [`RunConfig`], runs one subcommand and
//! writes its results to `<out>/<command>.csv`.

pub mod config;
pub mod error;
pub mod io;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ionmirror::atomic::Sublevel;
use ionmirror::bloch::SystemParams;
use ionmirror::counts::{extract_correlation_phase, synth_counts};
use ionmirror::estimation::{fit_epsilon, fit_spectrum, FitResult};
use ionmirror::observables::{
    anomaly_search, contrast_vs_detuning, excitation_spectrum, fringe_scan, phase_vs_detuning, solve,
};
use ionmirror::Error;

pub use config::{ConfigSource, RunConfig};
pub use error::{CliError, ErrorKind};
use io::{float, write_csv};

#[derive(Debug, Parser)]
#[command(
    name = "ionmirror",
    version,
    about = "Ion-mirror fluorescence model: scans, fits and count records"
)]
pub struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if needed.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides one config key; the value is read as TOML, else as a string.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Steady-state sublevel populations.
    Steady,
    /// Red and green signals over one mirror period.
    Fringe,
    /// Correlation phase and contrasts across red detunings.
    PhaseScan,
    /// Red fringe contrast across red detunings.
    ContrastScan,
    /// P population across red detunings.
    Spectrum,
    /// Fit model parameters to an excitation spectrum in `data_path`.
    FitSpectrum,
    /// Fit epsilon to red contrasts in `data_path`.
    FitEpsilon,
    /// Synthesize a photon count record.
    Synth,
    /// Correlation phase of the count record in `data_path`.
    ExtractPhase,
    /// Grid over red Rabi frequency and red detuning for low contrast and
    /// phase curves that return to zero.
    AnomalySearch,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Steady => "steady",
            Command::Fringe => "fringe",
            Command::PhaseScan => "phase-scan",
            Command::ContrastScan => "contrast-scan",
            Command::Spectrum => "spectrum",
            Command::FitSpectrum => "fit-spectrum",
            Command::FitEpsilon => "fit-epsilon",
            Command::Synth => "synth",
            Command::ExtractPhase => "extract-phase",
            Command::AnomalySearch => "anomaly-search",
        }
    }
}

/// Everything a subcommand needs.
struct Run {
    cfg: RunConfig,
    source: ConfigSource,
    out: PathBuf,
    command: Command,
}

impl Run {
    fn fail(&self, err: Error) -> CliError {
        error::classify(err, |k| self.source.line_of(k))
    }

    fn params(&self) -> Result<SystemParams<f64>, CliError> {
        self.cfg.system_params().map_err(|e| self.fail(e))
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.out.join(format!("{}{suffix}.csv", self.command.name()))
    }

    fn data_path(&self) -> Result<&Path, CliError> {
        self.cfg.data_path.as_deref().map(Path::new).ok_or_else(|| {
            CliError::config(
                "data_path",
                self.source.line_of("data_path"),
                "required by this command",
            )
        })
    }
}

/// Runs the parsed command line and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
        None => String::new(),
    };
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let (cfg, source) = config::load(&text, &overrides)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    let run = Run {
        cfg,
        source,
        out: cli.out.clone(),
        command: cli.command,
    };
    match cli.command {
        Command::Steady => steady(&run),
        Command::Fringe => fringe(&run),
        Command::PhaseScan => phase_scan(&run),
        Command::ContrastScan => contrast_scan(&run),
        Command::Spectrum => spectrum(&run),
        Command::FitSpectrum => fit_spectrum_cmd(&run),
        Command::FitEpsilon => fit_epsilon_cmd(&run),
        Command::Synth => synth(&run),
        Command::ExtractPhase => extract_phase(&run),
        Command::AnomalySearch => anomaly(&run),
    }
}

fn steady(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let rho = solve(&run.params()?, run.cfg.policy()).map_err(|e| run.fail(e))?;
    let rows: Vec<Vec<String>> = rho
        .populations()
        .into_iter()
        .enumerate()
        .map(|(i, pop)| {
            let label = Sublevel::from_index(i).map_or_else(|| i.to_string(), |s| s.to_string());
            vec![i.to_string(), float(pop), label]
        })
        .collect();
    let path = run.path("");
    write_csv(&path, &["sublevel", "population", "label"], &rows)?;
    Ok(vec![path])
}

fn fringe(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let scan = fringe_scan(&run.params()?, &run.cfg.observable_config()).map_err(|e| run.fail(e))?;
    let rows: Vec<Vec<String>> = (0..scan.psi_values.len())
        .map(|k| {
            vec![
                float(scan.psi_values[k]),
                float(scan.red_signal[k]),
                float(scan.green_signal[k]),
            ]
        })
        .collect();
    let path = run.path("");
    write_csv(&path, &["psi_rad", "red_signal", "green_signal"], &rows)?;
    Ok(vec![path])
}

fn phase_scan(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let points = phase_vs_detuning(
        &run.params()?,
        &run.cfg.red_detuning_grid(),
        &run.cfg.observable_config(),
    )
    .map_err(|e| run.fail(e))?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|pt| {
            vec![
                float(pt.detuning_r),
                float(pt.phase.unwrap_or(f64::NAN)),
                float(pt.red.contrast),
                float(pt.green.contrast),
                pt.phase.is_some().to_string(),
            ]
        })
        .collect();
    let path = run.path("");
    write_csv(
        &path,
        &[
            "delta_r_mhz",
            "phase_rad",
            "red_contrast",
            "green_contrast",
            "phase_defined",
        ],
        &rows,
    )?;
    Ok(vec![path])
}

fn contrast_scan(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let points = contrast_vs_detuning(
        &run.params()?,
        &run.cfg.red_detuning_grid(),
        &run.cfg.observable_config(),
    )
    .map_err(|e| run.fail(e))?;
    let rows: Vec<Vec<String>> = points.iter().map(|&(d, c)| vec![float(d), float(c)]).collect();
    let path = run.path("");
    write_csv(&path, &["delta_r_mhz", "red_contrast"], &rows)?;
    Ok(vec![path])
}

/// Writes every point, then reports the first failed one.
fn spectrum(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let points =
        excitation_spectrum(&run.params()?, &run.cfg.red_detuning_grid(), run.cfg.policy()).map_err(|e| run.fail(e))?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|pt| {
            let (pop, status) = match &pt.population {
                Ok(v) => (*v, "ok".to_string()),
                Err(e) => (f64::NAN, status_label(e)),
            };
            vec![float(pt.detuning_r), float(pop), status]
        })
        .collect();
    let path = run.path("");
    write_csv(&path, &["delta_r_mhz", "p_population", "status"], &rows)?;
    if let Some(pt) = points.iter().find(|pt| pt.population.is_err()) {
        let err = pt.population.clone().unwrap_err();
        return Err(run.fail(Error::AtDetuning {
            detuning_r_mhz: pt.detuning_r,
            source: Box::new(err),
        }));
    }
    Ok(vec![path])
}

fn status_label(e: &Error) -> String {
    match e.root() {
        Error::SingularSystem { .. } => "singular",
        Error::ResidualTooLarge { .. } => "residual",
        Error::NonPhysical { .. } => "nonphysical",
        _ => "failed",
    }
    .to_string()
}

fn write_fit(run: &Run, fit: &FitResult, n_points: usize) -> Result<Vec<PathBuf>, CliError> {
    let rows: Vec<Vec<String>> = fit
        .best_params
        .iter()
        .zip(&fit.uncertainties)
        .map(|((name, v), err)| vec![name.clone(), float(*v), float(*err)])
        .collect();
    let params = run.path("");
    write_csv(&params, &["parameter", "value", "uncertainty"], &rows)?;
    let summary = run.path("-summary");
    write_csv(
        &summary,
        &["chi2", "reduced_chi2", "points", "iterations", "convergence"],
        &[vec![
            float(fit.chi2),
            float(fit.reduced_chi2(n_points)),
            n_points.to_string(),
            fit.iterations.to_string(),
            format!("{:?}", fit.convergence).to_lowercase(),
        ]],
    )?;
    Ok(vec![params, summary])
}

fn fit_spectrum_cmd(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let data = io::read_observations(run.data_path()?, run.cfg.fit_relative_sigma)?;
    let fit = fit_spectrum(
        &run.params()?,
        run.cfg.fit_scale,
        &data,
        &run.cfg.spectrum_bounds(),
        run.cfg.policy(),
        &run.cfg.fit_config(),
    )
    .map_err(|e| run.fail(e))?;
    write_fit(run, &fit, data.len())
}

fn fit_epsilon_cmd(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let data = io::read_observations(run.data_path()?, run.cfg.fit_relative_sigma)?;
    let fit = fit_epsilon(
        &run.params()?,
        &data,
        &run.cfg.observable_config(),
        &run.cfg.fit_config(),
    )
    .map_err(|e| run.fail(e))?;
    write_fit(run, &fit, data.len())
}

fn synth(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &run.cfg;
    let rec = synth_counts(
        &run.params()?,
        &cfg.scan_spec(),
        &cfg.rates(),
        &cfg.drift(),
        &cfg.observable_config(),
        cfg.seed,
    )
    .map_err(|e| run.fail(e))?;
    let path = run.path("");
    io::write_count_record(&path, &rec)?;
    Ok(vec![path])
}

/// Also reports the noiseless model phase at the configured detuning.
fn extract_phase(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let rec = io::read_count_record(run.data_path()?, run.cfg.bin_duration_s)?;
    let p = run.params()?;
    let model = phase_vs_detuning(&p, &[p.red.detuning], &run.cfg.observable_config()).map_err(|e| run.fail(e))?[0]
        .phase
        .unwrap_or(f64::NAN);
    let row = match extract_correlation_phase(&rec, &run.cfg.extract_config()) {
        Ok(est) => vec![
            float(est.phase),
            float(est.phase_error),
            float(est.green_contrast),
            float(est.red_contrast),
            "true".into(),
            float(model),
        ],
        Err(Error::UndefinedPhase { .. }) => {
            let nan = float(f64::NAN);
            vec![nan.clone(), nan.clone(), nan.clone(), nan, "false".into(), float(model)]
        }
        Err(e) => return Err(run.fail(e)),
    };
    let path = run.path("");
    write_csv(
        &path,
        &[
            "phase_rad",
            "phase_error_rad",
            "green_contrast",
            "red_contrast",
            "phase_defined",
            "model_phase_rad",
        ],
        &[row],
    )?;
    Ok(vec![path])
}

fn anomaly(run: &Run) -> Result<Vec<PathBuf>, CliError> {
    let cfg = &run.cfg;
    let rows = anomaly_search(
        &run.params()?,
        &cfg.omega_r_grid(),
        &cfg.red_detuning_grid(),
        cfg.contrast_threshold,
        &cfg.observable_config(),
    )
    .map_err(|e| run.fail(e))?;
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                float(r.omega_r),
                float(r.min_red_contrast),
                float(r.detuning_at_min),
                r.below_threshold.to_string(),
                float(r.phase_winding.unwrap_or(f64::NAN)),
                r.returns_to_zero.to_string(),
            ]
        })
        .collect();
    let path = run.path("");
    write_csv(
        &path,
        &[
            "omega_r_mhz",
            "min_red_contrast",
            "delta_r_at_min_mhz",
            "below_threshold",
            "phase_winding_rad",
            "returns_to_zero",
        ],
        &rows,
    )?;
    Ok(vec![path])
}
