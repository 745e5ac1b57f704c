mod common;

use std::f64::consts::TAU;

use common::default_params;
use ionmirror::bloch::{p_population, DegeneracyPolicy};
use ionmirror::counts::{
    extract_correlation_phase, synth_counts, CountBin, CountRates, CountRecord, DriftModel, ExtractConfig, ScanSpec,
};
use ionmirror::observables::{
    correlation_phase, fit_fringe_weighted, green_signal, phase_vs_detuning, solve, ObservableConfig,
};
use ionmirror::{Error, SystemParamsF64};

fn model_phase(p: &SystemParamsF64, obs: &ObservableConfig<f64>) -> f64 {
    phase_vs_detuning(p, &[p.red.detuning], obs).unwrap()[0].phase.unwrap()
}

fn wrapped(d: f64) -> f64 {
    (d + TAU / 2.0).rem_euclid(TAU) - TAU / 2.0
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let v: Vec<f64> = xs.collect();
    (v.iter().sum::<f64>() / v.len() as f64, v.len())
}

#[test]
fn records_are_reproducible_from_the_seed() {
    let p = default_params(-4.0);
    let scan = ScanSpec {
        periods: 3,
        ..ScanSpec::default()
    };
    let obs = ObservableConfig::default();
    let a = synth_counts(&p, &scan, &CountRates::default(), &DriftModel::default(), &obs, 7).unwrap();
    let b = synth_counts(&p, &scan, &CountRates::default(), &DriftModel::default(), &obs, 7).unwrap();
    let c = synth_counts(&p, &scan, &CountRates::default(), &DriftModel::default(), &obs, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.bins.len(), 96);
    assert!(a.bins.windows(2).all(|w| w[1].t > w[0].t));
}

#[test]
fn zero_rates_give_zero_counts() {
    let rates = CountRates {
        green_cps: 0.0,
        red_cps: 0.0,
    };
    let scan = ScanSpec {
        periods: 2,
        ..ScanSpec::default()
    };
    let rec = synth_counts(
        &default_params(0.0),
        &scan,
        &rates,
        &DriftModel::none(),
        &ObservableConfig::default(),
        1,
    )
    .unwrap();
    assert!(rec.bins.iter().all(|b| b.green == 0 && b.red == 0));
}

#[test]
fn flat_signal_has_poisson_mean() {
    let p = default_params(0.0).with_epsilon(0.0);
    let obs = ObservableConfig {
        detection_contrast: 0.0,
        ..ObservableConfig::default()
    };
    let scan = ScanSpec {
        periods: 313,
        ..ScanSpec::default()
    };
    let rates = CountRates::default();
    let rec = synth_counts(&p, &scan, &rates, &DriftModel::none(), &obs, 11).unwrap();
    for (counts, rate) in [(rec.green(), rates.green_cps), (rec.red(), rates.red_cps)] {
        let (m, n) = mean(counts.into_iter());
        let lambda = rate * scan.bin_duration;
        assert!(n >= 10_000);
        assert!(
            (m - lambda).abs() <= 3.0 * (lambda / n as f64).sqrt(),
            "{m} vs {lambda}"
        );
    }
}

#[test]
fn default_rates_give_expected_bin_means() {
    let rec = synth_counts(
        &default_params(-4.0),
        &ScanSpec::default(),
        &CountRates::default(),
        &DriftModel::none(),
        &ObservableConfig::default(),
        3,
    )
    .unwrap();
    let (g, _) = mean(rec.green().into_iter());
    let (r, _) = mean(rec.red().into_iter());
    assert!((g / 1500.0 - 1.0).abs() < 0.01, "green {g}");
    assert!((r / 2500.0 - 1.0).abs() < 0.01, "red {r}");
}

#[test]
fn dark_counts_add_to_the_mean() {
    let p = default_params(0.0).with_epsilon(0.0);
    let drift = DriftModel {
        dark_cps: 500.0,
        ..DriftModel::none()
    };
    let scan = ScanSpec {
        periods: 40,
        ..ScanSpec::default()
    };
    let rec = synth_counts(
        &p,
        &scan,
        &CountRates::default(),
        &drift,
        &ObservableConfig::default(),
        5,
    )
    .unwrap();
    let (r, n) = mean(rec.red().into_iter());
    assert!((r - 2550.0).abs() <= 3.0 * (2550.0 / n as f64).sqrt());
}

fn fringe_record(green_phase: f64, red_phase: f64, red_contrast: f64) -> CountRecord {
    let a = 1e9;
    let bins = (0..64)
        .map(|k| {
            let psi = TAU * (k % 16) as f64 / 16.0;
            CountBin {
                t: 0.1 * k as f64,
                green: (a * (1.0 + 0.3 * (psi - green_phase).cos())).round() as u64,
                red: (a * (1.0 + red_contrast * (psi - red_phase).cos())).round() as u64,
                psi,
            }
        })
        .collect();
    CountRecord::new(0.1, bins).unwrap()
}

#[test]
fn noiseless_fringes_give_exact_phase() {
    for (g, r) in [(0.0, 0.0), (3.0, 0.5), (1.0, 5.5)] {
        let est = extract_correlation_phase(&fringe_record(g, r, 0.2), &ExtractConfig::default()).unwrap();
        assert!(wrapped(est.phase - (r - g)).abs() < 1e-6);
        assert!((est.green_contrast - 0.3).abs() < 1e-6);
        assert!((est.red_contrast - 0.2).abs() < 1e-6);
    }
}

#[test]
fn flat_red_channel_has_undefined_phase() {
    let err = extract_correlation_phase(&fringe_record(0.0, 0.0, 0.0), &ExtractConfig::default()).unwrap_err();
    assert!(matches!(err, Error::UndefinedPhase { .. }));

    let p = default_params(-4.0).with_epsilon(0.0);
    let undefined = (0..20)
        .filter(|&seed| {
            let rec = synth_counts(
                &p,
                &ScanSpec::default(),
                &CountRates::default(),
                &DriftModel::none(),
                &ObservableConfig::default(),
                seed,
            )
            .unwrap();
            matches!(
                extract_correlation_phase(&rec, &ExtractConfig::default()),
                Err(Error::UndefinedPhase { .. })
            )
        })
        .count();
    assert!(undefined >= 18, "{undefined} of 20");
}

#[test]
fn reported_error_is_calibrated() {
    let p = default_params(-4.0);
    let obs = ObservableConfig::default();
    let truth = model_phase(&p, &obs);
    let mut deviations = Vec::new();
    let mut errors = Vec::new();
    for seed in 0..100 {
        let rec = synth_counts(
            &p,
            &ScanSpec::default(),
            &CountRates::default(),
            &DriftModel::none(),
            &obs,
            seed,
        )
        .unwrap();
        let est = extract_correlation_phase(&rec, &ExtractConfig::default()).unwrap();
        deviations.push(wrapped(est.phase - truth));
        errors.push(est.phase_error);
    }
    let within = deviations
        .iter()
        .zip(&errors)
        .filter(|(d, e)| d.abs() <= 3.0 * **e)
        .count();
    assert!(within >= 95, "{within} of 100 within 3σ");
    let scatter = (deviations.iter().map(|d| d * d).sum::<f64>() / deviations.len() as f64).sqrt();
    let (reported, _) = mean(errors.into_iter());
    let ratio = reported / scatter;
    assert!((0.5..=2.0).contains(&ratio), "reported {reported}, scatter {scatter}");
}

#[test]
fn jitter_washes_out_contrast() {
    let p = default_params(-4.0);
    let obs = ObservableConfig::default();
    let rates = CountRates {
        green_cps: 1e8,
        red_cps: 1e8,
    };
    let scan = ScanSpec {
        periods: 20,
        ..ScanSpec::default()
    };
    let clean = synth_counts(&p, &scan, &rates, &DriftModel::none(), &obs, 2).unwrap();
    let jitter = DriftModel {
        acoustic_phase_jitter_rms: 0.5,
        ..DriftModel::none()
    };
    let shaken = synth_counts(&p, &scan, &rates, &jitter, &obs, 2).unwrap();
    let cfg = ExtractConfig::default();
    let a = extract_correlation_phase(&clean, &cfg).unwrap();
    let b = extract_correlation_phase(&shaken, &cfg).unwrap();
    // Gaussian phase noise multiplies the first harmonic by exp(-σ²/2).
    let expected = (-0.125f64).exp();
    assert!((b.green_contrast / a.green_contrast - expected).abs() < 0.02);
    assert!((b.red_contrast / a.red_contrast - expected).abs() < 0.05);
}

/// Correlation phase of the noiseless fringes that the drifting model
/// predicts for the bins of `rec`, fitted with the same Poisson weights.
fn drifted_model_phase(p: &SystemParamsF64, drift: &DriftModel, rec: &CountRecord, obs: &ObservableConfig<f64>) -> f64 {
    let (mut green, mut red) = (Vec::new(), Vec::new());
    for b in &rec.bins {
        let at = p
            .with_red_detuning(drift.red_detuning_at(p.red.detuning, b.t))
            .at_psi(b.psi);
        let pop = p_population(&solve(&at, DegeneracyPolicy::Reject).unwrap());
        red.push(pop);
        green.push(green_signal(pop, &at, obs.detection_contrast, obs.green_convention));
    }
    let psi = rec.psi();
    let fit = |y: &[f64]| {
        let w: Vec<f64> = y.iter().map(|v| 1.0 / v).collect();
        fit_fringe_weighted(&psi, y, Some(&w)).unwrap().fit
    };
    correlation_phase(&fit(&green), &fit(&red), 1e-6).unwrap()
}

/// A seven-hour run sampled as separate 80-period scans, each starting at
/// the detuning the drift has reached by then.
#[test]
fn detuning_drift_moves_the_phase_like_the_model() {
    let obs = ObservableConfig::default();
    let drift = DriftModel::default();
    let mut phases = Vec::new();
    for k in 0..15 {
        let p = default_params(drift.red_detuning_at(-7.0, 1680.0 * k as f64));
        let rec = synth_counts(&p, &ScanSpec::default(), &CountRates::default(), &drift, &obs, 100 + k).unwrap();
        let est = extract_correlation_phase(&rec, &ExtractConfig::default()).unwrap();
        let d = wrapped(est.phase - drifted_model_phase(&p, &drift, &rec, &obs));
        assert!(
            d.abs() <= 3.0 * est.phase_error,
            "Δr = {}: off by {d}, error {}",
            p.red.detuning,
            est.phase_error
        );
        phases.push(est.phase);
    }
    let span = wrapped(phases[phases.len() - 1] - phases[0]).abs();
    assert!(span > 0.3, "drift barely moved the phase: {span}");
}
