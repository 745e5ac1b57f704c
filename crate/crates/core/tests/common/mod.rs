#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use ionmirror::atomic::LevelScheme;
use ionmirror::bloch::{JumpOperator, Liouvillian, SystemParams};
use ionmirror::drive::{DecayRates, LaserDrive, MirrorParams, Polarization, Transition};
use ionmirror::Complex;
use nalgebra::DMatrix;
use rand::Rng;

/// Default parameter set: Γ_g = 15, Γ_r = 5, Ω_g = Ω_r = 10, Δ_g = -10,
/// larmor unit 3 MHz, ε = 0.02, both lasers linearly polarized at right
/// angles to the field.
pub fn default_params(delta_r: f64) -> SystemParams<f64> {
    let pol = Polarization::linear(FRAC_PI_2);
    SystemParams::new(
        LevelScheme::new(3.0).unwrap(),
        LaserDrive::new(Transition::Green, -10.0, 10.0, pol).unwrap(),
        LaserDrive::new(Transition::Red, delta_r, 10.0, pol).unwrap(),
        DecayRates::new(15.0, 5.0).unwrap(),
        MirrorParams::new(0.02, 0.0).unwrap(),
    )
    .unwrap()
}

fn random_polarization<R: Rng>(rng: &mut R) -> Polarization<f64> {
    let c = |rng: &mut R| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Polarization::new([c(rng), c(rng), c(rng)]).unwrap()
}

/// Generic driven configuration with a non-degenerate steady state.
pub fn random_params<R: Rng>(rng: &mut R) -> SystemParams<f64> {
    SystemParams::new(
        LevelScheme::new(rng.random_range(2.0..6.0)).unwrap(),
        LaserDrive::new(
            Transition::Green,
            rng.random_range(-20.0..-5.0),
            rng.random_range(5.0..20.0),
            random_polarization(rng),
        )
        .unwrap(),
        LaserDrive::new(
            Transition::Red,
            rng.random_range(-30.0..30.0),
            rng.random_range(5.0..20.0),
            random_polarization(rng),
        )
        .unwrap(),
        DecayRates::new(15.0, 5.0).unwrap(),
        MirrorParams::new(
            rng.random_range(0.0..0.04),
            rng.random_range(0.0..std::f64::consts::TAU),
        )
        .unwrap(),
    )
    .unwrap()
}

/// Two-level atom, ground = 0, excited = 1, in the same frame convention as
/// the eight-level model (excited state as energy reference).
pub fn two_level(detuning: f64, rabi: f64, gamma: f64) -> Liouvillian<f64> {
    let mut h = DMatrix::<Complex<f64>>::zeros(2, 2);
    h[(0, 0)] = Complex::new(detuning, 0.0);
    h[(0, 1)] = Complex::new(rabi / 2.0, 0.0);
    h[(1, 0)] = Complex::new(rabi / 2.0, 0.0);
    let mut lower = DMatrix::<Complex<f64>>::zeros(2, 2);
    lower[(0, 1)] = Complex::new(1.0, 0.0);
    Liouvillian::from_lindblad(&h, &[JumpOperator::new(gamma, lower)])
}

/// Analytic excited-state population of the driven two-level atom.
pub fn two_level_excited(detuning: f64, rabi: f64, gamma: f64) -> f64 {
    (rabi * rabi / 4.0) / (detuning * detuning + gamma * gamma / 4.0 + rabi * rabi / 2.0)
}
