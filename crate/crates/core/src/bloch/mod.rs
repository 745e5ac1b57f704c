//! Eight-level optical Bloch equations with the mirror amendments.
//!
//! The Hamiltonian is written in the frame rotating with both lasers, with
//! P1/2 as the energy reference:
//!
//! ```text
//! H = Σ_S (Δ'_g + z_S)|S><S| + Σ_P z_P |P><P| + Σ_D (Δ'_r + z_D)|D><D|
//!   + Σ_q (Ω/2) a_q c(P, L, q) |P><L| + h.c.
//! ```
//!
//! where `Δ' = Δ - δ(ψ)` are the mirror-shifted detunings (laser minus
//! atomic frequency) and `z` the Zeeman shifts. Dissipation consists of six
//! jump operators, one per polarization channel and decay branch; only the
//! green branch feels the mirror.
//!
//! Interfaces take ordinary frequencies in MHz and times in µs. The factor
//! 2π is applied once, inside [`Liouvillian`].

mod density;
mod evolve;
mod liouvillian;
mod steady;

pub use density::{DensityMatrix, Tolerances};
pub use evolve::{evolve, EvolveOptions};
pub use liouvillian::{JumpOperator, Liouvillian};
pub use steady::{steady_state, steady_state_with, DegeneracyPolicy};

use nalgebra::DMatrix;

use crate::atomic::{dipole_amplitude, Level, LevelScheme, Sublevel, N_SUBLEVELS};
use crate::drive::{effective_detunings, modified_gamma, DecayRates, LaserDrive, MirrorParams, Transition};
use crate::error::{Error, Result};
use crate::num::{creal, lit, Complex, Real};

/// Everything the eight-level model depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams<T: Real> {
    pub scheme: LevelScheme<T>,
    pub green: LaserDrive<T>,
    pub red: LaserDrive<T>,
    pub rates: DecayRates<T>,
    pub mirror: MirrorParams<T>,
}

impl<T: Real> SystemParams<T> {
    pub fn new(
        scheme: LevelScheme<T>,
        green: LaserDrive<T>,
        red: LaserDrive<T>,
        rates: DecayRates<T>,
        mirror: MirrorParams<T>,
    ) -> Result<Self> {
        let p = SystemParams {
            scheme,
            green,
            red,
            rates,
            mirror,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        LevelScheme::new(self.scheme.larmor_unit)?;
        if self.green.transition != Transition::Green {
            return Err(Error::invalid("green", "first drive must be on the green transition"));
        }
        if self.red.transition != Transition::Red {
            return Err(Error::invalid("red", "second drive must be on the red transition"));
        }
        self.green.validate()?;
        self.red.validate()?;
        self.rates.validate()?;
        self.mirror.validate()
    }

    pub fn at_psi(&self, psi: T) -> Self {
        SystemParams {
            mirror: self.mirror.at_psi(psi),
            ..*self
        }
    }

    pub fn with_red_detuning(&self, detuning: T) -> Self {
        let mut p = *self;
        p.red.detuning = detuning;
        p
    }

    pub fn with_epsilon(&self, epsilon: T) -> Self {
        SystemParams {
            mirror: self.mirror.with_epsilon(epsilon),
            ..*self
        }
    }

    fn drive(&self, level: Level) -> &LaserDrive<T> {
        match level {
            Level::S12 => &self.green,
            _ => &self.red,
        }
    }
}

/// Rotating-frame Hamiltonian in MHz.
pub fn build_hamiltonian<T: Real>(p: &SystemParams<T>) -> Result<DMatrix<Complex<T>>> {
    let (delta_g, delta_r) = effective_detunings((&p.green, &p.red), &p.rates, &p.mirror)?;
    let mut h = DMatrix::zeros(N_SUBLEVELS, N_SUBLEVELS);

    for s in Sublevel::ALL {
        let frame = match s.level() {
            Level::S12 => delta_g,
            Level::P12 => T::zero(),
            Level::D32 => delta_r,
        };
        h[(s.index(), s.index())] = creal(frame + p.scheme.zeeman_shift(s));
    }

    let half = lit::<T>(0.5);
    for upper in Sublevel::of(Level::P12) {
        for lower_level in [Level::S12, Level::D32] {
            let drive = p.drive(lower_level);
            for lower in Sublevel::of(lower_level) {
                for q in -1..=1 {
                    let c = dipole_amplitude::<T>(upper, lower, q)?;
                    if c == T::zero() {
                        continue;
                    }
                    let coupling = drive.polarization.component(q) * creal(half * drive.rabi * c);
                    h[(upper.index(), lower.index())] += coupling;
                    h[(lower.index(), upper.index())] += coupling.conj();
                }
            }
        }
    }
    Ok(h)
}

/// The six decay channels: green q = -1, 0, +1 at the mirror-modified rate,
/// then red q = -1, 0, +1 at `Γ_r`.
pub fn build_jump_operators<T: Real>(p: &SystemParams<T>) -> Result<Vec<JumpOperator<T>>> {
    let green_rate = modified_gamma(&p.rates, &p.mirror);
    let mut jumps = Vec::with_capacity(6);
    for (lower_level, rate) in [(Level::S12, green_rate), (Level::D32, p.rates.gamma_r)] {
        for q in -1..=1 {
            let mut op = DMatrix::zeros(N_SUBLEVELS, N_SUBLEVELS);
            for upper in Sublevel::of(Level::P12) {
                for lower in Sublevel::of(lower_level) {
                    let c = dipole_amplitude::<T>(upper, lower, q)?;
                    if c != T::zero() {
                        op[(lower.index(), upper.index())] = creal(c);
                    }
                }
            }
            jumps.push(JumpOperator::new(rate, op));
        }
    }
    Ok(jumps)
}

pub fn build_liouvillian<T: Real>(p: &SystemParams<T>) -> Result<Liouvillian<T>> {
    p.validate()?;
    let h = build_hamiltonian(p)?;
    let jumps = build_jump_operators(p)?;
    Ok(Liouvillian::from_lindblad(&h, &jumps))
}

/// Steady state of the eight-level model under the default policy.
pub fn solve_steady_state<T: Real>(p: &SystemParams<T>) -> Result<DensityMatrix<T>> {
    steady_state(&build_liouvillian(p)?)
}

/// Total P1/2 population of an eight-level state.
pub fn p_population<T: Real>(rho: &DensityMatrix<T>) -> T {
    assert_eq!(rho.dim(), N_SUBLEVELS, "P population needs the eight-level basis");
    Sublevel::of(Level::P12).fold(T::zero(), |acc, s| acc + rho.population(s.index()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::Polarization;
    use crate::num::cabs;
    use std::f64::consts::FRAC_PI_2;

    fn params(omega: f64, larmor: f64, eps: f64, dg: f64, dr: f64) -> SystemParams<f64> {
        let pol = Polarization::linear(FRAC_PI_2);
        SystemParams::new(
            LevelScheme::new(larmor).unwrap(),
            LaserDrive::new(Transition::Green, dg, omega, pol).unwrap(),
            LaserDrive::new(Transition::Red, dr, omega, pol).unwrap(),
            DecayRates::new(15.0, 5.0).unwrap(),
            MirrorParams::new(eps, 0.0).unwrap(),
        )
        .unwrap()
    }

    fn block(i: usize) -> Level {
        Sublevel::from_index(i).unwrap().level()
    }

    #[test]
    fn hamiltonian_vanishes_without_drive_or_field() {
        let h = build_hamiltonian(&params(0.0, 0.0, 0.0, 0.0, 0.0)).unwrap();
        assert!(h.iter().all(|z| *z == Complex::new(0.0, 0.0)));
    }

    #[test]
    fn no_direct_ground_or_metastable_couplings() {
        let h = build_hamiltonian(&params(12.0, 3.0, 0.02, -10.0, 4.0)).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if i != j && block(i) != Level::P12 && block(j) != Level::P12 {
                    assert_eq!(h[(i, j)], Complex::new(0.0, 0.0), "({i},{j})");
                }
            }
        }
        // P sublevels are not coupled to each other either.
        assert_eq!(h[(2, 3)], Complex::new(0.0, 0.0));
    }

    #[test]
    fn detunings_and_zeeman_sit_on_the_diagonal() {
        let h = build_hamiltonian(&params(0.0, 3.0, 0.0, -10.0, 4.0)).unwrap();
        assert!((h[(0, 0)].re - (-10.0 - 3.0)).abs() < 1e-12);
        assert!((h[(3, 3)].re - 1.0).abs() < 1e-12);
        assert!((h[(7, 7)].re - (4.0 + 3.6)).abs() < 1e-12);
    }

    #[test]
    fn green_rates_follow_the_mirror_red_rates_do_not() {
        let jumps = build_jump_operators(&params(10.0, 3.0, 0.02, -10.0, 0.0)).unwrap();
        assert_eq!(jumps.len(), 6);
        for j in &jumps[..3] {
            assert!((j.rate - 14.7).abs() < 1e-12);
        }
        for j in &jumps[3..] {
            assert_eq!(j.rate, 5.0);
        }
    }

    #[test]
    fn jump_operators_map_p_into_lower_manifolds_only() {
        let jumps = build_jump_operators(&params(10.0, 3.0, 0.02, -10.0, 0.0)).unwrap();
        for (k, j) in jumps.iter().enumerate() {
            let target = if k < 3 { Level::S12 } else { Level::D32 };
            for r in 0..8 {
                for c in 0..8 {
                    if j.op[(r, c)] != Complex::new(0.0, 0.0) {
                        assert_eq!(block(c), Level::P12);
                        assert_eq!(block(r), target);
                    }
                }
            }
        }
    }

    #[test]
    fn total_decay_out_of_each_p_sublevel() {
        let p = params(10.0, 3.0, 0.02, -10.0, 0.0);
        let jumps = build_jump_operators(&p).unwrap();
        let expected = modified_gamma(&p.rates, &p.mirror) + p.rates.gamma_r;
        for upper in [2, 3] {
            let total: f64 = jumps
                .iter()
                .map(|j| j.rate * (0..8).map(|r| cabs(j.op[(r, upper)]).powi(2)).sum::<f64>())
                .sum();
            assert!((total - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn red_drive_must_be_red() {
        let mut p = params(10.0, 3.0, 0.02, -10.0, 0.0);
        p.red.transition = Transition::Green;
        assert!(p.validate().is_err());
        assert!(build_liouvillian(&p).is_err());
    }
}
