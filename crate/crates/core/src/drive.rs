//! Laser drives and the back-action of the distant mirror.
//!
//! The mirror enters the model only through the green (S-P) decay constant
//! and a common shift of both detunings:
//!
//! ```text
//! Γ_g(ψ) = Γ_g (1 - ε cos ψ)
//! Δ_{g,r}(ψ) = Δ_{g,r} - (ε Γ_g / 2) sin ψ
//! ```
//!
//! with `ψ = 2kl` the round-trip phase at 493 nm. All frequencies are
//! ordinary frequencies in MHz.

use crate::error::{Error, Result};
use crate::num::{cabs, creal, lit, Complex, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transition {
    /// S1/2 <-> P1/2 at 493 nm.
    Green,
    /// D3/2 <-> P1/2 at 650 nm.
    Red,
}

impl Transition {
    pub const fn label(self) -> &'static str {
        match self {
            Transition::Green => "green",
            Transition::Red => "red",
        }
    }
}

/// Normalized spherical polarization components `(a_-1, a_0, a_+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polarization<T: Real>([Complex<T>; 3]);

impl<T: Real> Polarization<T> {
    /// Normalizes the given components; fails on a zero or non-finite vector.
    pub fn new(components: [Complex<T>; 3]) -> Result<Self> {
        let norm_sq = components
            .iter()
            .fold(T::zero(), |acc, z| acc + z.re * z.re + z.im * z.im);
        if !norm_sq.is_finite() || norm_sq <= T::zero() {
            return Err(Error::invalid("polarization", "needs a finite non-zero vector"));
        }
        let inv = creal(T::one() / norm_sq.sqrt());
        Ok(Polarization(components.map(|z| z * inv)))
    }

    /// Linear polarization at angle `theta` to the quantization axis.
    pub fn linear(theta: T) -> Self {
        let s = theta.sin() / lit::<T>(2.0).sqrt();
        Polarization([creal(s), creal(theta.cos()), creal(-s)])
    }

    /// Component for channel `q` in `-1..=1`.
    pub fn component(&self, q: i8) -> Complex<T> {
        self.0[(q + 1) as usize]
    }

    pub fn components(&self) -> &[Complex<T>; 3] {
        &self.0
    }

    /// Multiplies every component by `e^{i phi}`.
    pub fn with_global_phase(&self, phi: T) -> Self {
        let rot = Complex::new(phi.cos(), phi.sin());
        Polarization(self.0.map(|z| z * rot))
    }

    pub fn norm(&self) -> T {
        self.0.iter().fold(T::zero(), |acc, z| acc + cabs(*z) * cabs(*z)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserDrive<T: Real> {
    pub transition: Transition,
    /// Detuning from the line centre, MHz.
    pub detuning: T,
    /// Peak Rabi frequency, MHz.
    pub rabi: T,
    pub polarization: Polarization<T>,
}

impl<T: Real> LaserDrive<T> {
    pub fn new(transition: Transition, detuning: T, rabi: T, polarization: Polarization<T>) -> Result<Self> {
        let drive = LaserDrive {
            transition,
            detuning,
            rabi,
            polarization,
        };
        drive.validate()?;
        Ok(drive)
    }

    pub fn validate(&self) -> Result<()> {
        let (det, rabi) = match self.transition {
            Transition::Green => ("delta_g_mhz", "omega_g_mhz"),
            Transition::Red => ("delta_r_mhz", "omega_r_mhz"),
        };
        if !self.detuning.is_finite() {
            return Err(Error::invalid(det, "must be finite"));
        }
        if !self.rabi.is_finite() || self.rabi < T::zero() {
            return Err(Error::invalid(rabi, "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Mirror coupling: solid-angle fraction `epsilon`, phase `psi = 2kl` and
/// switches for the decay modification and the level shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorParams<T> {
    pub epsilon: T,
    pub psi: T,
    pub decay_mod_enabled: bool,
    pub shift_enabled: bool,
}

impl<T: Real> MirrorParams<T> {
    pub fn new(epsilon: T, psi: T) -> Result<Self> {
        let m = MirrorParams {
            epsilon,
            psi,
            decay_mod_enabled: true,
            shift_enabled: true,
        };
        m.validate()?;
        Ok(m)
    }

    /// No mirror at all.
    pub fn off() -> Self {
        MirrorParams {
            epsilon: T::zero(),
            psi: T::zero(),
            decay_mod_enabled: true,
            shift_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= T::zero() && self.epsilon < T::one()) {
            return Err(Error::invalid("epsilon", "must satisfy 0 <= epsilon < 1"));
        }
        if !(self.psi >= T::zero() && self.psi < T::two_pi()) {
            return Err(Error::invalid("psi_rad", "must lie in [0, 2pi)"));
        }
        Ok(())
    }

    /// Same mirror at another phase.
    pub fn at_psi(&self, psi: T) -> Self {
        MirrorParams { psi, ..*self }
    }

    pub fn with_epsilon(&self, epsilon: T) -> Self {
        MirrorParams { epsilon, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRates<T> {
    /// P1/2 -> S1/2, MHz.
    pub gamma_g: T,
    /// P1/2 -> D3/2, MHz.
    pub gamma_r: T,
}

impl<T: Real> DecayRates<T> {
    pub fn new(gamma_g: T, gamma_r: T) -> Result<Self> {
        let r = DecayRates { gamma_g, gamma_r };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_g.is_finite() && self.gamma_g > T::zero()) {
            return Err(Error::invalid("gamma_g_mhz", "must be finite and > 0"));
        }
        if !(self.gamma_r.is_finite() && self.gamma_r > T::zero()) {
            return Err(Error::invalid("gamma_r_mhz", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Green decay constant in front of the mirror, `Γ_g (1 - ε cos ψ)`.
pub fn modified_gamma<T: Real>(rates: &DecayRates<T>, mirror: &MirrorParams<T>) -> T {
    if !mirror.decay_mod_enabled || mirror.epsilon == T::zero() {
        return rates.gamma_g;
    }
    rates.gamma_g * (T::one() - mirror.epsilon * mirror.psi.cos())
}

/// Energy shift of P1/2 in MHz, `(ε Γ_g / 2) sin ψ`. Subtracted from both
/// detunings; independent of any laser parameter.
pub fn level_shift<T: Real>(rates: &DecayRates<T>, mirror: &MirrorParams<T>) -> T {
    if !mirror.shift_enabled || mirror.epsilon == T::zero() {
        return T::zero();
    }
    mirror.epsilon * rates.gamma_g / lit::<T>(2.0) * mirror.psi.sin()
}

/// Mirror-shifted `(Δ_g, Δ_r)`. The drives may come in either order.
pub fn effective_detunings<T: Real>(
    lasers: (&LaserDrive<T>, &LaserDrive<T>),
    rates: &DecayRates<T>,
    mirror: &MirrorParams<T>,
) -> Result<(T, T)> {
    let (a, b) = lasers;
    if a.transition == b.transition {
        return Err(Error::SameTransition(a.transition.label()));
    }
    let (green, red) = if a.transition == Transition::Green {
        (a, b)
    } else {
        (b, a)
    };
    let shift = level_shift(rates, mirror);
    Ok((green.detuning - shift, red.detuning - shift))
}
