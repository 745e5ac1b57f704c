//! Zeeman sublevels of the Ba+ S1/2, P1/2 and D3/2 manifolds.
//!
//! Magnetic quantum numbers are stored doubled (`twice_m`) so that every
//! half-integer is exact. The eight sublevels have a fixed basis order:
//!
//! | index | sublevel        |
//! |-------|-----------------|
//! | 0, 1  | S1/2 m = -1/2, +1/2 |
//! | 2, 3  | P1/2 m = -1/2, +1/2 |
//! | 4..7  | D3/2 m = -3/2 .. +3/2 |

use std::fmt;

use crate::error::{Error, Result};
use crate::num::{lit, Real};

/// Number of sublevels in the model.
pub const N_SUBLEVELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    S12,
    P12,
    D32,
}

impl Level {
    /// Twice the total angular momentum J.
    pub const fn twice_j(self) -> i32 {
        match self {
            Level::S12 | Level::P12 => 1,
            Level::D32 => 3,
        }
    }

    /// Pure-LS Landé factor.
    pub fn g_factor<T: Real>(self) -> T {
        match self {
            Level::S12 => lit(2.0),
            Level::P12 => lit::<T>(2.0) / lit(3.0),
            Level::D32 => lit::<T>(4.0) / lit(5.0),
        }
    }

    pub const fn label(self) -> &'static str {
        match self {
            Level::S12 => "S1/2",
            Level::P12 => "P1/2",
            Level::D32 => "D3/2",
        }
    }
}

/// One Zeeman sublevel `(level, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sublevel {
    level: Level,
    twice_m: i8,
}

impl Sublevel {
    /// All sublevels in basis order.
    pub const ALL: [Sublevel; N_SUBLEVELS] = [
        Sublevel {
            level: Level::S12,
            twice_m: -1,
        },
        Sublevel {
            level: Level::S12,
            twice_m: 1,
        },
        Sublevel {
            level: Level::P12,
            twice_m: -1,
        },
        Sublevel {
            level: Level::P12,
            twice_m: 1,
        },
        Sublevel {
            level: Level::D32,
            twice_m: -3,
        },
        Sublevel {
            level: Level::D32,
            twice_m: -1,
        },
        Sublevel {
            level: Level::D32,
            twice_m: 1,
        },
        Sublevel {
            level: Level::D32,
            twice_m: 3,
        },
    ];

    /// Builds a sublevel from its doubled magnetic quantum number.
    pub fn new(level: Level, twice_m: i8) -> Result<Self> {
        let j2 = level.twice_j() as i8;
        if twice_m.abs() > j2 || (twice_m - j2) % 2 != 0 {
            return Err(Error::invalid(
                "twice_m",
                format!("{twice_m}/2 is not a magnetic sublevel of {}", level.label()),
            ));
        }
        Ok(Sublevel { level, twice_m })
    }

    pub const fn level(self) -> Level {
        self.level
    }

    pub const fn twice_m(self) -> i8 {
        self.twice_m
    }

    pub fn m<T: Real>(self) -> T {
        lit::<T>(self.twice_m as f64) / lit(2.0)
    }

    /// Position in the fixed basis.
    pub const fn index(self) -> usize {
        let base = match self.level {
            Level::S12 => 0,
            Level::P12 => 2,
            Level::D32 => 4,
        };
        base + ((self.twice_m + self.level.twice_j() as i8) / 2) as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Sublevels of one fine-structure level, in basis order.
    pub fn of(level: Level) -> impl Iterator<Item = Sublevel> {
        Self::ALL.into_iter().filter(move |s| s.level == level)
    }
}

impl fmt::Display for Sublevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.twice_m < 0 { '-' } else { '+' };
        write!(f, "{}(m={}{}/2)", self.level.label(), sign, self.twice_m.abs())
    }
}

/// Magnetic field strength of the model, expressed as the Larmor unit
/// `mu_B * B / h` in MHz. The sublevel list and Landé factors are fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelScheme<T> {
    pub larmor_unit: T,
}

impl<T: Real> LevelScheme<T> {
    pub fn new(larmor_unit: T) -> Result<Self> {
        if !larmor_unit.is_finite() {
            return Err(Error::invalid("larmor_unit_mhz", "must be finite"));
        }
        Ok(LevelScheme { larmor_unit })
    }

    pub fn sublevels(&self) -> &'static [Sublevel; N_SUBLEVELS] {
        &Sublevel::ALL
    }

    /// Linear Zeeman shift `g * m * larmor_unit` in MHz.
    pub fn zeeman_shift(&self, s: Sublevel) -> T {
        s.level.g_factor::<T>() * s.m::<T>() * self.larmor_unit
    }
}

/// Clebsch-Gordan amplitude `c` for the jump `|lower><upper|` in
/// polarization channel `q`, i.e. `<J_lower m_lower; 1 q | 1/2 m_upper>`.
///
/// The amplitudes of each P1/2 sublevel into one lower manifold sum in
/// square to one, so a decay rate `Γ` is shared among the channels without
/// further normalization.
pub fn dipole_amplitude<T: Real>(upper: Sublevel, lower: Sublevel, q: i8) -> Result<T> {
    if upper.level != Level::P12 {
        return Err(Error::NotUpperLevel(upper.to_string()));
    }
    if lower.level == Level::P12 {
        return Err(Error::invalid("lower", "must be an S1/2 or D3/2 sublevel"));
    }
    if !(-1..=1).contains(&q) {
        return Err(Error::invalid("q", format!("polarization index {q} outside -1..=1")));
    }
    Ok(clebsch_gordan(
        lower.level.twice_j(),
        lower.twice_m as i32,
        2,
        2 * q as i32,
        upper.level.twice_j(),
        upper.twice_m as i32,
    ))
}

/// `<j1 m1; j2 m2 | J M>` from the Racah formula; all arguments doubled.
pub fn clebsch_gordan<T: Real>(j1: i32, m1: i32, j2: i32, m2: i32, j: i32, m: i32) -> T {
    let parity_ok = |a: i32, b: i32| (a + b) % 2 == 0;
    if m1 + m2 != m
        || m1.abs() > j1
        || m2.abs() > j2
        || m.abs() > j
        || !parity_ok(j1, m1)
        || !parity_ok(j2, m2)
        || !parity_ok(j, m)
        || j < (j1 - j2).abs()
        || j > j1 + j2
        || !parity_ok(j1 + j2, j)
    {
        return T::zero();
    }
    // Undoubled integer arguments of the factorials.
    let h = |x: i32| x / 2;
    let fact = |n: i32| -> T { (1..=n).fold(T::one(), |acc, k| acc * lit(k as f64)) };

    let prefactor = lit::<T>((j + 1) as f64) * fact(h(j + j1 - j2)) * fact(h(j - j1 + j2)) * fact(h(j1 + j2 - j))
        / fact(h(j1 + j2 + j) + 1)
        * fact(h(j + m))
        * fact(h(j - m))
        * fact(h(j1 - m1))
        * fact(h(j1 + m1))
        * fact(h(j2 - m2))
        * fact(h(j2 + m2));

    let k_min = 0.max(h(j2 - j - m1)).max(h(j1 - j + m2));
    let k_max = h(j1 + j2 - j).min(h(j1 - m1)).min(h(j2 + m2));
    let mut sum = T::zero();
    for k in k_min..=k_max {
        let denom = fact(k)
            * fact(h(j1 + j2 - j) - k)
            * fact(h(j1 - m1) - k)
            * fact(h(j2 + m2) - k)
            * fact(h(j - j2 + m1) + k)
            * fact(h(j - j1 - m2) + k);
        let term = T::one() / denom;
        sum += if k % 2 == 0 { term } else { -term };
    }
    prefactor.sqrt() * sum
}
