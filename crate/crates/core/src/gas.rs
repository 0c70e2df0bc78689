//! Thermodynamics of the γ-law gas with pressure normalised as `p(ρ) = ρ^γ / γ`.
//!
//! With this normalisation the sound speed is `c²(ρ) = ρ^(γ-1)` and the
//! enthalpy `h(ρ) = ρ^(γ-1) / (γ-1)` satisfies `h'(ρ) = c²(ρ) / ρ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasModel {
    gamma: f64,
}

/// Pressure, squared sound speed and enthalpy at one density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thermo {
    pub p: f64,
    pub c2: f64,
    pub h: f64,
}

impl GasModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::Domain {
                what: "adiabatic exponent gamma (must exceed 1)",
                value: gamma,
            });
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn check_density(rho: f64) -> Result<()> {
        if rho > 0.0 && rho.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "density",
                value: rho,
            })
        }
    }

    pub fn thermo(&self, rho: f64) -> Result<Thermo> {
        Self::check_density(rho)?;
        Ok(Thermo {
            p: self.pressure(rho),
            c2: self.sound_speed2(rho),
            h: self.enthalpy(rho),
        })
    }

    // Unchecked evaluators for hot loops; callers guarantee rho > 0.
    #[inline]
    pub fn pressure(&self, rho: f64) -> f64 {
        rho.powf(self.gamma) / self.gamma
    }

    #[inline]
    pub fn sound_speed2(&self, rho: f64) -> f64 {
        rho.powf(self.gamma - 1.0)
    }

    #[inline]
    pub fn enthalpy(&self, rho: f64) -> f64 {
        rho.powf(self.gamma - 1.0) / (self.gamma - 1.0)
    }

    /// Density at which the flow with mass flux `j` is sonic: `c²(ρ)ρ² = J²`,
    /// i.e. `ρ_s = J^(2/(γ+1))`.
    pub fn sonic_density(&self, j: f64) -> Result<f64> {
        if !(j > 0.0) || !j.is_finite() {
            return Err(Error::Domain {
                what: "mass flux J",
                value: j,
            });
        }
        Ok(j.powf(2.0 / (self.gamma + 1.0)))
    }

    pub fn mach(&self, speed: f64, rho: f64) -> Result<f64> {
        Self::check_density(rho)?;
        if !(speed >= 0.0) {
            return Err(Error::Domain {
                what: "speed",
                value: speed,
            });
        }
        Ok(speed / self.sound_speed2(rho).sqrt())
    }
}
