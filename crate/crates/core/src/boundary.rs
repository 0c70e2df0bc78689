//! Boundary and source data as finite Fourier series in the square's
//! normalised coordinates `x ∈ [0, 1]`, evaluated on the solver's unit torus
//! through `x = 2y`.
//!
//! Sine factors vanish with all their even derivatives on the walls and
//! cosine factors have vanishing odd derivatives there, so every series
//! below satisfies the wall compatibility conditions exactly and extends to
//! the torus by reflection without loss of smoothness.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid3, Slice2};

/// One coefficient of a lateral series: `c · X_k(x₂) · Y_l(x₃)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: u32,
    pub l: u32,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `sin(kπx₂)·cos(lπx₃)`: odd across the `x₂` walls (flow angle `β₂`).
    SinCos,
    /// `cos(kπx₂)·sin(lπx₃)`: odd across the `x₃` walls (flow angle `β₃`).
    CosSin,
    /// `cos(kπx₂)·cos(lπx₃)`: even scalars.
    CosCos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    pub basis: Basis,
    pub modes: Vec<Mode>,
}

// Solver coordinate y maps to square coordinate x = 2y, so the angular
// frequency in y is 2kπ.
#[inline]
fn freq(k: u32) -> f64 {
    2.0 * PI * k as f64
}

impl FourierSeries {
    pub fn zero(basis: Basis) -> Self {
        Self {
            basis,
            modes: Vec::new(),
        }
    }

    pub fn new(basis: Basis, modes: Vec<Mode>) -> Self {
        Self { basis, modes }
    }

    fn factors(&self, m: &Mode, y2: f64, y3: f64) -> ([f64; 2], [f64; 2]) {
        let (a, b) = (freq(m.k) * y2, freq(m.l) * y3);
        let (s2, c2) = a.sin_cos();
        let (s3, c3) = b.sin_cos();
        let (w2, w3) = (freq(m.k), freq(m.l));
        // (value, derivative) for each factor
        match self.basis {
            Basis::SinCos => ([s2, w2 * c2], [c3, -w3 * s3]),
            Basis::CosSin => ([c2, -w2 * s2], [s3, w3 * c3]),
            Basis::CosCos => ([c2, -w2 * s2], [c3, -w3 * s3]),
        }
    }

    pub fn value(&self, y2: f64, y3: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (f2, f3) = self.factors(m, y2, y3);
                m.c * f2[0] * f3[0]
            })
            .sum()
    }

    /// `∂/∂y₂` in solver coordinates.
    pub fn d2(&self, y2: f64, y3: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (f2, f3) = self.factors(m, y2, y3);
                m.c * f2[1] * f3[0]
            })
            .sum()
    }

    /// `∂/∂y₃` in solver coordinates.
    pub fn d3(&self, y2: f64, y3: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (f2, f3) = self.factors(m, y2, y3);
                m.c * f2[0] * f3[1]
            })
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.c == 0.0)
    }

    pub fn sample(&self, n2: usize, n3: usize) -> Slice2 {
        let mut s = Slice2::zeros(n2, n3);
        for j in 0..n2 {
            for k in 0..n3 {
                s.values[j * n3 + k] = self.value(j as f64 / n2 as f64, k as f64 / n3 as f64);
            }
        }
        s
    }

    fn validate(&self, name: &str, n2: usize, n3: usize) -> Result<()> {
        for (idx, m) in self.modes.iter().enumerate() {
            if !m.c.is_finite() {
                return Err(Error::Precondition(format!("{name}[{idx}]: coefficient is not finite")));
            }
            if 2 * m.k as usize >= n2 || 2 * m.l as usize >= n3 {
                return Err(Error::Precondition(format!(
                    "{name}[{idx}]: mode ({}, {}) is not resolvable on a {n2}x{n3} lateral grid",
                    m.k, m.l
                )));
            }
        }
        Ok(())
    }
}

/// One term `c · x₁^p · cos(kπx₂) · cos(lπx₃)` of the doping perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeTerm {
    pub p: u32,
    pub k: u32,
    pub l: u32,
    pub c: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChargeProfile {
    pub terms: Vec<ChargeTerm>,
}

impl ChargeProfile {
    pub fn value(&self, x1: f64, y2: f64, y3: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.c * x1.powi(t.p as i32) * (freq(t.k) * y2).cos() * (freq(t.l) * y3).cos())
            .sum()
    }
}

/// Inlet, exit and source data for the perturbation problem, all scaled by `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub eps: f64,
    pub beta2_in: FourierSeries,
    pub beta3_in: FourierSeries,
    pub bernoulli_in: FourierSeries,
    pub efield_in: FourierSeries,
    pub exit_log_density: FourierSeries,
    pub charge: ChargeProfile,
}

impl BoundaryData {
    pub fn zero(eps: f64) -> Self {
        Self {
            eps,
            beta2_in: FourierSeries::zero(Basis::SinCos),
            beta3_in: FourierSeries::zero(Basis::CosSin),
            bernoulli_in: FourierSeries::zero(Basis::CosCos),
            efield_in: FourierSeries::zero(Basis::CosCos),
            exit_log_density: FourierSeries::zero(Basis::CosCos),
            charge: ChargeProfile::default(),
        }
    }

    /// Reference data set used by the examples and the acceptance suite.
    pub fn desk(eps: f64) -> Self {
        let m = |k, l, c| Mode { k, l, c };
        Self {
            eps,
            beta2_in: FourierSeries::new(Basis::SinCos, vec![m(1, 0, 1.0), m(1, 1, 0.5)]),
            beta3_in: FourierSeries::new(Basis::CosSin, vec![m(0, 1, 0.8), m(1, 1, -0.3)]),
            bernoulli_in: FourierSeries::new(Basis::CosCos, vec![m(1, 0, 0.5), m(0, 1, 0.4)]),
            efield_in: FourierSeries::new(Basis::CosCos, vec![m(0, 0, 0.2), m(1, 1, 0.5)]),
            exit_log_density: FourierSeries::new(Basis::CosCos, vec![m(1, 1, 0.6), m(0, 1, -0.4)]),
            charge: ChargeProfile {
                terms: vec![
                    ChargeTerm {
                        p: 0,
                        k: 1,
                        l: 0,
                        c: 0.5,
                    },
                    ChargeTerm {
                        p: 1,
                        k: 0,
                        l: 1,
                        c: 0.3,
                    },
                ],
            },
        }
    }

    pub fn validate(&self, grid: &Grid3) -> Result<()> {
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::Domain {
                what: "perturbation scale eps",
                value: self.eps,
            });
        }
        let expect = [
            ("beta2_in", &self.beta2_in, Basis::SinCos),
            ("beta3_in", &self.beta3_in, Basis::CosSin),
            ("bernoulli_in", &self.bernoulli_in, Basis::CosCos),
            ("efield_in", &self.efield_in, Basis::CosCos),
            ("exit_log_density", &self.exit_log_density, Basis::CosCos),
        ];
        for (name, series, basis) in expect {
            if series.basis != basis {
                return Err(Error::Compatibility(format!(
                    "{name} must use the {basis:?} basis to satisfy the wall conditions"
                )));
            }
            series.validate(name, grid.n2, grid.n3)?;
        }
        for (idx, t) in self.charge.terms.iter().enumerate() {
            if 2 * t.k as usize >= grid.n2 || 2 * t.l as usize >= grid.n3 || !t.c.is_finite() {
                return Err(Error::Precondition(format!(
                    "charge[{idx}]: mode ({}, {}) is not resolvable on a {}x{} lateral grid",
                    t.k, t.l, grid.n2, grid.n3
                )));
            }
        }
        Ok(())
    }
}
