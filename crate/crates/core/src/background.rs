//! One-dimensional subsonic background flow.
//!
//! The steady 1-D system `(ρu)' = 0, (p + ρu²)' = ρE, E' = ρ - b₀` reduces, with
//! `u = J/ρ`, to an autonomous system in the `(ρ, E)` phase plane whose orbits
//! are level sets of `½E² - H(ρ)` with
//!
//! ```text
//! H'(ρ) = (ρ - b₀)/ρ · (p'(ρ) - J²/ρ²)
//! ```
//!
//! Initial data on the orbit through the equilibrium `(b₀, 0)` (the critical
//! trajectory) produce solutions that stay subsonic and relax to the
//! equilibrium. Two branches are supported: `ρ_s < ρ_I < b₀, E_I > 0` and
//! `ρ_I > b₀, E_I < 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::GasModel;

/// Tolerance on `½E_I² + ∫_{ρ_I}^{b₀} H'` for the inlet state to count as
/// lying on the critical trajectory.
pub const CRITICAL_TOLERANCE: f64 = 1e-8;

/// Relative margin above the sonic density at which integration stops.
const SONIC_MARGIN: f64 = 1e-9;

/// Human-readable form of the trajectory slope used everywhere below.
pub const PHASE_FORMULA: &str = "H'(rho) = ((rho - b0)/rho) * (p'(rho) - J^2/rho^2)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Branch {
    /// `ρ_I = b₀, E_I = 0`: the constant solution.
    Equilibrium,
    /// `ρ_s < ρ_I < b₀, E_I > 0`: density rises, field decays.
    Rising,
    /// `ρ_I > b₀, E_I < 0`: density rises, field increases to zero.
    Overshoot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePlaneConfig {
    pub gas: GasModel,
    pub b0: f64,
    pub j: f64,
    pub rho_inlet: f64,
    pub e_inlet: f64,
}

fn check_plane(gas: &GasModel, b0: f64, j: f64) -> Result<f64> {
    let rho_s = gas.sonic_density(j)?;
    if !(b0 > rho_s) {
        return Err(Error::Precondition(format!(
            "background charge b0 = {b0} must exceed the sonic density {rho_s}"
        )));
    }
    Ok(rho_s)
}

/// `H'(ρ)` for the phase plane with parameters `(gas, b0, j)`.
pub fn phase_slope(gas: &GasModel, b0: f64, j: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain {
            what: "density",
            value: rho,
        });
    }
    let g = gas.gamma();
    let dp = rho.powf(g - 1.0);
    Ok((rho - b0) / rho * (dp - j * j / (rho * rho)))
}

/// Closed-form primitive of `H'` for the γ-law gas.
pub fn phase_potential(gas: &GasModel, b0: f64, j: f64, rho: f64) -> f64 {
    let g = gas.gamma();
    let j2 = j * j;
    rho.powf(g) / g - b0 * rho.powf(g - 1.0) / (g - 1.0) + j2 / rho - b0 * j2 / (2.0 * rho * rho)
}

/// Inlet field that places `(rho_inlet, E_I)` on the critical trajectory.
/// Positive on the rising branch, negative on the overshoot branch.
pub fn critical_field(gas: &GasModel, b0: f64, j: f64, rho_inlet: f64) -> Result<f64> {
    let rho_s = check_plane(gas, b0, j)?;
    if !(rho_inlet > rho_s) {
        return Err(Error::Domain {
            what: "inlet density (must be subsonic, above the sonic density)",
            value: rho_inlet,
        });
    }
    let integral = phase_potential(gas, b0, j, b0) - phase_potential(gas, b0, j, rho_inlet);
    let disc = -2.0 * integral;
    let scale = phase_potential(gas, b0, j, b0).abs().max(1.0);
    if disc < -1e-13 * scale {
        return Err(Error::Consistency(format!(
            "negative discriminant {disc:e} on the critical trajectory at rho = {rho_inlet}"
        )));
    }
    let magnitude = disc.max(0.0).sqrt();
    Ok(if rho_inlet < b0 { magnitude } else { -magnitude })
}

impl PhasePlaneConfig {
    pub fn new(gas: GasModel, b0: f64, j: f64, rho_inlet: f64, e_inlet: f64) -> Result<Self> {
        let rho_s = check_plane(&gas, b0, j)?;
        if !(rho_inlet > rho_s) {
            return Err(Error::Domain {
                what: "inlet density (must be subsonic, above the sonic density)",
                value: rho_inlet,
            });
        }
        Ok(Self {
            gas,
            b0,
            j,
            rho_inlet,
            e_inlet,
        })
    }

    /// Configuration on the critical trajectory through `rho_inlet`.
    pub fn critical(gas: GasModel, b0: f64, j: f64, rho_inlet: f64) -> Result<Self> {
        let e = critical_field(&gas, b0, j, rho_inlet)?;
        Self::new(gas, b0, j, rho_inlet, e)
    }

    pub fn sonic_density(&self) -> f64 {
        self.gas.sonic_density(self.j).expect("validated at construction")
    }

    pub fn phase_rhs(&self, rho: f64) -> Result<f64> {
        phase_slope(&self.gas, self.b0, self.j, rho)
    }

    /// `½E² - ∫_{ρ_I}^{ρ} H' - ½E_I²`, zero along the orbit through the inlet state.
    pub fn trajectory_residual(&self, rho: f64, e: f64) -> f64 {
        let h = |r| phase_potential(&self.gas, self.b0, self.j, r);
        0.5 * e * e - (h(rho) - h(self.rho_inlet)) - 0.5 * self.e_inlet * self.e_inlet
    }

    /// `½E_I² + ∫_{ρ_I}^{b₀} H'`, zero on the critical trajectory.
    pub fn critical_residual(&self) -> f64 {
        let h = |r| phase_potential(&self.gas, self.b0, self.j, r);
        0.5 * self.e_inlet * self.e_inlet + h(self.b0) - h(self.rho_inlet)
    }

    pub fn branch(&self) -> Result<Branch> {
        let r = self.critical_residual();
        if r.abs() > CRITICAL_TOLERANCE {
            return Err(Error::Precondition(format!(
                "inlet state (rho = {}, E = {}) is off the critical trajectory (residual {r:e})",
                self.rho_inlet, self.e_inlet
            )));
        }
        let dr = self.rho_inlet - self.b0;
        if dr.abs() <= 1e-12 * self.b0 && self.e_inlet.abs() <= 1e-6 {
            Ok(Branch::Equilibrium)
        } else if dr < 0.0 && self.e_inlet > 0.0 {
            Ok(Branch::Rising)
        } else if dr > 0.0 && self.e_inlet < 0.0 {
            Ok(Branch::Overshoot)
        } else {
            Err(Error::Precondition(format!(
                "inlet state (rho = {}, E = {}) lies on the sonic-bound half of the critical trajectory",
                self.rho_inlet, self.e_inlet
            )))
        }
    }

    /// Right-hand side of `(ρ, E, Φ)' = (ρ²E/(ρp'(ρ) - J²/ρ), ρ - b₀, E)`.
    fn rhs(&self, state: [f64; 3]) -> [f64; 3] {
        let [rho, e, _] = state;
        let c2 = self.gas.sound_speed2(rho);
        let denom = rho * c2 - self.j * self.j / rho;
        [rho * rho * e / denom, rho - self.b0, e]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackgroundSolution {
    pub gas: GasModel,
    pub branch: Branch,
    pub n: usize,
    pub x1: Vec<f64>,
    pub rho0: Vec<f64>,
    pub u0: Vec<f64>,
    pub e0: Vec<f64>,
    pub phi0: Vec<f64>,
    pub s0: Vec<f64>,
    pub j: f64,
    pub b0: f64,
    /// Bernoulli constant `½u₀² + h(ρ₀) - φ₀`, taken at the exit sample.
    pub bernoulli: f64,
}

/// Background profile on `[0, 1]` with `n` uniform samples.
pub fn integrate_background(cfg: &PhasePlaneConfig, n: usize) -> Result<BackgroundSolution> {
    integrate_profile(cfg, 1.0, n)
}

/// Background profile on `[0, length]`; `φ₀` vanishes at `x = length`.
pub fn integrate_profile(cfg: &PhasePlaneConfig, length: f64, n: usize) -> Result<BackgroundSolution> {
    if n < 2 {
        return Err(Error::Precondition(format!("need at least 2 samples, got {n}")));
    }
    let branch = cfg.branch()?;
    let rho_floor = cfg.sonic_density() * (1.0 + SONIC_MARGIN);
    let step = length / (n - 1) as f64;

    let mut states = Vec::with_capacity(n);
    let mut y = [cfg.rho_inlet, cfg.e_inlet, 0.0];
    states.push(y);
    for i in 1..n {
        let x = (i - 1) as f64 * step;
        y = rk4_step(cfg, y, step, x, rho_floor)?;
        states.push(y);
    }

    let phi_end = states[n - 1][2];
    let x1: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
    let rho0: Vec<f64> = states.iter().map(|s| s[0]).collect();
    let e0: Vec<f64> = states.iter().map(|s| s[1]).collect();
    let phi0: Vec<f64> = states.iter().map(|s| s[2] - phi_end).collect();
    let u0: Vec<f64> = rho0.iter().map(|r| cfg.j / r).collect();
    let s0: Vec<f64> = rho0.iter().map(|r| r.ln()).collect();
    let bernoulli = 0.5 * u0[n - 1] * u0[n - 1] + cfg.gas.enthalpy(rho0[n - 1]) - phi0[n - 1];

    Ok(BackgroundSolution {
        gas: cfg.gas,
        branch,
        n,
        x1,
        rho0,
        u0,
        e0,
        phi0,
        s0,
        j: cfg.j,
        b0: cfg.b0,
        bernoulli,
    })
}

/// Background on `n` uniform samples, integrated with at least `min_intervals`
/// RK4 steps and thinned onto the requested samples.
pub fn integrate_resolved(cfg: &PhasePlaneConfig, n: usize, min_intervals: usize) -> Result<BackgroundSolution> {
    if n < 2 {
        return Err(Error::Precondition(format!("need at least 2 samples, got {n}")));
    }
    let stride = min_intervals.div_ceil(n - 1).max(1);
    integrate_background(cfg, (n - 1) * stride + 1)?.subsample(stride)
}

fn rk4_step(cfg: &PhasePlaneConfig, y: [f64; 3], h: f64, x: f64, rho_floor: f64) -> Result<[f64; 3]> {
    let guard = |s: [f64; 3], at: f64| -> Result<[f64; 3]> {
        if s[0] <= rho_floor || !s[0].is_finite() {
            Err(Error::Singularity {
                x: at,
                rho: s[0],
                sonic: cfg.sonic_density(),
            })
        } else {
            Ok(s)
        }
    };
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = cfg.rhs(guard(y, x)?);
    let k2 = cfg.rhs(guard(add(y, k1, 0.5 * h), x + 0.5 * h)?);
    let k3 = cfg.rhs(guard(add(y, k2, 0.5 * h), x + 0.5 * h)?);
    let k4 = cfg.rhs(guard(add(y, k3, h), x + h)?);
    let next = [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        y[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ];
    guard(next, x + h)
}

impl BackgroundSolution {
    pub fn sonic_density(&self) -> f64 {
        self.gas.sonic_density(self.j).expect("positive flux")
    }

    pub fn sound_speed2(&self) -> Vec<f64> {
        self.rho0.iter().map(|&r| self.gas.sound_speed2(r)).collect()
    }

    /// Samples of `½u₀² + h(ρ₀) - φ₀`; constant up to integration error.
    pub fn bernoulli_samples(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| 0.5 * self.u0[i] * self.u0[i] + self.gas.enthalpy(self.rho0[i]) - self.phi0[i])
            .collect()
    }

    /// Exact `ds₀/dx₁ = E₀ / (c²(ρ₀) - u₀²)` from the ODE.
    pub fn log_density_slope(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let c2 = self.gas.sound_speed2(self.rho0[i]);
                self.e0[i] / (c2 - self.u0[i] * self.u0[i])
            })
            .collect()
    }

    /// Every `stride`-th sample, e.g. to thin a fine integration onto a coarse grid.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !(self.n - 1).is_multiple_of(stride) {
            return Err(Error::Precondition(format!(
                "stride {stride} does not divide {} intervals",
                self.n - 1
            )));
        }
        let pick = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
        Ok(Self {
            gas: self.gas,
            branch: self.branch,
            n: (self.n - 1) / stride + 1,
            x1: pick(&self.x1),
            rho0: pick(&self.rho0),
            u0: pick(&self.u0),
            e0: pick(&self.e0),
            phi0: pick(&self.phi0),
            s0: pick(&self.s0),
            j: self.j,
            b0: self.b0,
            bernoulli: self.bernoulli,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x1,rho0,u0,E0,phi0\n");
        for i in 0..self.n {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}\n",
                self.x1[i], self.rho0[i], self.u0[i], self.e0[i], self.phi0[i]
            ));
        }
        out
    }
}

/// Poincaré constant of `[0, length] × T²` for functions vanishing at the exit
/// face: the inverse of the first eigenvalue `(π/2L)²` of `-d²/dx²` with a
/// Neumann inlet and Dirichlet exit. Lateral modes only raise the eigenvalue.
pub fn poincare_constant(length: f64) -> f64 {
    let l = 2.0 * length / std::f64::consts::PI;
    l * l
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Window {
    pub lower: f64,
    pub upper: f64,
    pub min: f64,
    pub max: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmallnessReport {
    pub phase_formula: String,
    pub poincare_constant: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub e_abs_max: f64,
    pub mach_max: f64,
    /// `b₀/2 < ρ₀ < 3b₀/2` on all samples.
    pub density_bracket: Window,
    /// `⅙√(1/(b₀C)) < u₀ < ⅔√(1/(b₀C))`; advisory.
    pub velocity_window: Window,
    /// `max E₀` against `1/C³`; the true bound carries an extra factor that
    /// cannot be computed, so this is advisory.
    pub field_scale: f64,
    pub field_within_scale: bool,
}

pub fn smallness_report(bg: &BackgroundSolution) -> SmallnessReport {
    let length = bg.x1[bg.n - 1];
    let c = poincare_constant(length);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (rho_min, rho_max) = (min(&bg.rho0), max(&bg.rho0));
    let (u_min, u_max) = (min(&bg.u0), max(&bg.u0));
    let e_abs_max = bg.e0.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let e_max = max(&bg.e0);
    let mach_max = (0..bg.n)
        .map(|i| bg.u0[i] / bg.gas.sound_speed2(bg.rho0[i]).sqrt())
        .fold(0.0, f64::max);
    let root = (1.0 / (bg.b0 * c)).sqrt();
    let density_bracket = Window {
        lower: 0.5 * bg.b0,
        upper: 1.5 * bg.b0,
        min: rho_min,
        max: rho_max,
        holds: 0.5 * bg.b0 < rho_min && rho_max < 1.5 * bg.b0,
    };
    let velocity_window = Window {
        lower: root / 6.0,
        upper: 2.0 * root / 3.0,
        min: u_min,
        max: u_max,
        holds: root / 6.0 < u_min && u_max < 2.0 * root / 3.0,
    };
    let field_scale = 1.0 / (c * c * c);
    SmallnessReport {
        phase_formula: PHASE_FORMULA.to_string(),
        poincare_constant: c,
        rho_min,
        rho_max,
        u_min,
        u_max,
        e_abs_max,
        mach_max,
        density_bracket,
        velocity_window,
        field_scale,
        field_within_scale: e_max < field_scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_gas() -> GasModel {
        GasModel::new(2.0).unwrap()
    }

    #[test]
    fn phase_rhs_zeros_and_value() {
        let g = desk_gas();
        assert_eq!(phase_slope(&g, 2.0, 1.0, 2.0).unwrap(), 0.0);
        assert_eq!(phase_slope(&g, 2.0, 1.0, 1.0).unwrap(), 0.0);
        // ((1.5-2)/1.5)·(1.5 - 1/1.5²) = -19/54
        let v = phase_slope(&g, 2.0, 1.0, 1.5).unwrap();
        assert!((v + 19.0 / 54.0).abs() < 1e-15);
        assert!(phase_slope(&g, 2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn phase_rhs_signs() {
        let g = desk_gas();
        for k in 1..20 {
            let r = 1.0 + k as f64 * 0.05;
            let v = phase_slope(&g, 2.0, 1.0, r).unwrap();
            assert!(v < 0.0, "rho={r}");
            let v = phase_slope(&g, 2.0, 1.0, 2.0 + k as f64 * 0.1).unwrap();
            assert!(v > 0.0);
        }
    }

    #[test]
    fn critical_field_values() {
        let g = desk_gas();
        assert_eq!(critical_field(&g, 2.0, 1.0, 2.0).unwrap(), 0.0);
        // ∫_{1.5}^{2} H' = -7/72 from the closed-form primitive, E = √(7/36)
        let e = critical_field(&g, 2.0, 1.0, 1.5).unwrap();
        assert!((e - (7.0f64 / 36.0).sqrt()).abs() < 1e-12);
        assert!((e - 0.440_958_6).abs() < 1e-7);
        assert!(critical_field(&g, 2.0, 1.0, 2.5).unwrap() < 0.0);
        assert!(critical_field(&g, 2.0, 1.0, 0.9).is_err());
        assert!(critical_field(&g, 0.9, 1.0, 1.5).is_err());
    }

    #[test]
    fn equilibrium_is_constant() {
        let cfg = PhasePlaneConfig::critical(desk_gas(), 2.0, 1.0, 2.0).unwrap();
        let bg = integrate_background(&cfg, 101).unwrap();
        assert_eq!(bg.branch, Branch::Equilibrium);
        for i in 0..bg.n {
            assert_eq!(bg.rho0[i], 2.0);
            assert_eq!(bg.e0[i], 0.0);
            assert_eq!(bg.u0[i], 0.5);
            assert_eq!(bg.phi0[i], 0.0);
        }
    }

    #[test]
    fn off_critical_and_wrong_branch_rejected() {
        let g = desk_gas();
        let cfg = PhasePlaneConfig::new(g, 2.0, 1.0, 1.5, 0.3).unwrap();
        assert!(matches!(integrate_background(&cfg, 11), Err(Error::Precondition(_))));
        let e = critical_field(&g, 2.0, 1.0, 1.5).unwrap();
        let cfg = PhasePlaneConfig::new(g, 2.0, 1.0, 1.5, -e).unwrap();
        assert!(matches!(cfg.branch(), Err(Error::Precondition(_))));
    }

    #[test]
    fn sonic_crossing_reports_location() {
        // Sonic-bound half of a non-critical orbit: starts just above ρ_s with E < 0.
        let g = desk_gas();
        let mut cfg = PhasePlaneConfig::new(g, 2.0, 1.0, 1.05, -1.0).unwrap();
        let mut y = [cfg.rho_inlet, cfg.e_inlet, 0.0];
        let floor = cfg.sonic_density() * (1.0 + SONIC_MARGIN);
        let mut hit = None;
        for i in 0..1000 {
            match rk4_step(&cfg, y, 1e-3, i as f64 * 1e-3, floor) {
                Ok(next) => y = next,
                Err(e) => {
                    hit = Some(e);
                    break;
                }
            }
        }
        assert!(matches!(hit, Some(Error::Singularity { .. })));
        cfg.e_inlet = 0.0;
        assert!(cfg.branch().is_err());
    }

    #[test]
    fn poincare_constant_value() {
        let c = poincare_constant(1.0);
        assert!((c - 4.0 / std::f64::consts::PI.powi(2)).abs() < 1e-15);
        assert!((c - 0.405_284_7).abs() < 1e-7);
    }

    #[test]
    fn smallness_of_equilibrium() {
        let cfg = PhasePlaneConfig::critical(desk_gas(), 2.0, 1.0, 2.0).unwrap();
        let bg = integrate_background(&cfg, 11).unwrap();
        let r = smallness_report(&bg);
        assert!(r.density_bracket.holds);
        assert_eq!(r.e_abs_max, 0.0);
        assert!(r.phase_formula.contains("p'(rho) - J^2/rho^2"));
    }

    #[test]
    fn subsample_keeps_endpoints() {
        let cfg = PhasePlaneConfig::critical(desk_gas(), 2.0, 1.0, 1.5).unwrap();
        let fine = integrate_background(&cfg, 129).unwrap();
        let coarse = fine.subsample(4).unwrap();
        assert_eq!(coarse.n, 33);
        assert_eq!(coarse.rho0[32], fine.rho0[128]);
        assert_eq!(coarse.phi0[32], 0.0);
        assert!(fine.subsample(5).is_err());
    }
}
