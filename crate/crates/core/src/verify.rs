//! Residual checks of a reconstructed flow against the original conservation
//! laws and the identities derived from them.
//!
//! Everything here works from the physical fields alone with nodal
//! differences ([`diff`]); nothing is shared with the transport solver, so the
//! checks are an independent cross-examination of the iteration's output.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gas::GasModel;
use crate::grid::{diff, laplacian_interior, Axis, Field3, Grid3};

/// Guard for near-zero denominators (`u₁`, `B + φ - h`).
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Tunables for the identity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    /// `max B - min B < bernoulli_tol · (|B| + 1)` counts as constant.
    pub bernoulli_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { bernoulli_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub grid: Grid3,
    pub gas: GasModel,
    pub rho: Field3,
    pub u1: Field3,
    pub u2: Field3,
    pub u3: Field3,
    pub phi: Field3,
    /// Doping profile `b = b₀ + ε b̃`.
    pub b: Field3,
}

impl FlowSolution {
    pub fn mach(&self) -> Field3 {
        Field3::from_nodes(self.grid, |n| {
            let (a, b, c) = (self.u1.values[n], self.u2.values[n], self.u3.values[n]);
            (a * a + b * b + c * c).sqrt() / self.gas.sound_speed2(self.rho.values[n].max(1e-300)).sqrt()
        })
    }

    pub fn max_mach(&self) -> f64 {
        self.mach().values.iter().fold(0.0, |m, &v| m.max(v))
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn beta2(&self) -> Field3 {
        self.u2.zip_map(&self.u1, guarded_div)
    }

    pub fn beta3(&self) -> Field3 {
        self.u3.zip_map(&self.u1, guarded_div)
    }

    /// `G = 1 + β₂² + β₃²`
    pub fn g_field(&self) -> Field3 {
        self.beta2().zip_map(&self.beta3(), |a, b| 1.0 + a * a + b * b)
    }

    pub fn enthalpy(&self) -> Field3 {
        let gas = self.gas;
        self.rho.map(move |r| gas.enthalpy(r))
    }

    /// `B = ½|u|² + h(ρ) - φ`
    pub fn bernoulli(&self) -> Field3 {
        let h = self.enthalpy();
        Field3::from_nodes(self.grid, |n| {
            let (a, b, c) = (self.u1.values[n], self.u2.values[n], self.u3.values[n]);
            0.5 * (a * a + b * b + c * c) + h.values[n] - self.phi.values[n]
        })
    }

    /// `W = ∂₂β₃ - ∂₃β₂ + β₃∂₁β₂ - β₂∂₁β₃`
    pub fn w_quantity(&self) -> Field3 {
        let (b2, b3) = (self.beta2(), self.beta3());
        let (b3y, b2z) = (diff(&b3, Axis::X2), diff(&b2, Axis::X3));
        let (b2x, b3x) = (diff(&b2, Axis::X1), diff(&b3, Axis::X1));
        Field3::from_nodes(self.grid, |n| {
            b3y.values[n] - b2z.values[n] + b3.values[n] * b2x.values[n] - b2.values[n] * b3x.values[n]
        })
    }

    /// Lateral mean of `ρu₁` on each axial plane.
    pub fn mass_flux_profile(&self) -> Vec<f64> {
        let g = self.grid;
        let plane = g.plane();
        (0..g.n1)
            .map(|i| {
                let r = i * plane..(i + 1) * plane;
                let s: f64 = self.rho.values[r.clone()]
                    .iter()
                    .zip(&self.u1.values[r])
                    .map(|(a, b)| a * b)
                    .sum();
                s / plane as f64
            })
            .collect()
    }

    /// Copy with every field shifted laterally by `(dj, dk)` nodes.
    pub fn translated(&self, dj: isize, dk: isize) -> Self {
        let shift = |f: &Field3| {
            let g = f.grid;
            Field3::from_nodes(g, |n| {
                let (i, j, k) = g.ijk(n);
                f.at_wrap(i, j as isize - dj, k as isize - dk)
            })
        };
        Self {
            grid: self.grid,
            gas: self.gas,
            rho: shift(&self.rho),
            u1: shift(&self.u1),
            u2: shift(&self.u2),
            u3: shift(&self.u3),
            phi: shift(&self.phi),
            b: shift(&self.b),
        }
    }
}

#[inline]
fn guarded_div(a: f64, b: f64) -> f64 {
    if b.abs() < DENOMINATOR_FLOOR {
        a / DENOMINATOR_FLOOR.copysign(b)
    } else {
        a / b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorm {
    pub sup: f64,
    pub l2: f64,
}

impl ResidualNorm {
    /// Norms over all nodes, or only interior axial planes.
    pub fn of(f: &Field3, interior_only: bool) -> Self {
        let g = f.grid;
        let plane = g.plane();
        let range = if interior_only {
            plane..(g.n1 - 1) * plane
        } else {
            0..g.len()
        };
        let vals = &f.values[range];
        let sup = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let l2 = (vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64).sqrt();
        Self { sup, l2 }
    }
}

/// Named residual norms plus scalar side information.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub spacing: [f64; 3],
    pub residuals: BTreeMap<String, ResidualNorm>,
    pub scalars: BTreeMap<String, f64>,
    /// Whether an identity did not apply (e.g. Beltrami check for varying `B`).
    pub not_applicable: Vec<String>,
    /// Number of guarded near-zero denominators.
    pub clamps: usize,
}

impl ResidualReport {
    fn new(g: Grid3) -> Self {
        Self {
            spacing: [g.h1(), g.h2(), g.h3()],
            ..Default::default()
        }
    }

    pub fn merge(&mut self, other: ResidualReport) {
        self.residuals.extend(other.residuals);
        self.scalars.extend(other.scalars);
        self.not_applicable.extend(other.not_applicable);
        self.clamps += other.clamps;
    }

    pub fn sup(&self, name: &str) -> Option<f64> {
        self.residuals.get(name).map(|r| r.sup)
    }
}

fn grad(f: &Field3) -> [Field3; 3] {
    [diff(f, Axis::X1), diff(f, Axis::X2), diff(f, Axis::X3)]
}

/// Residuals of the five steady Euler–Poisson equations in conservation form:
/// mass, three momentum components (`∇·(ρu uᵢ) + ∂ᵢp - ρ∂ᵢφ`) and
/// `Δφ - (ρ - b)` at interior axial planes.
pub fn euler_poisson_residual(f: &FlowSolution) -> ResidualReport {
    let g = f.grid;
    let mut report = ResidualReport::new(g);
    let m = [f.rho.mul(&f.u1), f.rho.mul(&f.u2), f.rho.mul(&f.u3)];
    let dm = [diff(&m[0], Axis::X1), diff(&m[1], Axis::X2), diff(&m[2], Axis::X3)];
    let mass = Field3::from_nodes(g, |n| dm[0].values[n] + dm[1].values[n] + dm[2].values[n]);
    report.residuals.insert("mass".into(), ResidualNorm::of(&mass, false));

    let gas = f.gas;
    let p = f.rho.map(move |r| gas.pressure(r));
    let dp = grad(&p);
    let dphi = grad(&f.phi);
    let u = [&f.u1, &f.u2, &f.u3];
    for c in 0..3 {
        let flux = [m[0].mul(u[c]), m[1].mul(u[c]), m[2].mul(u[c])];
        let d = [
            diff(&flux[0], Axis::X1),
            diff(&flux[1], Axis::X2),
            diff(&flux[2], Axis::X3),
        ];
        let r = Field3::from_nodes(g, |n| {
            d[0].values[n] + d[1].values[n] + d[2].values[n] + dp[c].values[n] - f.rho.values[n] * dphi[c].values[n]
        });
        report
            .residuals
            .insert(format!("momentum{}", c + 1), ResidualNorm::of(&r, false));
    }

    let lap = laplacian_interior(&f.phi);
    let poisson = Field3::from_nodes(g, |n| lap.values[n] - (f.rho.values[n] - f.b.values[n]));
    report
        .residuals
        .insert("poisson".into(), ResidualNorm::of(&poisson, true));

    let flux = f.mass_flux_profile();
    let (lo, hi) = flux
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    report.scalars.insert("mass_flux_variation".into(), hi - lo);
    report
}

/// Nodal `u·∇B` and its norms relative to `sup|u|·sup|∇B|` (absolute when
/// `∇B` vanishes to rounding).
pub fn bernoulli_residual(f: &FlowSolution) -> (Field3, ResidualReport) {
    let g = f.grid;
    let b = f.bernoulli();
    let db = grad(&b);
    let r = Field3::from_nodes(g, |n| {
        f.u1.values[n] * db[0].values[n] + f.u2.values[n] * db[1].values[n] + f.u3.values[n] * db[2].values[n]
    });
    let speed = Field3::from_nodes(g, |n| {
        let (a, b, c) = (f.u1.values[n], f.u2.values[n], f.u3.values[n]);
        (a * a + b * b + c * c).sqrt()
    })
    .sup();
    let grad_b = Field3::from_nodes(g, |n| {
        (db[0].values[n].powi(2) + db[1].values[n].powi(2) + db[2].values[n].powi(2)).sqrt()
    })
    .sup();
    let abs = ResidualNorm::of(&r, false);
    let scale = speed * grad_b;
    let rel = if grad_b > 1e-12 * (1.0 + b.sup()) && scale > 0.0 {
        ResidualNorm {
            sup: abs.sup / scale,
            l2: abs.l2 / scale,
        }
    } else {
        abs
    };
    let mut report = ResidualReport::new(g);
    report.residuals.insert("bernoulli".into(), rel);
    report.residuals.insert("bernoulli_absolute".into(), abs);
    report.scalars.insert("sup_grad_bernoulli".into(), grad_b);
    (r, report)
}

/// `max B - min B` below `tol · (|B| + 1)`.
pub fn bernoulli_is_constant(f: &FlowSolution, tol: f64) -> bool {
    let b = f.bernoulli();
    let (lo, hi) = b
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, c), &v| (a.min(v), c.max(v)));
    hi - lo < tol * (b.values[0].abs() + 1.0)
}

/// `D = ∂₁ + β₂∂₂ + β₃∂₃` applied nodally.
fn material(f: &Field3, b2: &Field3, b3: &Field3) -> Field3 {
    let d = grad(f);
    Field3::from_nodes(f.grid, |n| {
        d[0].values[n] + b2.values[n] * d[1].values[n] + b3.values[n] * d[2].values[n]
    })
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// The conserved quantity `W` and the residual of its transport law
/// `D(W/(ρG)) + (1,β₂,β₃)·[(c²/ρ ∇ρ - ∇φ) × ∇B] / (2ρ(B+φ-h)²) = 0`.
///
/// The source term is also evaluated with the grouping `∇(φ - h)`, which
/// equals minus the first; their sum is reported as `grouping_mismatch`.
/// For constant `B` the headline `vorticity` residual is `D(W/(ρG))` alone.
pub fn vorticity_quantity(f: &FlowSolution, opts: &VerifyOptions) -> (Field3, ResidualReport) {
    let g = f.grid;
    let mut report = ResidualReport::new(g);
    let (b2, b3) = (f.beta2(), f.beta3());
    let gg = f.g_field();
    let w = f.w_quantity();
    let q = Field3::from_nodes(g, |n| w.values[n] / (f.rho.values[n] * gg.values[n]));
    let transport = material(&q, &b2, &b3);

    let b = f.bernoulli();
    let h = f.enthalpy();
    let gas = f.gas;
    let (drho, dphi, db) = (grad(&f.rho), grad(&f.phi), grad(&b));
    let phi_minus_h = f.phi.sub(&h);
    let dpmh = grad(&phi_minus_h);
    let mut clamps = 0usize;
    let terms: Vec<(f64, f64)> = (0..g.len())
        .into_par_iter()
        .map(|n| {
            let rho = f.rho.values[n];
            let y = b.values[n] + f.phi.values[n] - h.values[n];
            let c2r = gas.sound_speed2(rho) / rho;
            let at = |v: &[Field3; 3]| [v[0].values[n], v[1].values[n], v[2].values[n]];
            let (gr, gp, gb, gm) = (at(&drho), at(&dphi), at(&db), at(&dpmh));
            let first = [c2r * gr[0] - gp[0], c2r * gr[1] - gp[1], c2r * gr[2] - gp[2]];
            let dir = [1.0, b2.values[n], b3.values[n]];
            let c1 = cross(first, gb);
            let c2 = cross(gm, gb);
            let denom = 2.0 * rho * y * y;
            let denom = if denom.abs() < DENOMINATOR_FLOOR {
                DENOMINATOR_FLOOR
            } else {
                denom
            };
            let dot = |c: [f64; 3]| (dir[0] * c[0] + dir[1] * c[1] + dir[2] * c[2]) / denom;
            (dot(c1), dot(c2))
        })
        .collect();
    for n in 0..g.len() {
        let y = b.values[n] + f.phi.values[n] - h.values[n];
        if (2.0 * f.rho.values[n] * y * y).abs() < DENOMINATOR_FLOOR {
            clamps += 1;
        }
    }
    let source = Field3 {
        grid: g,
        values: terms.iter().map(|t| t.0).collect(),
    };
    let source_alt = Field3 {
        grid: g,
        values: terms.iter().map(|t| t.1).collect(),
    };
    let full = transport.add(&source);
    let mismatch = source.add(&source_alt);

    let constant_b = bernoulli_is_constant(f, opts.bernoulli_tol);
    let headline = if constant_b { &transport } else { &full };
    report
        .residuals
        .insert("vorticity".into(), ResidualNorm::of(headline, false));
    report
        .residuals
        .insert("vorticity_transport".into(), ResidualNorm::of(&transport, false));
    report
        .residuals
        .insert("vorticity_source".into(), ResidualNorm::of(&source, false));
    report
        .residuals
        .insert("vorticity_full".into(), ResidualNorm::of(&full, false));
    report.scalars.insert("grouping_mismatch".into(), mismatch.sup());
    report.scalars.insert("sup_w_over_rho_g".into(), q.sup());
    report
        .scalars
        .insert("constant_bernoulli".into(), if constant_b { 1.0 } else { 0.0 });
    report.clamps = clamps;
    (w, report)
}

/// `μ = W/G` and the alignment residual `sup|curl u - μu| / sup|curl u|`
/// (absolute when the curl vanishes). `None` unless `B` is constant.
pub fn beltrami_mu(f: &FlowSolution, opts: &VerifyOptions) -> Option<(Field3, ResidualReport)> {
    let g = f.grid;
    let mut report = ResidualReport::new(g);
    if !bernoulli_is_constant(f, opts.bernoulli_tol) {
        return None;
    }
    let w = f.w_quantity();
    let gg = f.g_field();
    let mu = w.zip_map(&gg, |a, b| a / b);
    let (d1, d2, d3) = (grad(&f.u1), grad(&f.u2), grad(&f.u3));
    let curl = |n: usize| {
        [
            d3[1].values[n] - d2[2].values[n],
            d1[2].values[n] - d3[0].values[n],
            d2[0].values[n] - d1[1].values[n],
        ]
    };
    let mut sup_curl = 0.0f64;
    let r = Field3::from_nodes(g, |n| {
        let c = curl(n);
        let m = mu.values[n];
        let d = [
            c[0] - m * f.u1.values[n],
            c[1] - m * f.u2.values[n],
            c[2] - m * f.u3.values[n],
        ];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    });
    for n in 0..g.len() {
        let c = curl(n);
        sup_curl = sup_curl.max((c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt());
    }
    let abs = ResidualNorm::of(&r, false);
    let rel = if sup_curl > 1e-10 {
        ResidualNorm {
            sup: abs.sup / sup_curl,
            l2: abs.l2 / sup_curl,
        }
    } else {
        abs
    };
    report.residuals.insert("beltrami".into(), rel);
    report.scalars.insert("sup_curl".into(), sup_curl);
    Some((mu, report))
}

/// Residual of `DG - G²∂₁(h-φ)/Y + G·D(h-φ)/Y = 0` with `Y = B + φ - h`, for a
/// supplied `G` field.
pub fn riccati_residual_with(f: &FlowSolution, gg: &Field3) -> ResidualReport {
    let g = f.grid;
    let (b2, b3) = (f.beta2(), f.beta3());
    let h = f.enthalpy();
    let b = f.bernoulli();
    let hmp = h.sub(&f.phi);
    let dg = material(gg, &b2, &b3);
    let dh = material(&hmp, &b2, &b3);
    let dh1 = diff(&hmp, Axis::X1);
    let mut clamps = 0;
    let mut min_y = f64::INFINITY;
    for n in 0..g.len() {
        let y = b.values[n] + f.phi.values[n] - h.values[n];
        min_y = min_y.min(y);
        if y.abs() < DENOMINATOR_FLOOR {
            clamps += 1;
        }
    }
    let r = Field3::from_nodes(g, |n| {
        let y = b.values[n] + f.phi.values[n] - h.values[n];
        let y = if y.abs() < DENOMINATOR_FLOOR {
            DENOMINATOR_FLOOR
        } else {
            y
        };
        let gv = gg.values[n];
        dg.values[n] - gv * gv * dh1.values[n] / y + gv * dh.values[n] / y
    });
    let mut report = ResidualReport::new(g);
    report.residuals.insert("riccati".into(), ResidualNorm::of(&r, false));
    report.scalars.insert("min_b_plus_phi_minus_h".into(), min_y);
    report.clamps = clamps;
    report
}

pub fn riccati_residual(f: &FlowSolution) -> ResidualReport {
    riccati_residual_with(f, &f.g_field())
}

/// All checks in one report.
pub fn full_report(f: &FlowSolution, opts: &VerifyOptions) -> ResidualReport {
    let mut report = euler_poisson_residual(f);
    report.merge(bernoulli_residual(f).1);
    report.merge(vorticity_quantity(f, opts).1);
    match beltrami_mu(f, opts) {
        Some((_, r)) => report.merge(r),
        None => report.not_applicable.push("beltrami".into()),
    }
    report.merge(riccati_residual(f));
    report.scalars.insert("max_mach".into(), f.max_mach());
    report.scalars.insert("min_rho".into(), f.min_rho());
    report
}
