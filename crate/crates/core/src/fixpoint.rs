//! The iteration map `Λ` and its fixed point.
//!
//! Perturbation variables are `W₁ = s - s₀`, `W₂ = β₂`, `W₃ = β₃`,
//! `W₄ = B - B₀` and `W₅ = φ - φ₀`. One application of `Λ` to `W̃`:
//!
//! 1. traces particle paths of `(1, W̃₂, W̃₃)` and carries `ε·B^in` along them (`W₄`);
//! 2. solves the coupled elliptic system for `(W₁, W₅)` with right-hand sides
//!    built from the quadratic remainders of `W̃` (with the new `W₄`);
//! 3. integrates the flow angles `(W₂, W₃)` along the same paths.
//!
//! Iteration starts from `W = 0` and stops once the sum of sup-norm changes of
//! the five fields drops below `tol_fp`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::BackgroundSolution;
use crate::boundary::BoundaryData;
use crate::elliptic::{self, AxialCoefficients, EllipticProblem, KrylovOptions, SolverMethod};
use crate::error::{Error, Result};
use crate::gas::GasModel;
use crate::grid::{diff, norms, Axis, Field3, Grid3, Slice2};
use crate::transport::{self, BetaSources, IntegratingFactor, PathBundle};
use crate::verify::FlowSolution;

/// Linearisation coefficients along the axis, one sample per background node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    pub d4: Vec<f64>,
    pub d5: Vec<f64>,
    /// `c²(ρ₀)/u₀²`
    pub k: Vec<f64>,
    /// `1/u₀²`
    pub inv_u2: Vec<f64>,
    /// `s₀'`
    pub ds0: Vec<f64>,
    /// `φ₀' = E₀`
    pub dphi0: Vec<f64>,
}

/// Evaluate the coefficient arrays on the background samples.
pub fn coefficients(bg: &BackgroundSolution) -> Result<CoefficientSet> {
    let n = bg.n;
    let gamma = bg.gas.gamma();
    let mut c = CoefficientSet {
        a1: Vec::with_capacity(n),
        a2: Vec::with_capacity(n),
        b1: Vec::with_capacity(n),
        b2: Vec::with_capacity(n),
        d1: Vec::with_capacity(n),
        d2: Vec::with_capacity(n),
        d3: Vec::with_capacity(n),
        d4: Vec::with_capacity(n),
        d5: Vec::with_capacity(n),
        k: Vec::with_capacity(n),
        inv_u2: Vec::with_capacity(n),
        ds0: Vec::with_capacity(n),
        dphi0: Vec::with_capacity(n),
    };
    for i in 0..n {
        let c2 = bg.gas.sound_speed2(bg.rho0[i]);
        let u2 = bg.u0[i] * bg.u0[i];
        let gap = c2 - u2;
        if !(gap > 1e-12 * c2) {
            return Err(Error::Singularity {
                x: bg.x1[i],
                rho: bg.rho0[i],
                sonic: bg.sonic_density(),
            });
        }
        let e = bg.e0[i];
        let ds0 = e / gap;
        let a1 = 2.0 * c2 / (u2 * u2);
        let a2 = (gamma - 1.0) * c2 / u2 + 2.0 * c2 * c2 / (u2 * u2);
        let b1 = 2.0 / (u2 * u2);
        let b2 = a1;
        let d2 = e / u2 - c2 / u2 * ds0;
        let d4 = a1 * ds0 - b1 * e;
        c.a1.push(a1);
        c.a2.push(a2);
        c.b1.push(b1);
        c.b2.push(b2);
        c.d1.push(-a2 * ds0 + b2 * e);
        c.d2.push(d2);
        c.d3.push(d2);
        c.d4.push(d4);
        c.d5.push(d4);
        c.k.push(c2 / u2);
        c.inv_u2.push(1.0 / u2);
        c.ds0.push(ds0);
        c.dphi0.push(e);
    }
    Ok(c)
}

impl CoefficientSet {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Coefficients of the elliptic operator; `∂₁(1/u₀²) = 2s₀'/u₀²` since `u₀ = J/ρ₀`.
    pub fn elliptic(&self, bg: &BackgroundSolution) -> AxialCoefficients {
        let n = self.len();
        AxialCoefficients {
            k: self.k.clone(),
            d1: self.d1.clone(),
            d2: self.d2.clone(),
            d5: self.d5.clone(),
            zeroth: (0..n).map(|i| bg.rho0[i] * self.inv_u2[i]).collect(),
            coupling: (0..n)
                .map(|i| (self.d2[i] + 2.0 * self.ds0[i]) * self.inv_u2[i])
                .collect(),
            rho0: bg.rho0.clone(),
        }
    }
}

/// The five perturbation fields.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbState {
    pub w1: Field3,
    pub w2: Field3,
    pub w3: Field3,
    pub w4: Field3,
    pub w5: Field3,
    pub eps: f64,
}

impl PerturbState {
    pub fn zeros(grid: Grid3, eps: f64) -> Self {
        let z = Field3::zeros(grid);
        Self {
            w1: z.clone(),
            w2: z.clone(),
            w3: z.clone(),
            w4: z.clone(),
            w5: z,
            eps,
        }
    }

    pub fn grid(&self) -> Grid3 {
        self.w1.grid
    }

    pub fn fields(&self) -> [&Field3; 5] {
        [&self.w1, &self.w2, &self.w3, &self.w4, &self.w5]
    }

    /// Low-order proxy norm: sum of sup norms.
    pub fn sup_norm(&self) -> f64 {
        self.fields().iter().map(|f| f.sup()).sum()
    }

    /// Proxy for `‖W‖_Ξ`: sum over the fields of sup plus sup of first differences.
    pub fn xi_norm(&self) -> f64 {
        self.fields()
            .iter()
            .map(|f| {
                let n = norms(f);
                n.sup + n.sup_grad
            })
            .sum()
    }

    /// `sup`-norm distance in the low-order proxy norm.
    pub fn distance(&self, other: &Self) -> f64 {
        self.fields()
            .iter()
            .zip(other.fields())
            .map(|(a, b)| {
                a.values
                    .iter()
                    .zip(&b.values)
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            })
            .sum()
    }

    /// `ω·self + (1-ω)·prev`
    pub fn relax(self, prev: &Self, omega: f64) -> Self {
        if omega == 1.0 {
            return self;
        }
        let mix = |a: &Field3, b: &Field3| a.zip_map(b, |x, y| omega * x + (1.0 - omega) * y);
        Self {
            w1: mix(&self.w1, &prev.w1),
            w2: mix(&self.w2, &prev.w2),
            w3: mix(&self.w3, &prev.w3),
            w4: mix(&self.w4, &prev.w4),
            w5: mix(&self.w5, &prev.w5),
            eps: self.eps,
        }
    }
}

/// Quadratic remainders of the perturbation equations.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearTerms {
    pub f1: Field3,
    pub f2: Field3,
    pub f3: Field3,
    pub f5: Field3,
}

/// `u₁²` of a perturbed state relative to the background:
/// `(u₀² + 2(W₄ + W₅ - (h(ρ₀e^{W₁}) - h(ρ₀)))) / (1 + W₂² + W₃²)`.
///
/// Measuring the Bernoulli balance from `u₀²` rather than from `B₀` makes the
/// zero state reproduce the background sample by sample.
#[inline]
pub fn axial_speed2(gas: &GasModel, rho0: f64, u0: f64, w: [f64; 5]) -> f64 {
    let rho = rho0 * w[0].exp();
    let dh = gas.enthalpy(rho) - gas.enthalpy(rho0);
    (u0 * u0 + 2.0 * (w[3] + w[4] - dh)) / (1.0 + w[1] * w[1] + w[2] * w[2])
}

/// The remainders `F₁, F₂, F₃, F₅`, with `u₁²` and `c²(ρ)` evaluated from the state.
pub fn nonlinear_terms(bg: &BackgroundSolution, coeffs: &CoefficientSet, w: &PerturbState) -> Result<NonlinearTerms> {
    let g = w.grid();
    if bg.n != g.n1 {
        return Err(Error::GridMismatch(format!(
            "background has {} samples, grid has {} axial nodes",
            bg.n, g.n1
        )));
    }
    let d = |f: &Field3, a| diff(f, a);
    let (w1x, w1y, w1z) = (d(&w.w1, Axis::X1), d(&w.w1, Axis::X2), d(&w.w1, Axis::X3));
    let (w5x, w5y, w5z) = (d(&w.w5, Axis::X1), d(&w.w5, Axis::X2), d(&w.w5, Axis::X3));
    let plane = g.plane();
    let gas = bg.gas;

    let rows: Vec<std::result::Result<[f64; 4], usize>> = (0..g.len())
        .into_par_iter()
        .map(|n| {
            let i = n / plane;
            let s = [
                w.w1.values[n],
                w.w2.values[n],
                w.w3.values[n],
                w.w4.values[n],
                w.w5.values[n],
            ];
            let u12 = axial_speed2(&gas, bg.rho0[i], bg.u0[i], s);
            if !(u12 > 0.0) || !u12.is_finite() {
                return Err(n);
            }
            let rho = bg.rho0[i] * s[0].exp();
            let c2 = gas.sound_speed2(rho);
            let inv = 1.0 / u12;
            let kk = c2 / u12;
            let dk = kk - coeffs.k[i];
            let dinv = inv - coeffs.inv_u2[i];
            let (a1, a2, b1, b2) = (coeffs.a1[i], coeffs.a2[i], coeffs.b1[i], coeffs.b2[i]);
            let (ds0, dphi0) = (coeffs.ds0[i], coeffs.dphi0[i]);
            let f1 = s[1] * w1y.values[n] + s[2] * w1z.values[n] - dk * w1x.values[n] + dinv * w5x.values[n]
                - (dk - a2 * s[0] + a1 * s[3] + a1 * s[4]) * ds0
                + (dinv - b2 * s[0] + b1 * s[3] + b1 * s[4]) * dphi0;
            let common = kk * w1x.values[n] - inv * w5x.values[n] + dk * ds0 - dinv * dphi0;
            let f2 = s[1] * common - dk * w1y.values[n] + dinv * w5y.values[n];
            let f3 = s[2] * common - dk * w1z.values[n] + dinv * w5z.values[n];
            let f5 = bg.rho0[i] * (s[0].exp_m1() - s[0]);
            Ok([f1, f2, f3, f5])
        })
        .collect();

    let mut out = [Field3::zeros(g), Field3::zeros(g), Field3::zeros(g), Field3::zeros(g)];
    for (n, r) in rows.into_iter().enumerate() {
        match r {
            Ok(v) => {
                for (o, x) in out.iter_mut().zip(v) {
                    o.values[n] = x;
                }
            }
            Err(n) => {
                let (i, j, k) = g.ijk(n);
                let s = [
                    w.w1.values[n],
                    w.w2.values[n],
                    w.w3.values[n],
                    w.w4.values[n],
                    w.w5.values[n],
                ];
                return Err(Error::Reconstruction {
                    i,
                    j,
                    k,
                    value: axial_speed2(&gas, bg.rho0[i], bg.u0[i], s),
                });
            }
        }
    }
    let [f1, f2, f3, f5] = out;
    Ok(NonlinearTerms { f1, f2, f3, f5 })
}

/// Right-hand sides and boundary data of the elliptic step.
#[derive(Debug, Clone)]
pub struct EllipticRhs {
    pub rhs1: Field3,
    pub rhs5: Field3,
    pub inlet_flux: Slice2,
    pub inlet_neumann: Slice2,
    pub exit: Slice2,
}

/// Charge perturbation `b̃` sampled on the grid.
pub fn charge_field(grid: Grid3, data: &BoundaryData) -> Field3 {
    Field3::from_fn(grid, |x1, x2, x3| data.charge.value(x1, x2, x3))
}

/// Build the elliptic data from the state `w` (the previous iterate with its
/// `W₄` already replaced by the Step 1 result) and its remainders `nl`.
///
/// `rhs₁ = ∂₁(F₁ + d₄W₄) + ∂₂F₂ + ∂₃F₃ + ∂₂(W₂X) + ∂₃(W₃X)
///        - 2(∂₂W₃∂₃W₂ - ∂₂W₂∂₃W₃) + d₂d₄W₄ + d₂F₁ + (F₅ - εb̃)/u₀²`
///
/// with `X = d₁W₁ + d₅W₅ + ∂₁W₅/u₀² + F₁ + d₄W₄`, all derivatives by [`diff`].
pub fn elliptic_rhs(
    coeffs: &CoefficientSet,
    w: &PerturbState,
    nl: &NonlinearTerms,
    data: &BoundaryData,
) -> EllipticRhs {
    let g = w.grid();
    let plane = g.plane();
    let eps = data.eps;
    let charge = charge_field(g, data);
    let axial = |n: usize| n / plane;

    let f1d4 = Field3::from_nodes(g, |n| nl.f1.values[n] + coeffs.d4[axial(n)] * w.w4.values[n]);
    let w5x = diff(&w.w5, Axis::X1);
    let x = Field3::from_nodes(g, |n| {
        let i = axial(n);
        coeffs.d1[i] * w.w1.values[n]
            + coeffs.d5[i] * w.w5.values[n]
            + coeffs.inv_u2[i] * w5x.values[n]
            + f1d4.values[n]
    });
    let w2x = w.w2.mul(&x);
    let w3x = w.w3.mul(&x);
    let parts = [
        diff(&f1d4, Axis::X1),
        diff(&nl.f2, Axis::X2),
        diff(&nl.f3, Axis::X3),
        diff(&w2x, Axis::X2),
        diff(&w3x, Axis::X3),
    ];
    let (w2y, w2z) = (diff(&w.w2, Axis::X2), diff(&w.w2, Axis::X3));
    let (w3y, w3z) = (diff(&w.w3, Axis::X2), diff(&w.w3, Axis::X3));
    let rhs1 = Field3::from_nodes(g, |n| {
        let i = axial(n);
        let mut acc: f64 = parts.iter().map(|p| p.values[n]).sum();
        acc -= 2.0 * (w3y.values[n] * w2z.values[n] - w2y.values[n] * w3z.values[n]);
        acc += coeffs.d2[i] * coeffs.d4[i] * w.w4.values[n];
        acc += coeffs.d2[i] * nl.f1.values[n];
        acc += coeffs.inv_u2[i] * (nl.f5.values[n] - eps * charge.values[n]);
        acc
    });
    let rhs5 = Field3::from_nodes(g, |n| nl.f5.values[n] - eps * charge.values[n]);

    let (n2, n3) = (g.n2, g.n3);
    let mut inlet_flux = Slice2::zeros(n2, n3);
    let mut inlet_neumann = Slice2::zeros(n2, n3);
    let mut exit = Slice2::zeros(n2, n3);
    for j in 0..n2 {
        for k in 0..n3 {
            let (y2, y3) = (j as f64 / n2 as f64, k as f64 / n3 as f64);
            let m = j * n3 + k;
            let e_in = data.efield_in.value(y2, y3);
            let lateral = data.beta2_in.d2(y2, y3) + data.beta3_in.d3(y2, y3);
            inlet_flux.values[m] = f1d4.values[m] + eps * (lateral + coeffs.inv_u2[0] * e_in);
            inlet_neumann.values[m] = eps * e_in;
            exit.values[m] = eps * data.exit_log_density.value(y2, y3);
        }
    }
    EllipticRhs {
        rhs1,
        rhs5,
        inlet_flux,
        inlet_neumann,
        exit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol_fp: f64,
    pub max_outer: usize,
    pub krylov: KrylovOptions,
    pub substeps: usize,
    /// Relaxation factor `ω ∈ (0, 1]`.
    pub relaxation: f64,
    /// Abort once `‖W^k‖_Ξ` exceeds this multiple of the first iterate's norm.
    pub trust_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_fp: 1e-11,
            max_outer: 50,
            krylov: KrylovOptions::default(),
            substeps: 2,
            relaxation: 1.0,
            trust_factor: 10.0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Precondition(what.to_string()));
        if !(self.tol_fp > 0.0) {
            return bad("tol_fp must be positive");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be positive");
        }
        if !(self.krylov.tol > 0.0) || self.krylov.max_iter == 0 {
            return bad("Krylov tolerance and iteration limit must be positive");
        }
        if self.substeps == 0 {
            return bad("substeps must be positive");
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return bad("relaxation must lie in (0, 1]");
        }
        if !(self.trust_factor > 1.0) {
            return bad("trust_factor must exceed 1");
        }
        Ok(())
    }
}

/// Everything that stays fixed across outer iterations.
#[derive(Debug, Clone)]
pub struct Scheme {
    pub grid: Grid3,
    pub bg: BackgroundSolution,
    pub coeffs: CoefficientSet,
    pub axial: AxialCoefficients,
    pub factor: IntegratingFactor,
    pub data: BoundaryData,
    pub options: SolverOptions,
}

/// Sub-solver statistics of one application of `Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub krylov_method: SolverMethod,
    pub krylov_iterations: usize,
    pub krylov_residual: f64,
}

impl Scheme {
    pub fn new(bg: BackgroundSolution, grid: Grid3, data: BoundaryData, options: SolverOptions) -> Result<Self> {
        options.validate()?;
        data.validate(&grid)?;
        if bg.n != grid.n1 {
            return Err(Error::GridMismatch(format!(
                "background has {} samples, grid has {} axial nodes",
                bg.n, grid.n1
            )));
        }
        let coeffs = coefficients(&bg)?;
        let axial = coeffs.elliptic(&bg);
        let factor = IntegratingFactor::from_background(&bg, options.substeps)?;
        Ok(Self {
            grid,
            bg,
            coeffs,
            axial,
            factor,
            data,
            options,
        })
    }

    pub fn eps(&self) -> f64 {
        self.data.eps
    }

    /// The elliptic problem of Step 2 for the previous iterate `prev` and the new `W₄`.
    pub fn elliptic_problem(&self, prev: &PerturbState, w4: &Field3) -> Result<EllipticProblem> {
        self.step2_inputs(prev, w4).map(|r| r.0)
    }

    fn step2_inputs(&self, prev: &PerturbState, w4: &Field3) -> Result<(EllipticProblem, NonlinearTerms)> {
        let mixed = PerturbState {
            w4: w4.clone(),
            ..prev.clone()
        };
        let nl = nonlinear_terms(&self.bg, &self.coeffs, &mixed)?;
        let rhs = elliptic_rhs(&self.coeffs, &mixed, &nl, &self.data);
        let problem = EllipticProblem {
            grid: self.grid,
            coeffs: self.axial.clone(),
            w2: prev.w2.clone(),
            w3: prev.w3.clone(),
            rhs1: rhs.rhs1,
            rhs5: rhs.rhs5,
            inlet_flux: rhs.inlet_flux,
            inlet_neumann: rhs.inlet_neumann,
            exit: rhs.exit,
        };
        Ok((problem, nl))
    }

    /// One application of `Λ`.
    pub fn iterate_once(&self, prev: &PerturbState) -> Result<(PerturbState, StepStats)> {
        let eps = self.eps();
        let paths = PathBundle::trace_all(&prev.w2, &prev.w3, self.options.substeps)?;
        let bern = &self.data.bernoulli_in;
        let w4 = transport::advect_inlet_along(&paths, &|a, b| bern.value(a, b), eps);

        let (problem, nl) = self.step2_inputs(prev, &w4)?;
        let sol = elliptic::solve_coupled(&problem, self.options.krylov, Some((&prev.w1, &prev.w5)))?;

        let sources = BetaSources {
            w1: &sol.w1,
            w5: &sol.w5,
            f2: &nl.f2,
            f3: &nl.f3,
        };
        let (b2, b3) = (&self.data.beta2_in, &self.data.beta3_in);
        let (w2, w3) = transport::solve_beta(
            &self.bg,
            &paths,
            &self.factor,
            &sources,
            &|a, b| b2.value(a, b),
            &|a, b| b3.value(a, b),
            eps,
        )?;
        let next = PerturbState {
            w1: sol.w1,
            w2,
            w3,
            w4,
            w5: sol.w5,
            eps,
        };
        let stats = StepStats {
            krylov_method: sol.record.method,
            krylov_iterations: sol.record.iterations,
            krylov_residual: sol.record.residual,
        };
        Ok((next.relax(prev, self.options.relaxation), stats))
    }
}

/// One application of `Λ`.
pub fn iterate_once(scheme: &Scheme, prev: &PerturbState) -> Result<PerturbState> {
    scheme.iterate_once(prev).map(|r| r.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: Vec<IterationRecord>,
    /// `‖W^{k} - W^{k-1}‖` in the low-order proxy norm.
    pub differences: Vec<f64>,
    /// `differences[k+1] / differences[k]`
    pub ratios: Vec<f64>,
    pub converged: bool,
    pub final_difference: Option<f64>,
    /// Set when the iteration was abandoned.
    pub diagnosis: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    /// `‖W^k‖_Ξ` proxy.
    pub norm: f64,
    pub difference: f64,
    pub krylov_method: SolverMethod,
    pub krylov_iterations: usize,
    pub krylov_residual: f64,
}

impl ConvergenceReport {
    fn push(&mut self, index: usize, norm: f64, difference: f64, stats: &StepStats) {
        if let Some(&last) = self.differences.last() {
            self.ratios.push(if last > 0.0 { difference / last } else { 0.0 });
        }
        self.differences.push(difference);
        self.final_difference = Some(difference);
        self.iterations.push(IterationRecord {
            index,
            norm,
            difference,
            krylov_method: stats.krylov_method,
            krylov_iterations: stats.krylov_iterations,
            krylov_residual: stats.krylov_residual,
        });
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.ratios.iter().copied().reduce(f64::max)
    }
}

/// Iterate `Λ` from `W⁰ = 0` until the low-order change drops below `tol_fp`.
pub fn solve_fixed_point(scheme: &Scheme) -> Result<(PerturbState, ConvergenceReport)> {
    let opts = scheme.options;
    let mut report = ConvergenceReport::default();
    let mut state = PerturbState::zeros(scheme.grid, scheme.eps());
    let mut first_norm: Option<f64> = None;

    for index in 1..=opts.max_outer {
        let (next, stats) = match scheme.iterate_once(&state) {
            Ok(v) => v,
            Err(e) => return Err(diverged(index, e.to_string(), report)),
        };
        let difference = next.distance(&state);
        let norm = next.xi_norm();
        report.push(index, norm, difference, &stats);
        if !norm.is_finite() {
            return Err(diverged(index, "non-finite iterate".into(), report));
        }
        let reference = *first_norm.get_or_insert(norm);
        if reference > 0.0 && norm > opts.trust_factor * reference {
            let reason = format!(
                "iterate norm {norm:e} left the trust region ({} x first iterate {reference:e})",
                opts.trust_factor
            );
            return Err(diverged(index, reason, report));
        }
        state = next;
        if difference < opts.tol_fp {
            report.converged = true;
            return Ok((state, report));
        }
    }
    let last = report.final_difference.unwrap_or(f64::NAN);
    report.diagnosis = Some(format!(
        "no convergence in {} iterations; last change {last:e}",
        opts.max_outer
    ));
    Err(Error::FixedPointNonConvergence {
        iterations: opts.max_outer,
        last,
        report: Box::new(report),
    })
}

fn diverged(iterations: usize, reason: String, mut report: ConvergenceReport) -> Error {
    report.diagnosis = Some(format!("diverging: {reason}"));
    Error::Diverged {
        iterations,
        reason,
        report: Box::new(report),
    }
}

/// Physical flow from a perturbation state:
/// `ρ = e^{s₀+W₁}`, `φ = φ₀ + W₅`, `u₁ = √(2(B + φ - h(ρ))/G)`, `u₂ = W₂u₁`, `u₃ = W₃u₁`.
pub fn reconstruct(bg: &BackgroundSolution, w: &PerturbState, data: &BoundaryData) -> Result<FlowSolution> {
    let g = w.grid();
    if bg.n != g.n1 {
        return Err(Error::GridMismatch("background and grid disagree".into()));
    }
    let plane = g.plane();
    let gas = bg.gas;
    let mut u1 = Field3::zeros(g);
    for n in 0..g.len() {
        let i = n / plane;
        let s = [
            w.w1.values[n],
            w.w2.values[n],
            w.w3.values[n],
            w.w4.values[n],
            w.w5.values[n],
        ];
        let q = axial_speed2(&gas, bg.rho0[i], bg.u0[i], s);
        if !(q > 0.0) || !q.is_finite() {
            let (i, j, k) = g.ijk(n);
            return Err(Error::Reconstruction { i, j, k, value: q });
        }
        u1.values[n] = q.sqrt();
    }
    let rho = Field3::from_nodes(g, |n| (bg.s0[n / plane] + w.w1.values[n]).exp());
    let phi = Field3::from_nodes(g, |n| bg.phi0[n / plane] + w.w5.values[n]);
    let u2 = w.w2.mul(&u1);
    let u3 = w.w3.mul(&u1);
    let charge = charge_field(g, data);
    let b = charge.map(|c| bg.b0 + w.eps * c);
    Ok(FlowSolution {
        grid: g,
        gas,
        rho,
        u1,
        u2,
        u3,
        phi,
        b,
    })
}

/// Perturbation variables of a flow relative to a background: the inverse of [`reconstruct`].
pub fn deconstruct(bg: &BackgroundSolution, f: &FlowSolution, eps: f64) -> PerturbState {
    let g = f.grid;
    let plane = g.plane();
    let gas = f.gas;
    let w1 = Field3::from_nodes(g, |n| f.rho.values[n].ln() - bg.s0[n / plane]);
    let w2 = f.u2.zip_map(&f.u1, |a, b| a / b);
    let w3 = f.u3.zip_map(&f.u1, |a, b| a / b);
    let w5 = Field3::from_nodes(g, |n| f.phi.values[n] - bg.phi0[n / plane]);
    // B - B₀ with B₀ = ½u₀² + h(ρ₀) - φ₀ taken sample by sample
    let w4 = Field3::from_nodes(g, |n| {
        let i = n / plane;
        let (u1, u2, u3) = (f.u1.values[n], f.u2.values[n], f.u3.values[n]);
        let kinetic = 0.5 * (u1 * u1 + u2 * u2 + u3 * u3) - 0.5 * bg.u0[i] * bg.u0[i];
        let dh = gas.enthalpy(f.rho.values[n]) - gas.enthalpy(bg.rho0[i]);
        kinetic + dh - (f.phi.values[n] - bg.phi0[i])
    });
    PerturbState {
        w1,
        w2,
        w3,
        w4,
        w5,
        eps,
    }
}
