//! Test-side oracles, written without reference to the library internals.
#![allow(dead_code)]

pub mod manufactured;

use epflow::background::{integrate_resolved, BackgroundSolution, PhasePlaneConfig};
use epflow::boundary::BoundaryData;
use epflow::fixpoint::{reconstruct, solve_fixed_point, Scheme, SolverOptions};
use epflow::gas::GasModel;
use epflow::grid::Grid3;
use epflow::verify::FlowSolution;

pub const GAMMA: f64 = 2.0;
pub const B0: f64 = 2.0;
pub const J: f64 = 1.0;
pub const RHO_IN: f64 = 1.5;

pub fn desk_config() -> PhasePlaneConfig {
    PhasePlaneConfig::critical(GasModel::new(GAMMA).unwrap(), B0, J, RHO_IN).unwrap()
}

pub fn desk_background(n: usize) -> BackgroundSolution {
    integrate_resolved(&desk_config(), n, 1000).unwrap()
}

/// Converged flow on the `(n, n-1, n-1)` grid over the desk background.
pub fn converged_flow(n: usize, data: BoundaryData) -> FlowSolution {
    let bg = desk_background(n);
    let grid = Grid3::new(n, n - 1, n - 1).unwrap();
    let scheme = Scheme::new(bg, grid, data, SolverOptions::default()).unwrap();
    let (w, report) = solve_fixed_point(&scheme).unwrap();
    assert!(report.converged);
    reconstruct(&scheme.bg, &w, &scheme.data).unwrap()
}

/// Desk data with the inlet Bernoulli perturbation removed.
pub fn constant_bernoulli_data(eps: f64) -> BoundaryData {
    let mut data = BoundaryData::desk(eps);
    data.bernoulli_in.modes.clear();
    data
}

/// Right-hand side of `ρ' = ρE/(c² - u²)`, `E' = ρ - b₀` for the γ = 2 gas
/// with `u = J/ρ`.
fn rhs(y: [f64; 2]) -> [f64; 2] {
    let (rho, e) = (y[0], y[1]);
    let u = J / rho;
    [rho * e / (rho - u * u), rho - B0]
}

/// `(ρ₀, E₀)` at `x` by classical RK4 from the inlet with step at most `h`.
pub fn ode_state(x: f64, e_in: f64, h: f64) -> [f64; 2] {
    let mut y = [RHO_IN, e_in];
    if x <= 0.0 {
        return y;
    }
    let n = (x / h).ceil() as usize;
    let dt = x / n as f64;
    for _ in 0..n {
        let k1 = rhs(y);
        let k2 = rhs([y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]]);
        let k3 = rhs([y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]]);
        let k4 = rhs([y[0] + dt * k3[0], y[1] + dt * k3[1]]);
        for c in 0..2 {
            y[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
    }
    y
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Lateral nodes of a coarse grid embedded in a finer one.
pub fn stride(coarse: usize, fine: usize) -> usize {
    assert_eq!(fine % coarse, 0);
    fine / coarse
}
