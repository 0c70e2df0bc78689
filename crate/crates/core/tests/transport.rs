mod common;

use std::f64::consts::TAU;

use epflow::grid::{Field3, Grid3};
use epflow::transport::{
    advect_inlet, solve_beta, trace, trace_fn, trace_forward, BetaSources, IntegratingFactor, PathBundle,
};
use proptest::prelude::*;

fn inlet2(a: f64, b: f64) -> f64 {
    (TAU * a).sin() * (TAU * b).cos() + 0.3 * (TAU * a).sin()
}

fn inlet3(a: f64, b: f64) -> f64 {
    (TAU * a).cos() * (TAU * b).sin()
}

#[test]
fn exit_angle_carries_the_integrating_factor() {
    let cfg = common::desk_config();
    assert!((cfg.e_inlet - 0.4409586).abs() < 1e-7, "{}", cfg.e_inlet);
    let n1 = 17;
    let bg = common::desk_background(n1);
    let g = Grid3::new(n1, 8, 8).unwrap();
    let zero = Field3::zeros(g);
    let paths = PathBundle::trace_all(&zero, &zero, 2).unwrap();
    let factor = IntegratingFactor::from_background(&bg, 2).unwrap();
    let sources = BetaSources {
        w1: &zero,
        w5: &zero,
        f2: &zero,
        f3: &zero,
    };
    let eps = 1e-3;
    let (w2, w3) = solve_beta(&bg, &paths, &factor, &sources, &inlet2, &inlet3, eps).unwrap();

    let e_in = cfg.e_inlet;
    let d2 = |x: f64| {
        let [rho, e] = common::ode_state(x, e_in, 1e-4);
        let u = common::J / rho;
        -e / (rho - u * u)
    };
    let integral = common::simpson(&d2, 0.0, 1.0, 1e-11);
    let gain = (-integral).exp();
    for j in 0..g.n2 {
        for k in 0..g.n3 {
            let [_, y2, y3] = g.coords(n1 - 1, j, k);
            let want2 = eps * gain * inlet2(y2, y3);
            let want3 = eps * gain * inlet3(y2, y3);
            assert!((w2.at(n1 - 1, j, k) - want2).abs() < 1e-8 * eps, "({j},{k})");
            assert!((w3.at(n1 - 1, j, k) - want3).abs() < 1e-8 * eps, "({j},{k})");
        }
    }
}

fn swirl_at(x1: f64, x2: f64, x3: f64) -> [f64; 2] {
    [
        0.04 * (1.0 + x1) * (TAU * x3).sin() + 0.02 * (TAU * x2).cos(),
        -0.03 * (TAU * x2).sin() * (1.0 - 0.5 * x1),
    ]
}

fn swirl(g: Grid3) -> (Field3, Field3) {
    (
        Field3::from_fn(g, |a, b, c| swirl_at(a, b, c)[0]),
        Field3::from_fn(g, |a, b, c| swirl_at(a, b, c)[1]),
    )
}

#[test]
fn footprints_invert_under_forward_tracing() {
    let g = Grid3::new(17, 16, 16).unwrap();
    let (w2, w3) = swirl(g);
    for &(i, j, k) in &[(16, 3, 5), (8, 0, 15), (12, 9, 2), (3, 7, 7)] {
        let origin = g.coords(i, j, k);
        let path = trace(&w2, &w3, origin, 4).unwrap();
        let back = trace_forward(&w2, &w3, path.footprint(), origin[0], 4).unwrap();
        let wrap = |d: f64| d - d.round();
        assert!(wrap(back[0] - origin[1]).abs() < 1e-10, "{back:?} vs {origin:?}");
        assert!(wrap(back[1] - origin[2]).abs() < 1e-10, "{back:?} vs {origin:?}");
    }
}

const EPS: f64 = 1e-3;

// Smooth inputs of the flow-angle solve with their lateral derivatives.
fn w1_at(x: [f64; 3]) -> (f64, f64, f64) {
    let a = EPS * (1.0 - x[0]);
    let (c2, s2, c3, s3) = (
        (TAU * x[1]).cos(),
        (TAU * x[1]).sin(),
        (TAU * x[2]).cos(),
        (TAU * x[2]).sin(),
    );
    (a * c2 * c3, -a * TAU * s2 * c3, -a * TAU * c2 * s3)
}

fn w5_at(x: [f64; 3]) -> (f64, f64, f64) {
    let a = EPS * x[0];
    (a * (TAU * x[2]).sin(), 0.0, a * TAU * (TAU * x[2]).cos())
}

fn f2_at(x: [f64; 3]) -> f64 {
    1e-5 * (TAU * x[1]).sin() * x[0]
}

fn f3_at(x: [f64; 3]) -> f64 {
    1e-5 * (TAU * (x[1] + x[2])).cos()
}

/// Exact flow angles at `origin`: trace the analytic path back to the inlet,
/// then integrate `(ρ₀, E₀, x₂, x₃, I₂, I₃)` forward with `I' = S/ρ₀`.
///
/// For γ = 2, `c²/u₀² = ρ₀³`, `1/u₀² = ρ₀²` and the integrating factor
/// between `τ` and `x₁` is `ρ₀(x₁)/ρ₀(τ)`.
fn exact_angles(origin: [f64; 3], e_in: f64) -> [f64; 2] {
    let steps = 2000usize.max((origin[0] * 4000.0) as usize);
    let vel = |t: f64, y: [f64; 2]| swirl_at(t, y[0], y[1]);
    let mut y = [origin[1], origin[2]];
    let dt = origin[0] / steps as f64;
    for s in 0..steps {
        let t = origin[0] - s as f64 * dt;
        let k1 = vel(t, y);
        let k2 = vel(t - 0.5 * dt, [y[0] - 0.5 * dt * k1[0], y[1] - 0.5 * dt * k1[1]]);
        let k3 = vel(t - 0.5 * dt, [y[0] - 0.5 * dt * k2[0], y[1] - 0.5 * dt * k2[1]]);
        let k4 = vel(t - dt, [y[0] - dt * k3[0], y[1] - dt * k3[1]]);
        for c in 0..2 {
            y[c] -= dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
    }
    let foot = y;
    let rhs = |t: f64, z: [f64; 6]| -> [f64; 6] {
        let (rho, e) = (z[0], z[1]);
        let u = common::J / rho;
        let v = swirl_at(t, z[2], z[3]);
        let x = [t, z[2], z[3]];
        let (k, inv) = (rho.powi(3), rho * rho);
        let (_, w1y, w1z) = w1_at(x);
        let (_, w5y, w5z) = w5_at(x);
        let s2 = f2_at(x) - k * w1y + inv * w5y;
        let s3 = f3_at(x) - k * w1z + inv * w5z;
        [
            rho * e / (rho - u * u),
            rho - common::B0,
            v[0],
            v[1],
            s2 / rho,
            s3 / rho,
        ]
    };
    let mut z = [common::RHO_IN, e_in, foot[0], foot[1], 0.0, 0.0];
    for s in 0..steps {
        let t = s as f64 * dt;
        let k1 = rhs(t, z);
        let mut m = z;
        for c in 0..6 {
            m[c] = z[c] + 0.5 * dt * k1[c];
        }
        let k2 = rhs(t + 0.5 * dt, m);
        for c in 0..6 {
            m[c] = z[c] + 0.5 * dt * k2[c];
        }
        let k3 = rhs(t + 0.5 * dt, m);
        for c in 0..6 {
            m[c] = z[c] + dt * k3[c];
        }
        let k4 = rhs(t + dt, m);
        for c in 0..6 {
            z[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
    }
    let rho = z[0];
    [
        rho * (EPS * inlet2(foot[0], foot[1]) / common::RHO_IN + z[4]),
        rho * (EPS * inlet3(foot[0], foot[1]) / common::RHO_IN + z[5]),
    ]
}

/// Exit-plane RMS errors of the discrete flow-angle solve on grid `n`
/// against the exact angles. Pointwise maxima carry the kink-crossing noise of
/// trilinear interpolation along paths, so the mean-square error is the
/// stable convergence measure here.
fn beta_errors(n: usize, e_in: f64) -> [f64; 2] {
    let bg = common::desk_background(n);
    let g = Grid3::new(n, n - 1, n - 1).unwrap();
    let (tw2, tw3) = swirl(g);
    let substeps = 2;
    let paths = PathBundle::trace_all(&tw2, &tw3, substeps).unwrap();
    let factor = IntegratingFactor::from_background(&bg, substeps).unwrap();
    let w1 = Field3::from_fn(g, |a, b, c| w1_at([a, b, c]).0);
    let w5 = Field3::from_fn(g, |a, b, c| w5_at([a, b, c]).0);
    let f2 = Field3::from_fn(g, |a, b, c| f2_at([a, b, c]));
    let f3 = Field3::from_fn(g, |a, b, c| f3_at([a, b, c]));
    let sources = BetaSources {
        w1: &w1,
        w5: &w5,
        f2: &f2,
        f3: &f3,
    };
    let (b2, b3) = solve_beta(&bg, &paths, &factor, &sources, &inlet2, &inlet3, EPS).unwrap();
    let mut err = [0.0f64; 2];
    let i = n - 1;
    for j in 0..g.n2 {
        for k in 0..g.n3 {
            let want = exact_angles(g.coords(i, j, k), e_in);
            err[0] += (b2.at(i, j, k) - want[0]).powi(2);
            err[1] += (b3.at(i, j, k) - want[1]).powi(2);
        }
    }
    let count = (g.n2 * g.n3) as f64;
    err.map(|e| (e / count).sqrt())
}

#[test]
fn flow_angle_solve_is_second_order() {
    let e_in = common::desk_config().e_inlet;
    let coarse = beta_errors(33, e_in);
    let fine = beta_errors(65, e_in);
    for c in 0..2 {
        let ratio = coarse[c] / fine[c];
        assert!(
            ratio >= 3.5,
            "W{} ratio {ratio} ({:e} -> {:e})",
            c + 2,
            coarse[c],
            fine[c]
        );
    }
}

/// Exit-plane sup error of the Bernoulli transport on grid `n` against exact paths.
fn advection_error(n: usize) -> f64 {
    let g = Grid3::new(n, n - 1, n - 1).unwrap();
    let (w2, w3) = swirl(g);
    let data = |a: f64, b: f64| (TAU * a).cos() + 0.5 * (TAU * b).cos();
    let w4 = advect_inlet(&w2, &w3, &data, 1.0, 2).unwrap();
    let mut err = 0.0f64;
    for j in 0..g.n2 {
        for k in 0..g.n3 {
            let origin = g.coords(n - 1, j, k);
            let f = trace_fn(swirl_at, origin, 1e-4).footprint();
            err = err.max((w4.at(n - 1, j, k) - data(f[0], f[1])).abs());
        }
    }
    err
}

#[test]
fn bernoulli_transport_is_second_order() {
    let (coarse, fine) = (advection_error(33), advection_error(65));
    let ratio = coarse / fine;
    assert!(ratio >= 3.5, "ratio {ratio} ({coarse:e} -> {fine:e})");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constant_drift_shifts_inlet_data(a in -0.3f64..0.3, b in -0.3f64..0.3) {
        let g = Grid3::new(9, 8, 8).unwrap();
        let w2 = Field3::constant(g, a);
        let w3 = Field3::constant(g, b);
        let data = |y2: f64, y3: f64| (TAU * y2).sin() * (TAU * y3).cos();
        let w4 = advect_inlet(&w2, &w3, &data, 0.5, 2).unwrap();
        for n in 0..g.len() {
            let (i, j, k) = g.ijk(n);
            let [x1, x2, x3] = g.coords(i, j, k);
            let want = 0.5 * data(x2 - a * x1, x3 - b * x1);
            prop_assert!((w4.values[n] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_inputs_give_zero_angles(n in 5usize..10) {
        let bg = common::desk_background(n);
        let g = Grid3::new(n, 4, 4).unwrap();
        let zero = Field3::zeros(g);
        let paths = PathBundle::trace_all(&zero, &zero, 2).unwrap();
        let factor = IntegratingFactor::from_background(&bg, 2).unwrap();
        let sources = BetaSources { w1: &zero, w5: &zero, f2: &zero, f3: &zero };
        let (w2, w3) = solve_beta(&bg, &paths, &factor, &sources, &inlet2, &inlet3, 0.0).unwrap();
        prop_assert_eq!(w2.sup(), 0.0);
        prop_assert_eq!(w3.sup(), 0.0);
    }
}
