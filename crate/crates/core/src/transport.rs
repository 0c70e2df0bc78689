//! Particle-path tracing and the two hyperbolic solves of the iteration:
//! pure advection of inlet data and the damped, sourced transport of the flow
//! angles.
//!
//! Paths are integral curves of `(1, W̃₂, W̃₃)` parametrised by the axial
//! coordinate `τ`. Each is traced backward from a node to the inlet with
//! classical RK4, at a step aligned with the axial grid so every sample lies
//! on a shared set of axial stations.

use rayon::prelude::*;

use crate::background::BackgroundSolution;
use crate::error::{Error, Result};
use crate::grid::{diff, sample, Axis, Field3, Grid3};

/// A traced particle path, samples ordered from `τ = x₁` down to `τ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharPath {
    pub origin: [f64; 3],
    /// `(τ, x̃₂(τ), x̃₃(τ))`
    pub samples: Vec<[f64; 3]>,
}

impl CharPath {
    /// Lateral position at `τ = 0`.
    pub fn footprint(&self) -> [f64; 2] {
        let last = self.samples.last().expect("path has at least one sample");
        [last[1], last[2]]
    }
}

#[inline]
fn wrap(v: f64) -> f64 {
    let w = v.rem_euclid(1.0);
    // rem_euclid can return 1.0 for tiny negative inputs
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

#[inline]
fn rk4<F>(vel: &F, tau: f64, p: [f64; 2], dt: f64) -> [f64; 2]
where
    F: Fn(f64, f64, f64) -> [f64; 2],
{
    let k1 = vel(tau, p[0], p[1]);
    let k2 = vel(tau + 0.5 * dt, p[0] + 0.5 * dt * k1[0], p[1] + 0.5 * dt * k1[1]);
    let k3 = vel(tau + 0.5 * dt, p[0] + 0.5 * dt * k2[0], p[1] + 0.5 * dt * k2[1]);
    let k4 = vel(tau + dt, p[0] + dt * k3[0], p[1] + dt * k3[1]);
    [
        wrap(p[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])),
        wrap(p[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])),
    ]
}

fn steps_for(x1: f64, max_step: f64) -> usize {
    ((x1 / max_step) - 1e-9).ceil().max(0.0) as usize
}

/// Backward trace through an arbitrary lateral velocity `vel(τ, x₂, x₃)`.
pub fn trace_fn<F>(vel: F, origin: [f64; 3], max_step: f64) -> CharPath
where
    F: Fn(f64, f64, f64) -> [f64; 2],
{
    let x1 = origin[0].max(0.0);
    let steps = steps_for(x1, max_step);
    let mut samples = Vec::with_capacity(steps + 1);
    let mut p = [wrap(origin[1]), wrap(origin[2])];
    samples.push([x1, p[0], p[1]]);
    if steps > 0 {
        let dt = x1 / steps as f64;
        for m in 0..steps {
            let tau = x1 - m as f64 * dt;
            p = rk4(&vel, tau, p, -dt);
            let next = if m + 1 == steps { 0.0 } else { tau - dt };
            samples.push([next, p[0], p[1]]);
        }
    }
    CharPath { origin, samples }
}

/// Forward trace from `(0, start)` to `τ = x1_end`; returns the lateral end point.
pub fn trace_forward_fn<F>(vel: F, start: [f64; 2], x1_end: f64, max_step: f64) -> [f64; 2]
where
    F: Fn(f64, f64, f64) -> [f64; 2],
{
    let steps = steps_for(x1_end, max_step);
    let mut p = [wrap(start[0]), wrap(start[1])];
    if steps > 0 {
        let dt = x1_end / steps as f64;
        for m in 0..steps {
            p = rk4(&vel, m as f64 * dt, p, dt);
        }
    }
    p
}

fn field_velocity<'a>(w2: &'a Field3, w3: &'a Field3) -> impl Fn(f64, f64, f64) -> [f64; 2] + 'a {
    move |tau, a, b| [sample(w2, [tau, a, b]), sample(w3, [tau, a, b])]
}

fn check_pair(w2: &Field3, w3: &Field3) -> Result<()> {
    w3.check_grid(&w2.grid)
}

/// Backward RK4 trace from `origin` with step at most `h₁ / substeps_per_cell`.
pub fn trace(w2: &Field3, w3: &Field3, origin: [f64; 3], substeps_per_cell: usize) -> Result<CharPath> {
    check_pair(w2, w3)?;
    if substeps_per_cell == 0 {
        return Err(Error::Precondition("substeps_per_cell must be positive".into()));
    }
    if !(0.0..=1.0).contains(&origin[0]) {
        return Err(Error::Domain {
            what: "path origin axial coordinate",
            value: origin[0],
        });
    }
    let step = w2.grid.h1() / substeps_per_cell as f64;
    Ok(trace_fn(field_velocity(w2, w3), origin, step))
}

/// Forward counterpart of [`trace`], used to check that footprints invert.
pub fn trace_forward(
    w2: &Field3,
    w3: &Field3,
    start: [f64; 2],
    x1_end: f64,
    substeps_per_cell: usize,
) -> Result<[f64; 2]> {
    check_pair(w2, w3)?;
    let step = w2.grid.h1() / substeps_per_cell.max(1) as f64;
    Ok(trace_forward_fn(field_velocity(w2, w3), start, x1_end, step))
}

/// Paths from every grid node, traced once per outer iteration and shared by
/// the Bernoulli and flow-angle solves.
///
/// The path from a node on axial plane `i` has `i·substeps + 1` lateral
/// samples; sample `m` sits at `τ = x₁ - m·h₁/substeps`.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: Grid3,
    pub substeps: usize,
    offsets: Vec<usize>,
    points: Vec<[f64; 2]>,
}

impl PathBundle {
    pub fn trace_all(w2: &Field3, w3: &Field3, substeps: usize) -> Result<Self> {
        check_pair(w2, w3)?;
        if substeps == 0 {
            return Err(Error::Precondition("substeps_per_cell must be positive".into()));
        }
        let g = w2.grid;
        let mut offsets = Vec::with_capacity(g.len() + 1);
        let mut total = 0;
        for idx in 0..g.len() {
            offsets.push(total);
            let (i, _, _) = g.ijk(idx);
            total += i * substeps + 1;
        }
        offsets.push(total);

        let mut points = vec![[0.0; 2]; total];
        let dt = g.h1() / substeps as f64;
        let vel = field_velocity(w2, w3);
        // split the flat buffer into per-node slices for parallel filling
        let mut slices = Vec::with_capacity(g.len());
        let mut rest = points.as_mut_slice();
        for idx in 0..g.len() {
            let (head, tail) = rest.split_at_mut(offsets[idx + 1] - offsets[idx]);
            slices.push(head);
            rest = tail;
        }
        slices.into_par_iter().enumerate().for_each(|(idx, out)| {
            let (i, j, k) = g.ijk(idx);
            let x = g.coords(i, j, k);
            let mut p = [x[1], x[2]];
            out[0] = p;
            for m in 0..i * substeps {
                let tau = x[0] - m as f64 * dt;
                p = rk4(&vel, tau, p, -dt);
                out[m + 1] = p;
            }
        });
        Ok(Self {
            grid: g,
            substeps,
            offsets,
            points,
        })
    }

    /// Lateral samples of the path from node `idx`.
    pub fn path(&self, idx: usize) -> &[[f64; 2]] {
        &self.points[self.offsets[idx]..self.offsets[idx + 1]]
    }

    pub fn footprint(&self, idx: usize) -> [f64; 2] {
        *self.path(idx).last().expect("non-empty path")
    }

    /// Sub-step in `τ`.
    pub fn dtau(&self) -> f64 {
        self.grid.h1() / self.substeps as f64
    }
}

/// `W₄ = eps · B^in(footprint)`: inlet data carried unchanged along paths.
pub fn advect_inlet(
    w2: &Field3,
    w3: &Field3,
    inlet: &(dyn Fn(f64, f64) -> f64 + Sync),
    eps: f64,
    substeps_per_cell: usize,
) -> Result<Field3> {
    let paths = PathBundle::trace_all(w2, w3, substeps_per_cell)?;
    Ok(advect_inlet_along(&paths, inlet, eps))
}

pub fn advect_inlet_along(paths: &PathBundle, inlet: &(dyn Fn(f64, f64) -> f64 + Sync), eps: f64) -> Field3 {
    let g = paths.grid;
    let mut out = Field3::zeros(g);
    out.values.par_iter_mut().enumerate().for_each(|(idx, v)| {
        let f = paths.footprint(idx);
        *v = eps * inlet(f[0], f[1]);
    });
    out
}

/// Cumulative axial integral `D(x₁) = ∫₀^{x₁} d₂` at the sub-step stations.
///
/// Nodal values and slopes are interpolated with cubic Hermite polynomials.
#[derive(Debug, Clone)]
pub struct IntegratingFactor {
    stations: Vec<f64>,
    substeps: usize,
}

impl IntegratingFactor {
    /// From nodal `D` and `D' = d₂` on a uniform axial grid.
    pub fn from_nodal(cumulative: &[f64], slope: &[f64], substeps: usize) -> Result<Self> {
        let n = cumulative.len();
        if n < 2 || slope.len() != n || substeps == 0 {
            return Err(Error::Precondition(
                "integrating factor needs matching nodal arrays and positive substeps".into(),
            ));
        }
        let h = 1.0 / (n - 1) as f64;
        let mut stations = Vec::with_capacity((n - 1) * substeps + 1);
        for c in 0..n - 1 {
            let (y0, y1, m0, m1) = (cumulative[c], cumulative[c + 1], slope[c] * h, slope[c + 1] * h);
            for s in 0..substeps {
                let t = s as f64 / substeps as f64;
                let (t2, t3) = (t * t, t * t * t);
                stations.push(
                    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                        + (t3 - 2.0 * t2 + t) * m0
                        + (-2.0 * t3 + 3.0 * t2) * y1
                        + (t3 - t2) * m1,
                );
            }
        }
        stations.push(cumulative[n - 1]);
        Ok(Self { stations, substeps })
    }

    /// Uses `d₂ = -s₀'`, so `D = s₀(0) - s₀` holds exactly along the background ODE.
    pub fn from_background(bg: &BackgroundSolution, substeps: usize) -> Result<Self> {
        let cumulative: Vec<f64> = bg.s0.iter().map(|s| bg.s0[0] - s).collect();
        let slope: Vec<f64> = bg.log_density_slope().iter().map(|v| -v).collect();
        Self::from_nodal(&cumulative, &slope, substeps)
    }

    /// `D` at station `m` (i.e. `x₁ = m·h₁/substeps`).
    #[inline]
    pub fn at_station(&self, m: usize) -> f64 {
        self.stations[m]
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn stations(&self) -> usize {
        self.stations.len()
    }
}

/// Source fields of the flow-angle transport equations.
pub struct BetaSources<'a> {
    pub w1: &'a Field3,
    pub w5: &'a Field3,
    pub f2: &'a Field3,
    pub f3: &'a Field3,
}

/// Duhamel solve for `(W₂, W₃)` along the shared paths:
///
/// `W₂(x) = eps·e^{-D(x₁)}·β₂^in(footprint) + ∫₀^{x₁} e^{-(D(x₁)-D(τ))} S₂ dτ`
///
/// with `S₂ = F₂ - (c²/u₀²)∂₂W₁ + (1/u₀²)∂₂W₅` and likewise for axis 3. The
/// path integral is a composite trapezoid over the path sub-steps.
pub fn solve_beta(
    bg: &BackgroundSolution,
    paths: &PathBundle,
    factor: &IntegratingFactor,
    sources: &BetaSources<'_>,
    inlet2: &(dyn Fn(f64, f64) -> f64 + Sync),
    inlet3: &(dyn Fn(f64, f64) -> f64 + Sync),
    eps: f64,
) -> Result<(Field3, Field3)> {
    let g = paths.grid;
    for f in [sources.w1, sources.w5, sources.f2, sources.f3] {
        f.check_grid(&g)?;
    }
    if bg.n != g.n1 {
        return Err(Error::GridMismatch(format!(
            "background has {} samples, grid has {} axial nodes",
            bg.n, g.n1
        )));
    }
    if factor.substeps() != paths.substeps || factor.stations() != (g.n1 - 1) * paths.substeps + 1 {
        return Err(Error::GridMismatch(
            "integrating factor stations do not match the paths".into(),
        ));
    }

    let c2 = bg.sound_speed2();
    let k: Vec<f64> = (0..g.n1).map(|i| c2[i] / (bg.u0[i] * bg.u0[i])).collect();
    let inv_u2: Vec<f64> = bg.u0.iter().map(|u| 1.0 / (u * u)).collect();
    let (d2w1, d3w1) = (diff(sources.w1, Axis::X2), diff(sources.w1, Axis::X3));
    let (d2w5, d3w5) = (diff(sources.w5, Axis::X2), diff(sources.w5, Axis::X3));
    let plane = g.plane();
    let source = |f: &Field3, dw1: &Field3, dw5: &Field3| Field3 {
        grid: g,
        values: (0..g.len())
            .map(|n| {
                let i = n / plane;
                f.values[n] - k[i] * dw1.values[n] + inv_u2[i] * dw5.values[n]
            })
            .collect(),
    };
    let s2 = source(sources.f2, &d2w1, &d2w5);
    let s3 = source(sources.f3, &d3w1, &d3w5);

    let dtau = paths.dtau();
    let sub = paths.substeps;
    let mut out2 = Field3::zeros(g);
    let mut out3 = Field3::zeros(g);
    out2.values
        .par_iter_mut()
        .zip(out3.values.par_iter_mut())
        .enumerate()
        .for_each(|(idx, (o2, o3))| {
            let (i, _, _) = g.ijk(idx);
            let path = paths.path(idx);
            let top = i * sub;
            let d_top = factor.at_station(top);
            let foot = path[path.len() - 1];
            let damp = (-d_top).exp();
            let mut acc2 = eps * damp * inlet2(foot[0], foot[1]);
            let mut acc3 = eps * damp * inlet3(foot[0], foot[1]);
            if top > 0 {
                let (mut q2, mut q3) = (0.0, 0.0);
                for (m, p) in path.iter().enumerate() {
                    let station = top - m;
                    let tau = station as f64 * dtau;
                    let w = if m == 0 || m == top { 0.5 } else { 1.0 };
                    let weight = w * (factor.at_station(station) - d_top).exp();
                    let at = [tau, p[0], p[1]];
                    q2 += weight * sample(&s2, at);
                    q3 += weight * sample(&s3, at);
                }
                acc2 += dtau * q2;
                acc3 += dtau * q3;
            }
            *o2 = acc2;
            *o3 = acc3;
        });
    Ok((out2, out3))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid3 {
        Grid3::new(9, 8, 8).unwrap()
    }

    #[test]
    fn zero_velocity_gives_straight_path() {
        let g = grid();
        let z = Field3::zeros(g);
        let p = trace(&z, &z, [0.7, 0.3, 0.4], 2).unwrap();
        let f = p.footprint();
        assert!((f[0] - 0.3).abs() < 1e-15 && (f[1] - 0.4).abs() < 1e-15);
        assert_eq!(p.samples.first().unwrap()[0], 0.7);
        assert_eq!(p.samples.last().unwrap()[0], 0.0);
        assert!(p.samples.windows(2).all(|w| w[0][0] > w[1][0]));
    }

    #[test]
    fn constant_advection_is_exact() {
        let g = grid();
        let a = 0.37;
        let w2 = Field3::constant(g, a);
        let z = Field3::zeros(g);
        let (x1, x2, x3) = (0.625, 0.125, 0.5);
        let f = trace(&w2, &z, [x1, x2, x3], 2).unwrap().footprint();
        let expect = (x2 - a * x1).rem_euclid(1.0);
        assert!((f[0] - expect).abs() < 1e-14, "{f:?} vs {expect}");
        assert!((f[1] - x3).abs() < 1e-15);

        let inlet = |y2: f64, y3: f64| (2.0 * std::f64::consts::PI * y2).cos() * (1.0 + y3);
        let w4 = advect_inlet(&w2, &z, &inlet, 0.5, 2).unwrap();
        for idx in [0, 77, g.len() - 1] {
            let (i, j, k) = g.ijk(idx);
            let x = g.coords(i, j, k);
            let want = 0.5 * inlet(x[1] - a * x[0], x[2]);
            assert!((w4.values[idx] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_velocity_advection_is_axially_constant() {
        let g = grid();
        let z = Field3::zeros(g);
        let inlet = |y2: f64, y3: f64| y2.sin() + y3;
        let w4 = advect_inlet(&z, &z, &inlet, 1e-3, 2).unwrap();
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let x = g.coords(i, j, 3);
                assert_eq!(w4.at(i, j, 3), 1e-3 * inlet(x[1], x[2]));
            }
        }
    }

    #[test]
    fn rotational_field_matches_fine_trace() {
        use std::f64::consts::PI;
        let vel = |t: f64, a: f64, b: f64| [0.1 * (2.0 * PI * b).sin() * (1.0 + t), -0.1 * (2.0 * PI * a).sin()];
        let origin = [1.0, 0.3, 0.4];
        let coarse = trace_fn(vel, origin, 1.0 / 64.0).footprint();
        let fine = trace_fn(vel, origin, 1.0 / 640.0).footprint();
        assert!((coarse[0] - fine[0]).abs() < 1e-8 && (coarse[1] - fine[1]).abs() < 1e-8);
        let back = trace_forward_fn(vel, fine, 1.0, 1.0 / 640.0);
        assert!((back[0] - 0.3).abs() < 1e-10 && (back[1] - 0.4).abs() < 1e-10);
    }

    #[test]
    fn bundle_matches_single_traces() {
        let g = grid();
        let w2 = Field3::from_fn(g, |x1, x2, _| 0.05 * (2.0 * x1 + 6.0 * x2).sin());
        let w3 = Field3::from_fn(g, |_, x2, x3| 0.04 * (6.0 * x3 - 3.0 * x2).cos());
        let bundle = PathBundle::trace_all(&w2, &w3, 3).unwrap();
        for idx in [5, 200, g.len() - 3] {
            let (i, j, k) = g.ijk(idx);
            let single = trace(&w2, &w3, g.coords(i, j, k), 3).unwrap();
            assert_eq!(single.samples.len(), bundle.path(idx).len());
            let f = single.footprint();
            let b = bundle.footprint(idx);
            assert!((f[0] - b[0]).abs() < 1e-13 && (f[1] - b[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn hermite_stations_reproduce_cubics() {
        let n = 6;
        let d = |x: f64| x * x * x - 0.5 * x;
        let dd = |x: f64| 3.0 * x * x - 0.5;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let f = IntegratingFactor::from_nodal(
            &xs.iter().map(|&x| d(x)).collect::<Vec<_>>(),
            &xs.iter().map(|&x| dd(x)).collect::<Vec<_>>(),
            4,
        )
        .unwrap();
        for m in 0..f.stations() {
            let x = m as f64 / (4 * (n - 1)) as f64;
            assert!((f.at_station(m) - d(x)).abs() < 1e-14);
        }
    }
}
