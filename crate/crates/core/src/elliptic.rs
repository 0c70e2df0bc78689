//! The coupled second-order system for the log-density perturbation `W₁` and
//! the potential perturbation `W₅`.
//!
//! The `W₁` equation is in divergence form with axial flux
//! `Q = (k-1)∂₁W₁ - d₁W₁ - d₅W₅`, where `k = c²(ρ₀)/u₀²`:
//!
//! ```text
//! ∂₁Q + ∂₂((k-1)W̃₂∂₁W₁ + k∂₂W₁) + ∂₃((k-1)W̃₃∂₁W₁ + k∂₃W₁)
//!     + d₂Q - (ρ₀/u₀²)W₁ - m∂₁W₅ = rhs₁
//! ΔW₅ - ρ₀W₁ = rhs₅
//! ```
//!
//! with `m = d₂/u₀² + ∂₁(1/u₀²)`, the oblique condition `Q = g₁` and the
//! Neumann condition `∂₁W₅ = g₅` at the inlet, and Dirichlet data at the exit.
//!
//! Rows are assembled with the sign flipped so every diagonal is positive.
//! Unknowns are ordered `W₁` block then `W₅` block, each axial-major.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field3, Grid3, Slice2};

/// Axial coefficient samples, one per `x₁` node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxialCoefficients {
    /// `c²(ρ₀)/u₀²`
    pub k: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d5: Vec<f64>,
    /// `ρ₀/u₀²`
    pub zeroth: Vec<f64>,
    /// `d₂/u₀² + ∂₁(1/u₀²)`
    pub coupling: Vec<f64>,
    /// `ρ₀`, the Poisson coupling.
    pub rho0: Vec<f64>,
}

impl AxialCoefficients {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    fn check_len(&self, n1: usize) -> Result<()> {
        let all = [
            &self.k,
            &self.d1,
            &self.d2,
            &self.d5,
            &self.zeroth,
            &self.coupling,
            &self.rho0,
        ];
        if all.iter().any(|v| v.len() != n1) {
            return Err(Error::GridMismatch(format!(
                "axial coefficient arrays must have {n1} samples"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub grid: Grid3,
    pub coeffs: AxialCoefficients,
    /// Frozen lateral velocity ratios of the previous iterate.
    pub w2: Field3,
    pub w3: Field3,
    pub rhs1: Field3,
    pub rhs5: Field3,
    /// Oblique inlet data `g₁` for `Q(0, ·)`.
    pub inlet_flux: Slice2,
    /// Neumann inlet data `g₅` for `∂₁W₅(0, ·)`.
    pub inlet_neumann: Slice2,
    /// Dirichlet exit data for `W₁`; `W₅` vanishes at the exit.
    pub exit: Slice2,
}

impl EllipticProblem {
    /// Problem with all data zero and `W̃ = 0`.
    pub fn homogeneous(grid: Grid3, coeffs: AxialCoefficients) -> Self {
        Self {
            grid,
            coeffs,
            w2: Field3::zeros(grid),
            w3: Field3::zeros(grid),
            rhs1: Field3::zeros(grid),
            rhs5: Field3::zeros(grid),
            inlet_flux: Slice2::zeros(grid.n2, grid.n3),
            inlet_neumann: Slice2::zeros(grid.n2, grid.n3),
            exit: Slice2::zeros(grid.n2, grid.n3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid;
        self.coeffs.check_len(g.n1)?;
        for f in [&self.w2, &self.w3, &self.rhs1, &self.rhs5] {
            f.check_grid(&g)?;
        }
        for s in [&self.inlet_flux, &self.inlet_neumann, &self.exit] {
            if s.n2 != g.n2 || s.n3 != g.n3 {
                return Err(Error::GridMismatch(
                    "boundary slice does not match the lateral grid".into(),
                ));
            }
        }
        for (i, &k) in self.coeffs.k.iter().enumerate() {
            if !(k - 1.0 > 0.0) {
                return Err(Error::Ellipticity {
                    index: i,
                    detail: format!("c²/u₀² - 1 = {:e} is not positive", k - 1.0),
                });
            }
        }
        let plane = g.plane();
        for i in 0..g.n1 {
            let k = self.coeffs.k[i];
            let bound = 4.0 * (k - 1.0).min(k) * 0.99;
            for m in 0..plane {
                let n = i * plane + m;
                let (a, b) = (self.w2.values[n], self.w3.values[n]);
                if (k - 1.0) * (a * a + b * b) >= bound {
                    return Err(Error::Ellipticity {
                        index: i,
                        detail: format!("frozen flow angles ({a:e}, {b:e}) break coercivity of the principal part"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Compressed-row sparse matrix with its right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl LinearSystem {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, rhs: Vec<f64>) -> Self {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
            rhs,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |e| (self.cols[e], self.vals[e]))
    }

    pub fn max_row_nnz(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|r| self.row(r).find(|e| e.0 == r).map_or(0.0, |e| e.1))
            .collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(r, out)| {
            let mut acc = 0.0;
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[e] * x[self.cols[e]];
            }
            *out = acc;
        });
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec(x, &mut y);
        y
    }

    /// `‖b - Ax‖₂`
    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        let ax = self.apply(x);
        let r: Vec<f64> = self.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        norm(&r)
    }

    /// Matrix Market coordinate text (1-based indices).
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::with_capacity(self.nnz() * 40);
        out.push_str("%%MatrixMarket matrix coordinate real general\n");
        out.push_str(&format!("{} {} {}\n", self.dim, self.dim, self.nnz()));
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                out.push_str(&format!("{} {} {:e}\n", r + 1, c + 1, v));
            }
        }
        out
    }

    pub fn rhs_to_matrix_market(&self) -> String {
        let mut out = String::from("%%MatrixMarket matrix array real general\n");
        out.push_str(&format!("{} 1\n", self.dim));
        for v in &self.rhs {
            out.push_str(&format!("{v:e}\n"));
        }
        out
    }
}

const CHUNK: usize = 4096;

/// Inner product with a fixed reduction order, independent of thread count.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy_into(out: &mut [f64], a: &[f64], s: f64, b: &[f64]) {
    out.par_iter_mut()
        .zip(a.par_iter().zip(b.par_iter()))
        .for_each(|(o, (x, y))| *o = x + s * y);
}

/// Assemble the discrete system. Exit rows carry the Dirichlet data directly.
pub fn assemble(p: &EllipticProblem) -> Result<LinearSystem> {
    p.validate()?;
    let g = p.grid;
    let n = g.len();
    let c = &p.coeffs;
    let (h1, h2, h3) = (g.h1(), g.h2(), g.h3());
    let a = |i: usize| c.k[i] - 1.0;
    let half = |v: &[f64], i: usize, j: usize| 0.5 * (v[i] + v[j]);

    let rows: Vec<(Vec<(usize, f64)>, f64)> = (0..2 * n)
        .into_par_iter()
        .map(|row| {
            let w5 = row >= n;
            let node = row % n;
            let (i, j, k) = g.ijk(node);
            let (jj, kk) = (j as isize, k as isize);
            let u1 = |ii: usize, dj: isize, dk: isize| g.idx_wrap(ii, jj + dj, kk + dk);
            let u5 = |ii: usize, dj: isize, dk: isize| n + g.idx_wrap(ii, jj + dj, kk + dk);
            let mut e: Vec<(usize, f64)> = Vec::with_capacity(20);

            if i == g.n1 - 1 {
                let rhs = if w5 { 0.0 } else { p.exit.at(j, k) };
                e.push((row, 1.0));
                return (e, rhs);
            }

            if i == 0 {
                // one-sided second-order ∂₁, scaled by 2/h₁ to match interior rows
                let s = 2.0 / h1;
                if w5 {
                    let d = s / (2.0 * h1);
                    e.push((u5(0, 0, 0), 3.0 * d));
                    e.push((u5(1, 0, 0), -4.0 * d));
                    e.push((u5(2, 0, 0), d));
                    return (e, -s * p.inlet_neumann.at(j, k));
                }
                let d = s * a(0) / (2.0 * h1);
                e.push((u1(0, 0, 0), 3.0 * d + s * c.d1[0]));
                e.push((u1(1, 0, 0), -4.0 * d));
                e.push((u1(2, 0, 0), d));
                e.push((u5(0, 0, 0), s * c.d5[0]));
                return (e, -s * p.inlet_flux.at(j, k));
            }

            if w5 {
                let (i1, i2, i3) = (1.0 / (h1 * h1), 1.0 / (h2 * h2), 1.0 / (h3 * h3));
                e.push((u5(i, 0, 0), 2.0 * (i1 + i2 + i3)));
                e.push((u5(i + 1, 0, 0), -i1));
                e.push((u5(i - 1, 0, 0), -i1));
                e.push((u5(i, 1, 0), -i2));
                e.push((u5(i, -1, 0), -i2));
                e.push((u5(i, 0, 1), -i3));
                e.push((u5(i, 0, -1), -i3));
                e.push((u1(i, 0, 0), c.rho0[i]));
                return (e, -p.rhs5.values[node]);
            }

            // un-negated coefficients, flipped on push
            let mut push = |col: usize, v: f64| e.push((col, -v));
            let (ap, am) = (half_a(c, i, i + 1), half_a(c, i - 1, i));
            let (d1p, d1m) = (half(&c.d1, i, i + 1), half(&c.d1, i - 1, i));
            let (d5p, d5m) = (half(&c.d5, i, i + 1), half(&c.d5, i - 1, i));
            let hh = h1 * h1;
            let (ai, d2) = (a(i), c.d2[i]);
            // ∂₁Q by half-node fluxes, plus d₂Q at the node
            push(u1(i + 1, 0, 0), ap / hh - d1p / (2.0 * h1) + d2 * ai / (2.0 * h1));
            push(u1(i - 1, 0, 0), am / hh + d1m / (2.0 * h1) - d2 * ai / (2.0 * h1));
            let lat = c.k[i] * (2.0 / (h2 * h2) + 2.0 / (h3 * h3));
            push(
                u1(i, 0, 0),
                -(ap + am) / hh - (d1p - d1m) / (2.0 * h1) - d2 * c.d1[i] - lat - c.zeroth[i],
            );
            push(u5(i + 1, 0, 0), -d5p / (2.0 * h1) - c.coupling[i] / (2.0 * h1));
            push(u5(i - 1, 0, 0), d5m / (2.0 * h1) + c.coupling[i] / (2.0 * h1));
            push(u5(i, 0, 0), -(d5p - d5m) / (2.0 * h1) - d2 * c.d5[i]);
            // lateral second differences
            for (dj, dk, hs) in [(1, 0, h2), (-1, 0, h2), (0, 1, h3), (0, -1, h3)] {
                push(u1(i, dj, dk), c.k[i] / (hs * hs));
            }
            // centred differences of the centred cross fluxes (k-1)W̃∂₁W₁
            for s in [1isize, -1] {
                let w2 = p.w2.at_wrap(i, jj + s, kk);
                let cf = s as f64 * ai * w2 / (4.0 * h2 * h1);
                push(u1(i + 1, s, 0), cf);
                push(u1(i - 1, s, 0), -cf);
                let w3 = p.w3.at_wrap(i, jj, kk + s);
                let cf = s as f64 * ai * w3 / (4.0 * h3 * h1);
                push(u1(i + 1, 0, s), cf);
                push(u1(i - 1, 0, s), -cf);
            }
            (e, -p.rhs1.values[node])
        })
        .collect();

    let (entries, rhs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(LinearSystem::from_rows(entries, rhs))
}

#[inline]
fn half_a(c: &AxialCoefficients, i: usize, j: usize) -> f64 {
    0.5 * (c.k[i] + c.k[j]) - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Bicgstab,
    BandedLu,
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub method: SolverMethod,
    pub iterations: usize,
    pub restarts: usize,
    /// Final true relative residual `‖b - Ax‖/‖b‖`.
    pub residual: f64,
    /// Recursive relative residual per iteration.
    pub history: Vec<f64>,
}

const MAX_RESTARTS: usize = 5;

/// BiCGSTAB with right Jacobi preconditioning from a zero initial guess.
pub fn solve_linear(sys: &LinearSystem, tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveRecord)> {
    solve_linear_from(sys, None, tol, max_iter)
}

/// BiCGSTAB from an optional initial guess. Stops when the true relative
/// residual is below `tol`; the recurrence is restarted from the true residual
/// if the two drift apart or the iteration breaks down.
pub fn solve_linear_from(
    sys: &LinearSystem,
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveRecord)> {
    let n = sys.dim;
    let bnorm = norm(&sys.rhs);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveRecord {
                method: SolverMethod::Trivial,
                iterations: 0,
                restarts: 0,
                residual: 0.0,
                history: Vec::new(),
            },
        ));
    }
    let inv_diag: Vec<f64> = sys
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precond = |v: &[f64], out: &mut [f64]| {
        out.par_iter_mut()
            .zip(v.par_iter().zip(inv_diag.par_iter()))
            .for_each(|(o, (x, d))| *o = x * d);
    };

    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut restarts = 0;
    let (mut p, mut v, mut s, mut t) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut ph, mut sh) = (vec![0.0; n], vec![0.0; n]);

    loop {
        let ax = sys.apply(&x);
        let mut r: Vec<f64> = sys.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let true_rel = norm(&r) / bnorm;
        if true_rel < tol {
            return Ok((
                x,
                SolveRecord {
                    method: SolverMethod::Bicgstab,
                    iterations,
                    restarts,
                    residual: true_rel,
                    history,
                },
            ));
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: true_rel,
                history,
            });
        }
        if iterations > 0 {
            restarts += 1;
        }
        if restarts > MAX_RESTARTS {
            return Err(Error::Breakdown {
                iteration: iterations,
                detail: format!(
                    "restart limit reached at relative residual {true_rel:e}; use the banded direct solver"
                ),
            });
        }

        let rhat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
        p.iter_mut().for_each(|e| *e = 0.0);
        v.iter_mut().for_each(|e| *e = 0.0);

        while iterations < max_iter {
            let rho_new = dot(&rhat, &r);
            if rho_new.abs() < 1e-300 || !rho_new.is_finite() {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            p.par_iter_mut()
                .zip(r.par_iter().zip(v.par_iter()))
                .for_each(|(pp, (rr, vv))| *pp = rr + beta * (*pp - omega * vv));
            precond(&p, &mut ph);
            sys.matvec(&ph, &mut v);
            let rv = dot(&rhat, &v);
            if rv.abs() < 1e-300 || !rv.is_finite() {
                break;
            }
            alpha = rho / rv;
            axpy_into(&mut s, &r, -alpha, &v);
            iterations += 1;
            let snorm = norm(&s) / bnorm;
            if snorm < tol {
                x.par_iter_mut()
                    .zip(ph.par_iter())
                    .for_each(|(xx, pp)| *xx += alpha * pp);
                history.push(snorm);
                break;
            }
            precond(&s, &mut sh);
            sys.matvec(&sh, &mut t);
            let tt = dot(&t, &t);
            if tt == 0.0 {
                break;
            }
            omega = dot(&t, &s) / tt;
            if omega == 0.0 || !omega.is_finite() {
                break;
            }
            x.par_iter_mut()
                .zip(ph.par_iter().zip(sh.par_iter()))
                .for_each(|(xx, (pp, ss))| *xx += alpha * pp + omega * ss);
            axpy_into(&mut r, &s, -omega, &t);
            let rel = norm(&r) / bnorm;
            history.push(rel);
            if rel < tol {
                break;
            }
        }
    }
}

/// Storage bound (in `f64` entries) for the banded fallback.
pub const BANDED_MAX_ENTRIES: usize = 60_000_000;

/// Direct solve by banded Gaussian elimination with partial pivoting, after
/// interleaving the two unknown blocks node by node.
pub fn solve_banded(sys: &LinearSystem, grid: &Grid3) -> Result<(Vec<f64>, SolveRecord)> {
    let n = grid.len();
    if sys.dim != 2 * n {
        return Err(Error::GridMismatch("system dimension does not match the grid".into()));
    }
    let perm = |u: usize| if u < n { 2 * u } else { 2 * (u - n) + 1 };
    let dim = sys.dim;
    let mut bw = 0usize;
    for r in 0..dim {
        for (c, _) in sys.row(r) {
            bw = bw.max(perm(r).abs_diff(perm(c)));
        }
    }
    // lower band bw, upper band 2·bw after pivoting
    let width = 3 * bw + 1;
    if dim.saturating_mul(width) > BANDED_MAX_ENTRIES {
        return Err(Error::Precondition(format!(
            "banded fallback needs {dim}x{width} storage, above the {BANDED_MAX_ENTRIES} entry limit"
        )));
    }
    // row-major band: column c of row r stored at r*width + (c + bw - r)
    let mut band = vec![0.0; dim * width];
    let mut b = vec![0.0; dim];
    for r in 0..dim {
        let pr = perm(r);
        b[pr] = sys.rhs[r];
        for (c, v) in sys.row(r) {
            let pc = perm(c);
            band[pr * width + (pc + bw - pr)] += v;
        }
    }
    let at = |r: usize, c: usize| r * width + (c + bw - r);
    for col in 0..dim {
        let last = (col + bw).min(dim - 1);
        let mut piv = col;
        let mut best = band[at(col, col)].abs();
        for r in col + 1..=last {
            let v = band[at(r, col)].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return Err(Error::Breakdown {
                iteration: col,
                detail: "singular pivot in banded elimination".into(),
            });
        }
        let cmax = (col + 2 * bw).min(dim - 1);
        if piv != col {
            for c in col..=cmax {
                band.swap(at(col, c), at(piv, c));
            }
            b.swap(col, piv);
        }
        let d = band[at(col, col)];
        for r in col + 1..=last {
            let f = band[at(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            band[at(r, col)] = 0.0;
            for c in col + 1..=cmax {
                band[at(r, c)] -= f * band[at(col, c)];
            }
            b[r] -= f * b[col];
        }
    }
    let mut y = vec![0.0; dim];
    for r in (0..dim).rev() {
        let cmax = (r + 2 * bw).min(dim - 1);
        let mut acc = b[r];
        for c in r + 1..=cmax {
            acc -= band[at(r, c)] * y[c];
        }
        y[r] = acc / band[at(r, r)];
    }
    let x: Vec<f64> = (0..dim).map(|u| y[perm(u)]).collect();
    let bnorm = norm(&sys.rhs);
    let residual = if bnorm > 0.0 {
        sys.residual_norm(&x) / bnorm
    } else {
        0.0
    };
    Ok((
        x,
        SolveRecord {
            method: SolverMethod::BandedLu,
            iterations: 1,
            restarts: 0,
            residual,
            history: Vec::new(),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledSolution {
    pub w1: Field3,
    pub w5: Field3,
    pub record: SolveRecord,
}

/// Solve for `(W₁, W₅)`. The exit data are lifted off first: the unknown is
/// `U = W - S` with `S` the exit trace extended constantly in `x₁`, so the
/// Krylov iteration sees homogeneous exit rows; `W₁ = U₁ + S` afterwards.
pub fn solve_coupled(
    p: &EllipticProblem,
    opts: KrylovOptions,
    warm: Option<(&Field3, &Field3)>,
) -> Result<CoupledSolution> {
    let sys = assemble(p)?;
    solve_assembled(p, &sys, opts, warm)
}

pub fn solve_assembled(
    p: &EllipticProblem,
    sys: &LinearSystem,
    opts: KrylovOptions,
    warm: Option<(&Field3, &Field3)>,
) -> Result<CoupledSolution> {
    let g = p.grid;
    let n = g.len();
    let plane = g.plane();
    let mut lift = vec![0.0; 2 * n];
    for i in 0..g.n1 {
        lift[i * plane..(i + 1) * plane].copy_from_slice(&p.exit.values);
    }
    let a_lift = sys.apply(&lift);
    let mut hom = sys.clone();
    hom.rhs = sys.rhs.iter().zip(&a_lift).map(|(b, a)| b - a).collect();
    // exit rows are identity: their homogenised data vanish exactly
    for r in (g.n1 - 1) * plane..n {
        hom.rhs[r] = 0.0;
        hom.rhs[n + r] = 0.0;
    }

    let guess = warm.map(|(w1, w5)| {
        let mut v = Vec::with_capacity(2 * n);
        v.extend(w1.values.iter().zip(&lift[..n]).map(|(a, b)| a - b));
        v.extend_from_slice(&w5.values);
        v
    });
    let solved = solve_linear_from(&hom, guess.as_deref(), opts.tol, opts.max_iter);
    let (u, record) = match solved {
        Ok(v) => v,
        Err(Error::Breakdown { .. }) | Err(Error::NonConvergence { .. }) if solve_banded_possible(&hom, &g) => {
            solve_banded(&hom, &g)?
        }
        Err(e) => return Err(e),
    };
    let mut w1 = Field3::zeros(g);
    let mut w5 = Field3::zeros(g);
    for m in 0..n {
        w1.values[m] = u[m] + lift[m];
        w5.values[m] = u[n + m];
    }
    Ok(CoupledSolution { w1, w5, record })
}

fn solve_banded_possible(sys: &LinearSystem, g: &Grid3) -> bool {
    // conservative bandwidth estimate: two axial planes of interleaved unknowns
    let bw = 4 * g.plane() + 2;
    sys.dim.saturating_mul(3 * bw + 1) <= BANDED_MAX_ENTRIES
}
