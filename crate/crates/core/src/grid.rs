//! Uniform grid on `[0,1] × T²`, scalar fields and their discrete operators.
//!
//! Axial nodes are vertex-centred (`x₁ = i·h₁`, both faces are nodes); lateral
//! nodes sit at `x = j·h` on the unit-period torus and wrap periodically.
//! Values are stored axial-major: `index = (i·n2 + j)·n3 + k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid3 {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
    X3,
}

impl Grid3 {
    pub fn new(n1: usize, n2: usize, n3: usize) -> Result<Self> {
        if n1 < 5 || n2 < 4 || n3 < 4 {
            return Err(Error::Precondition(format!(
                "grid ({n1}, {n2}, {n3}) below minimum stencil support (5, 4, 4)"
            )));
        }
        Ok(Self { n1, n2, n3 })
    }

    #[inline]
    pub fn h1(&self) -> f64 {
        1.0 / (self.n1 - 1) as f64
    }
    #[inline]
    pub fn h2(&self) -> f64 {
        1.0 / self.n2 as f64
    }
    #[inline]
    pub fn h3(&self) -> f64 {
        1.0 / self.n3 as f64
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nodes per axial plane.
    #[inline]
    pub fn plane(&self) -> usize {
        self.n2 * self.n3
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n2 + j) * self.n3 + k
    }

    /// Index with periodic wrapping of the lateral offsets.
    #[inline]
    pub fn idx_wrap(&self, i: usize, j: isize, k: isize) -> usize {
        let j = j.rem_euclid(self.n2 as isize) as usize;
        let k = k.rem_euclid(self.n3 as isize) as usize;
        self.idx(i, j, k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.n3;
        let rest = idx / self.n3;
        (rest / self.n2, rest % self.n2, k)
    }

    #[inline]
    pub fn coords(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [i as f64 * self.h1(), j as f64 * self.h2(), k as f64 * self.h3()]
    }

    pub fn spacing(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X1 => self.h1(),
            Axis::X2 => self.h2(),
            Axis::X3 => self.h3(),
        }
    }

    /// Same lateral layout with half the spacing on every axis.
    pub fn refined(&self) -> Self {
        Self {
            n1: 2 * self.n1 - 1,
            n2: 2 * self.n2,
            n3: 2 * self.n3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field3 {
    pub grid: Grid3,
    pub values: Vec<f64>,
}

impl Field3 {
    pub fn zeros(grid: Grid3) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid3, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn<F>(grid: Grid3, f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|n| {
                let (i, j, k) = grid.ijk(n);
                let [x1, x2, x3] = grid.coords(i, j, k);
                f(x1, x2, x3)
            })
            .collect();
        Self { grid, values }
    }

    /// Field from a function of the flat node index.
    pub fn from_nodes<F>(grid: Grid3, f: F) -> Self
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let values = (0..grid.len()).into_par_iter().map(f).collect();
        Self { grid, values }
    }

    /// Broadcast axial samples (one per `x₁` node) across each lateral plane.
    pub fn from_axial(grid: Grid3, samples: &[f64]) -> Self {
        assert_eq!(samples.len(), grid.n1, "axial sample count");
        let plane = grid.plane();
        let mut values = Vec::with_capacity(grid.len());
        for &s in samples {
            values.extend(std::iter::repeat_n(s, plane));
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.idx(i, j, k)]
    }

    #[inline]
    pub fn at_wrap(&self, i: usize, j: isize, k: isize) -> f64 {
        self.values[self.grid.idx_wrap(i, j, k)]
    }

    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Self {
        Self {
            grid: self.grid,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64 + Sync>(&self, other: &Field3, f: F) -> Self {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        Self {
            grid: self.grid,
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &Field3) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field3) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field3) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// Multiply each axial plane by the matching axial sample.
    pub fn scale_axial(&self, samples: &[f64]) -> Self {
        let plane = self.grid.plane();
        let mut out = self.clone();
        out.values
            .par_chunks_mut(plane)
            .zip(samples.par_iter())
            .for_each(|(chunk, &s)| chunk.iter_mut().for_each(|v| *v *= s));
        out
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_grid(&self, grid: &Grid3) -> Result<()> {
        if &self.grid == grid {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "field on {:?}, expected {:?}",
                self.grid, grid
            )))
        }
    }

    /// Axial plane `i` as lateral samples.
    pub fn plane(&self, i: usize) -> Slice2 {
        let p = self.grid.plane();
        Slice2 {
            n2: self.grid.n2,
            n3: self.grid.n3,
            values: self.values[i * p..(i + 1) * p].to_vec(),
        }
    }
}

/// Second-order difference along `axis`. Lateral axes wrap; the axial axis uses
/// one-sided three-point stencils on the two faces.
pub fn diff(f: &Field3, axis: Axis) -> Field3 {
    let g = f.grid;
    let plane = g.plane();
    let mut out = Field3::zeros(g);
    match axis {
        Axis::X1 => {
            let inv = 1.0 / g.h1();
            let v = &f.values;
            out.values.par_chunks_mut(plane).enumerate().for_each(|(i, chunk)| {
                for (m, o) in chunk.iter_mut().enumerate() {
                    let at = |ii: usize| v[ii * plane + m];
                    *o = if i == 0 {
                        (-3.0 * at(0) + 4.0 * at(1) - at(2)) * 0.5 * inv
                    } else if i == g.n1 - 1 {
                        (3.0 * at(i) - 4.0 * at(i - 1) + at(i - 2)) * 0.5 * inv
                    } else {
                        (at(i + 1) - at(i - 1)) * 0.5 * inv
                    };
                }
            });
        }
        Axis::X2 | Axis::X3 => {
            let inv = 0.5 / g.spacing(axis);
            out.values.par_chunks_mut(plane).enumerate().for_each(|(i, chunk)| {
                for j in 0..g.n2 {
                    for k in 0..g.n3 {
                        let (jj, kk) = (j as isize, k as isize);
                        let (p, m) = match axis {
                            Axis::X2 => (f.at_wrap(i, jj + 1, kk), f.at_wrap(i, jj - 1, kk)),
                            _ => (f.at_wrap(i, jj, kk + 1), f.at_wrap(i, jj, kk - 1)),
                        };
                        chunk[j * g.n3 + k] = (p - m) * inv;
                    }
                }
            });
        }
    }
    out
}

/// Seven-point Laplacian at interior axial nodes; the two axial faces are left zero.
pub fn laplacian_interior(f: &Field3) -> Field3 {
    let g = f.grid;
    let (h1, h2, h3) = (g.h1(), g.h2(), g.h3());
    let plane = g.plane();
    let mut out = Field3::zeros(g);
    out.values.par_chunks_mut(plane).enumerate().for_each(|(i, chunk)| {
        if i == 0 || i == g.n1 - 1 {
            return;
        }
        for j in 0..g.n2 {
            for k in 0..g.n3 {
                let (jj, kk) = (j as isize, k as isize);
                let c = f.at(i, j, k);
                let d1 = (f.at(i + 1, j, k) - 2.0 * c + f.at(i - 1, j, k)) / (h1 * h1);
                let d2 = (f.at_wrap(i, jj + 1, kk) - 2.0 * c + f.at_wrap(i, jj - 1, kk)) / (h2 * h2);
                let d3 = (f.at_wrap(i, jj, kk + 1) - 2.0 * c + f.at_wrap(i, jj, kk - 1)) / (h3 * h3);
                chunk[j * g.n3 + k] = d1 + d2 + d3;
            }
        }
    });
    out
}

/// Trilinear interpolation; lateral coordinates wrap, `x₁` must lie in `[0, 1]`.
pub fn interp(f: &Field3, point: [f64; 3]) -> Result<f64> {
    let x1 = point[0];
    if !(-1e-12..=1.0 + 1e-12).contains(&x1) {
        return Err(Error::Domain {
            what: "axial coordinate outside [0, 1]",
            value: x1,
        });
    }
    Ok(sample(f, point))
}

/// Trilinear interpolation without the axial range check (clamps instead).
#[inline]
pub fn sample(f: &Field3, point: [f64; 3]) -> f64 {
    let g = &f.grid;
    let t1 = (point[0].clamp(0.0, 1.0)) * (g.n1 - 1) as f64;
    let i0 = (t1.floor() as usize).min(g.n1 - 2);
    let a = t1 - i0 as f64;

    let t2 = point[1].rem_euclid(1.0) * g.n2 as f64;
    let j0 = t2.floor();
    let b = t2 - j0;
    let j0 = j0 as isize;

    let t3 = point[2].rem_euclid(1.0) * g.n3 as f64;
    let k0 = t3.floor();
    let c = t3 - k0;
    let k0 = k0 as isize;

    let lat = |i: usize| {
        let v00 = f.at_wrap(i, j0, k0);
        let v10 = f.at_wrap(i, j0 + 1, k0);
        let v01 = f.at_wrap(i, j0, k0 + 1);
        let v11 = f.at_wrap(i, j0 + 1, k0 + 1);
        (1.0 - b) * ((1.0 - c) * v00 + c * v01) + b * ((1.0 - c) * v10 + c * v11)
    };
    (1.0 - a) * lat(i0) + a * lat(i0 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub sup: f64,
    pub sup_grad: f64,
    pub l2: f64,
}

/// Sup norm, sup of first differences over all axes, and the L² norm with
/// trapezoid weights axially (unit total volume).
pub fn norms(f: &Field3) -> Norms {
    let g = f.grid;
    let sup = f.sup();
    let sup_grad = [Axis::X1, Axis::X2, Axis::X3]
        .iter()
        .map(|&a| diff(f, a).sup())
        .fold(0.0, f64::max);
    let plane = g.plane();
    let lateral_w = g.h2() * g.h3();
    let mut acc = 0.0;
    for i in 0..g.n1 {
        let w = if i == 0 || i == g.n1 - 1 { 0.5 } else { 1.0 } * g.h1() * lateral_w;
        let s: f64 = f.values[i * plane..(i + 1) * plane].iter().map(|v| v * v).sum();
        acc += w * s;
    }
    Norms {
        sup,
        sup_grad,
        l2: acc.sqrt(),
    }
}

/// Lateral samples on the torus (or on the closed square, for reflection input).
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2 {
    pub n2: usize,
    pub n3: usize,
    pub values: Vec<f64>,
}

impl Slice2 {
    pub fn zeros(n2: usize, n3: usize) -> Self {
        Self {
            n2,
            n3,
            values: vec![0.0; n2 * n3],
        }
    }

    #[inline]
    pub fn at(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.n3 + k]
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// Reflection parity of a lateral field about `x₂ = 0` and `x₃ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReflectParity {
    pub axis2: Parity,
    pub axis3: Parity,
}

impl ReflectParity {
    pub const SCALAR: Self = Self {
        axis2: Parity::Even,
        axis3: Parity::Even,
    };
    pub const U2: Self = Self {
        axis2: Parity::Odd,
        axis3: Parity::Even,
    };
    pub const U3: Self = Self {
        axis2: Parity::Even,
        axis3: Parity::Odd,
    };
}

/// Extend samples on the closed square `[0,1]²` (`m₂+1 × m₃+1` points) to the
/// period-2 torus by even/odd reflection, returning `2m₂ × 2m₃` torus samples.
/// In solver coordinates the square occupies `[0, ½]²` of the unit torus.
pub fn extend_reflect(square: &Slice2, parity: ReflectParity) -> Result<Slice2> {
    if square.n2 < 2 || square.n3 < 2 {
        return Err(Error::Precondition("square needs at least 2×2 samples".into()));
    }
    let (m2, m3) = (square.n2 - 1, square.n3 - 1);
    let tol = 1e-12 * square.sup().max(1.0);
    if parity.axis2 == Parity::Odd {
        for k in 0..=m3 {
            for j in [0, m2] {
                if square.at(j, k).abs() > tol {
                    return Err(Error::Compatibility(format!(
                        "odd reflection in x2 needs zero samples on the wall, found {:e} at ({j}, {k})",
                        square.at(j, k)
                    )));
                }
            }
        }
    }
    if parity.axis3 == Parity::Odd {
        for j in 0..=m2 {
            for k in [0, m3] {
                if square.at(j, k).abs() > tol {
                    return Err(Error::Compatibility(format!(
                        "odd reflection in x3 needs zero samples on the wall, found {:e} at ({j}, {k})",
                        square.at(j, k)
                    )));
                }
            }
        }
    }
    let (n2, n3) = (2 * m2, 2 * m3);
    let mut out = Slice2::zeros(n2, n3);
    for j in 0..n2 {
        let (sj, s2) = if j <= m2 {
            (j, 1.0)
        } else {
            (n2 - j, parity.axis2.sign())
        };
        for k in 0..n3 {
            let (sk, s3) = if k <= m3 {
                (k, 1.0)
            } else {
                (n3 - k, parity.axis3.sign())
            };
            let v = square.at(sj, sk) * s2 * s3;
            // odd parity forces exact zeros on the reflection axes
            let on_axis2 = parity.axis2 == Parity::Odd && (sj == 0 || sj == m2);
            let on_axis3 = parity.axis3 == Parity::Odd && (sk == 0 || sk == m3);
            out.values[j * n3 + k] = if on_axis2 || on_axis3 { 0.0 } else { v };
        }
    }
    Ok(out)
}

/// Sidecar descriptor written next to every field CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub name: String,
}

impl Field3 {
    pub fn to_csv(&self) -> String {
        let g = self.grid;
        let mut out = String::with_capacity(g.len() * 64);
        out.push_str("i,j,k,x1,x2,x3,value\n");
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                for k in 0..g.n3 {
                    let [x1, x2, x3] = g.coords(i, j, k);
                    out.push_str(&format!("{i},{j},{k},{x1:e},{x2:e},{x3:e},{:e}\n", self.at(i, j, k)));
                }
            }
        }
        out
    }

    pub fn descriptor(&self, name: &str) -> FieldDescriptor {
        FieldDescriptor {
            n1: self.grid.n1,
            n2: self.grid.n2,
            n3: self.grid.n3,
            name: name.to_string(),
        }
    }

    pub fn from_csv(descriptor: &FieldDescriptor, csv: &str) -> Result<Self> {
        let grid = Grid3::new(descriptor.n1, descriptor.n2, descriptor.n3)?;
        let mut field = Field3::zeros(grid);
        let mut seen = vec![false; grid.len()];
        let mut lines = csv.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "i,j,k,x1,x2,x3,value" {
            return Err(Error::Precondition(format!("unexpected field header '{header}'")));
        }
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || Error::Precondition(format!("malformed field row {}: '{line}'", row + 2));
            if cols.len() != 7 {
                return Err(bad());
            }
            let i: usize = cols[0].parse().map_err(|_| bad())?;
            let j: usize = cols[1].parse().map_err(|_| bad())?;
            let k: usize = cols[2].parse().map_err(|_| bad())?;
            let v: f64 = cols[6].parse().map_err(|_| bad())?;
            if i >= grid.n1 || j >= grid.n2 || k >= grid.n3 {
                return Err(bad());
            }
            let n = grid.idx(i, j, k);
            field.values[n] = v;
            seen[n] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Precondition(format!(
                "field '{}' is missing node {:?}",
                descriptor.name,
                grid.ijk(missing)
            )));
        }
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn g(n1: usize, n2: usize, n3: usize) -> Grid3 {
        Grid3::new(n1, n2, n3).unwrap()
    }

    #[test]
    fn grid_limits() {
        assert!(Grid3::new(4, 4, 4).is_err());
        assert!(Grid3::new(5, 3, 4).is_err());
        let gr = g(5, 4, 8);
        assert_eq!(gr.h1(), 0.25);
        assert_eq!(gr.h3(), 0.125);
        for n in 0..gr.len() {
            let (i, j, k) = gr.ijk(n);
            assert_eq!(gr.idx(i, j, k), n);
        }
        assert_eq!(gr.idx_wrap(1, -1, 9), gr.idx(1, 3, 1));
    }

    #[test]
    fn diff_of_constant_is_zero() {
        let f = Field3::constant(g(9, 8, 8), 3.5);
        for a in [Axis::X1, Axis::X2, Axis::X3] {
            assert_eq!(diff(&f, a).sup(), 0.0);
        }
    }

    #[test]
    fn diff_quadratic_exact_axially() {
        let f = Field3::from_fn(g(11, 4, 4), |x1, _, _| x1 * x1);
        let d = diff(&f, Axis::X1);
        for i in 0..11 {
            let x = i as f64 * 0.1;
            assert!((d.at(i, 1, 2) - 2.0 * x).abs() < 1e-12, "i={i}");
        }
    }

    #[test]
    fn diff_lateral_second_order() {
        let err = |n2: usize| {
            let gr = g(5, n2, 4);
            let f = Field3::from_fn(gr, |_, x2, _| (2.0 * PI * x2).sin());
            let d = diff(&f, Axis::X2);
            let exact = Field3::from_fn(gr, |_, x2, _| 2.0 * PI * (2.0 * PI * x2).cos());
            d.sub(&exact).sup()
        };
        let (e1, e2) = (err(64), err(128));
        let ratio = e1 / e2;
        assert!((3.6..=4.4).contains(&ratio), "ratio {ratio}");
        assert!(e1 < (2.0 * PI).powi(3) / 6.0 / 64.0f64.powi(2) * 1.01);
    }

    #[test]
    fn interp_exact_at_nodes_and_on_linear() {
        let gr = g(6, 5, 7);
        let f = Field3::from_fn(gr, |x1, x2, x3| (3.0 * x1).sin() + x2 * x3);
        for (i, j, k) in [(0, 0, 0), (3, 2, 4), (5, 4, 6)] {
            let p = gr.coords(i, j, k);
            assert!((interp(&f, p).unwrap() - f.at(i, j, k)).abs() < 1e-14);
        }
        let lin = Field3::from_fn(gr, |x1, x2, _| 1.0 + 2.0 * x2 + 0.5 * x1);
        for &(a, b) in &[(0.13, 0.27), (0.91, 0.49), (0.5, 0.0)] {
            let v = interp(&lin, [a, b, 0.3]).unwrap();
            assert!((v - (1.0 + 2.0 * b + 0.5 * a)).abs() < 1e-13);
        }
        assert!(interp(&f, [1.1, 0.0, 0.0]).is_err());
        assert!(interp(&f, [-1e-13, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn interp_error_bound_on_sine() {
        let n2 = 32;
        let gr = g(5, n2, 4);
        let f = Field3::from_fn(gr, |_, x2, _| (2.0 * PI * x2).sin());
        let h = gr.h2();
        let bound = h * h * (2.0 * PI).powi(2) / 8.0;
        let mut worst: f64 = 0.0;
        for s in 0..2000 {
            let x2 = s as f64 / 2000.0;
            let e = (interp(&f, [0.3, x2, 0.1]).unwrap() - (2.0 * PI * x2).sin()).abs();
            worst = worst.max(e);
        }
        assert!(worst < bound, "{worst} vs {bound}");
    }

    #[test]
    fn interp_continuous_across_seam() {
        let gr = g(5, 8, 8);
        let f = Field3::from_fn(gr, |x1, x2, x3| x1 + (2.0 * PI * x2).cos() * (2.0 * PI * x3).sin());
        let a = interp(&f, [0.4, 0.0, 0.3]).unwrap();
        let b = interp(&f, [0.4, 1.0, 0.3]).unwrap();
        assert!((a - b).abs() < 1e-14);
        let c = interp(&f, [0.4, 1.0 - 1e-15, 0.3]).unwrap();
        assert!((a - c).abs() < 1e-12);
    }

    #[test]
    fn norms_examples() {
        let gr = g(9, 8, 8);
        assert_eq!(
            norms(&Field3::zeros(gr)),
            Norms {
                sup: 0.0,
                sup_grad: 0.0,
                l2: 0.0
            }
        );
        let n = norms(&Field3::constant(gr, -2.0));
        assert_eq!(n.sup, 2.0);
        assert_eq!(n.sup_grad, 0.0);
        assert!((n.l2 - 2.0).abs() < 1e-14);
        let gr = g(9, 256, 4);
        let n = norms(&Field3::from_fn(gr, |_, x2, _| (2.0 * PI * x2).sin()));
        assert!((n.sup - 1.0).abs() < 0.02);
        assert!((n.sup_grad - 2.0 * PI).abs() < 0.02 * 2.0 * PI);
        assert!((n.l2 - 0.5f64.sqrt()).abs() < 0.02 * 0.5f64.sqrt());
    }

    fn square(m: usize, f: impl Fn(f64, f64) -> f64) -> Slice2 {
        let mut s = Slice2::zeros(m + 1, m + 1);
        for j in 0..=m {
            for k in 0..=m {
                s.values[j * (m + 1) + k] = f(j as f64 / m as f64, k as f64 / m as f64);
            }
        }
        s
    }

    #[test]
    fn reflection_reproduces_even_and_odd_functions() {
        let m = 8;
        let even = extend_reflect(&square(m, |x, _| (PI * x).cos()), ReflectParity::SCALAR).unwrap();
        let odd = extend_reflect(&square(m, |x, _| (PI * x).sin()), ReflectParity::U2).unwrap();
        for j in 0..2 * m {
            // physical coordinate of torus node j is j/m on the period-2 cell
            let x = j as f64 / m as f64;
            for k in 0..2 * m {
                assert!((even.at(j, k) - (PI * x).cos()).abs() < 1e-14);
                assert!((odd.at(j, k) - (PI * x).sin()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn odd_reflection_needs_wall_zeros() {
        let r = extend_reflect(&square(4, |x, _| x + 1.0), ReflectParity::U2);
        assert!(matches!(r, Err(Error::Compatibility(_))));
        let r = extend_reflect(&square(4, |_, y| y + 1.0), ReflectParity::U3);
        assert!(matches!(r, Err(Error::Compatibility(_))));
    }

    #[test]
    fn field_csv_roundtrip() {
        let f = Field3::from_fn(g(5, 4, 4), |x1, x2, x3| x1 - 0.3 * x2 + x3.powi(3) / 7.0);
        let d = f.descriptor("rho");
        let back = Field3::from_csv(&d, &f.to_csv()).unwrap();
        assert_eq!(back, f);
        let mut bad = f.to_csv();
        bad.truncate(bad.len() / 2);
        assert!(Field3::from_csv(&d, &bad).is_err());
    }

    proptest! {
        #[test]
        fn reflected_even_data_is_mirror_symmetric(seed in proptest::collection::vec(-1.0f64..1.0, 25)) {
            let mut s = Slice2::zeros(5, 5);
            s.values.copy_from_slice(&seed);
            let e = extend_reflect(&s, ReflectParity::SCALAR).unwrap();
            for j in 0..8usize {
                for k in 0..8usize {
                    let mj = (8 - j) % 8;
                    let mk = (8 - k) % 8;
                    prop_assert_eq!(e.at(j, k), e.at(mj, k));
                    prop_assert_eq!(e.at(j, k), e.at(j, mk));
                }
            }
        }

        #[test]
        fn diff_commutes_with_lateral_shift(seed in proptest::collection::vec(-1.0f64..1.0, 5 * 4 * 6), axis in 0usize..3) {
            let gr = g(5, 4, 6);
            let f = Field3 { grid: gr, values: seed };
            let shift = |f: &Field3| Field3::from_fn(gr, |_, _, _| 0.0).values.iter().enumerate().map(|(n, _)| {
                let (i, j, k) = gr.ijk(n);
                f.at_wrap(i, j as isize + 1, k as isize)
            }).collect::<Vec<_>>();
            let ax = [Axis::X1, Axis::X2, Axis::X3][axis];
            let a = diff(&Field3 { grid: gr, values: shift(&f) }, ax);
            let b = shift(&diff(&f, ax));
            for (x, y) in a.values.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn diff_flips_reflection_parity(seed in proptest::collection::vec(-1.0f64..1.0, 25)) {
            let mut s = Slice2::zeros(5, 5);
            s.values.copy_from_slice(&seed);
            let e = extend_reflect(&s, ReflectParity::SCALAR).unwrap();
            let gr = g(5, 8, 8);
            let f = Field3 { grid: gr, values: (0..5).flat_map(|_| e.values.clone()).collect() };
            let d = diff(&f, Axis::X2);
            for j in 0..8usize {
                let mj = (8 - j) % 8;
                prop_assert!((d.at(2, j, 3) + d.at(2, mj, 3)).abs() < 1e-12);
            }
        }
    }
}
