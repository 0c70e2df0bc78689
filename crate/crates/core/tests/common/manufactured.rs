//! Manufactured coupled elliptic problem with smooth synthetic coefficients
//! and a hand-differentiated continuous operator.

use std::f64::consts::PI;

use epflow::elliptic::{AxialCoefficients, EllipticProblem};
use epflow::grid::{Field3, Grid3, Slice2};

/// Smooth synthetic coefficients and their axial derivatives.
pub struct Synthetic;

impl Synthetic {
    pub fn k(x: f64) -> f64 {
        2.5 + 0.5 * x
    }
    pub fn d1(x: f64) -> (f64, f64) {
        (0.2 - 0.1 * x, -0.1)
    }
    pub fn d2(x: f64) -> f64 {
        -0.3 + 0.2 * x
    }
    pub fn d5(x: f64) -> (f64, f64) {
        (0.15 * x, 0.15)
    }
    pub fn zeroth(x: f64) -> f64 {
        0.6 + 0.1 * x
    }
    pub fn coupling(x: f64) -> f64 {
        0.25 - 0.1 * x
    }
    pub fn rho0(x: f64) -> f64 {
        1.2 + 0.3 * x
    }
    pub fn w2(x: [f64; 3]) -> (f64, f64) {
        let v = 0.05 * (1.0 + x[0]);
        (
            v * (2.0 * PI * x[1]).sin() * (2.0 * PI * x[2]).cos(),
            v * 2.0 * PI * (2.0 * PI * x[1]).cos() * (2.0 * PI * x[2]).cos(),
        )
    }
    pub fn w3(x: [f64; 3]) -> (f64, f64) {
        (
            0.04 * (2.0 * PI * x[1]).cos() * (2.0 * PI * x[2]).sin(),
            0.04 * 2.0 * PI * (2.0 * PI * x[1]).cos() * (2.0 * PI * x[2]).cos(),
        )
    }

    pub fn coeffs(n1: usize) -> AxialCoefficients {
        let xs: Vec<f64> = (0..n1).map(|i| i as f64 / (n1 - 1) as f64).collect();
        let map = |f: &dyn Fn(f64) -> f64| xs.iter().map(|&x| f(x)).collect::<Vec<_>>();
        AxialCoefficients {
            k: map(&Self::k),
            d1: map(&|x| Self::d1(x).0),
            d2: map(&Self::d2),
            d5: map(&|x| Self::d5(x).0),
            zeroth: map(&Self::zeroth),
            coupling: map(&Self::coupling),
            rho0: map(&Self::rho0),
        }
    }
}

// W₁* = C(x₁)cos(2πx₂), W₅* = C(x₁)cos(2πx₃), C = cos(πx₁/2)
pub fn c(x: f64) -> [f64; 3] {
    let w = PI / 2.0;
    [(w * x).cos(), -w * (w * x).sin(), -w * w * (w * x).cos()]
}

pub fn exact(x: [f64; 3]) -> (f64, f64) {
    let cc = c(x[0])[0];
    (cc * (2.0 * PI * x[1]).cos(), cc * (2.0 * PI * x[2]).cos())
}

/// Continuous operator applied by hand-differentiation.
pub fn oracle(x: [f64; 3]) -> (f64, f64) {
    let [c0, c1, c2] = c(x[0]);
    let (cy, sy) = ((2.0 * PI * x[1]).cos(), (2.0 * PI * x[1]).sin());
    let (cz, _) = ((2.0 * PI * x[2]).cos(), (2.0 * PI * x[2]).sin());
    let q2 = 4.0 * PI * PI;
    let (w1, w1x, w1xx) = (c0 * cy, c1 * cy, c2 * cy);
    let (w1y, w1yy) = (-2.0 * PI * c0 * sy, -q2 * c0 * cy);
    let w1xy = -2.0 * PI * c1 * sy;
    let (w5, w5x, w5xx) = (c0 * cz, c1 * cz, c2 * cz);
    let w5zz = -q2 * c0 * cz;

    let k = Synthetic::k(x[0]);
    let (a, ax) = (k - 1.0, 0.5);
    let (d1, d1x) = Synthetic::d1(x[0]);
    let (d5, d5x) = Synthetic::d5(x[0]);
    let d2 = Synthetic::d2(x[0]);
    let (tw2, tw2y) = Synthetic::w2(x);
    let (_, tw3z) = Synthetic::w3(x);

    let q = a * w1x - d1 * w1 - d5 * w5;
    let qx = ax * w1x + a * w1xx - d1x * w1 - d1 * w1x - d5x * w5 - d5 * w5x;
    // ∂₃W₁ ≡ 0 here, so the ∂₃ cross flux only sees ∂₃W̃₃
    let cross2 = a * (tw2y * w1x + tw2 * w1xy);
    let cross3 = a * tw3z * w1x;
    let l1 = qx + cross2 + k * w1yy + cross3 + d2 * q - Synthetic::zeroth(x[0]) * w1 - Synthetic::coupling(x[0]) * w5x;
    let l5 = w5xx + w5zz - Synthetic::rho0(x[0]) * w1;
    let _ = w1y;
    (l1, l5)
}

pub fn manufactured(n1: usize, n2: usize) -> EllipticProblem {
    let g = Grid3::new(n1, n2, n2).unwrap();
    let mut p = EllipticProblem::homogeneous(g, Synthetic::coeffs(n1));
    p.w2 = Field3::from_fn(g, |a, b, c| Synthetic::w2([a, b, c]).0);
    p.w3 = Field3::from_fn(g, |a, b, c| Synthetic::w3([a, b, c]).0);
    p.rhs1 = Field3::from_fn(g, |a, b, c| oracle([a, b, c]).0);
    p.rhs5 = Field3::from_fn(g, |a, b, c| oracle([a, b, c]).1);
    let mut flux = Slice2::zeros(n2, n2);
    for j in 0..n2 {
        for k in 0..n2 {
            let x = g.coords(0, j, k);
            let (w1, w5) = exact(x);
            let w1x = c(0.0)[1] * (2.0 * PI * x[1]).cos();
            flux.values[j * n2 + k] =
                (Synthetic::k(0.0) - 1.0) * w1x - Synthetic::d1(0.0).0 * w1 - Synthetic::d5(0.0).0 * w5;
        }
    }
    p.inlet_flux = flux;
    p
}
