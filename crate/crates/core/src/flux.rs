//! Pointwise algebra of the shallow water operators.
//!
//! State at a cell is `U = (h, q1, q2)` with `q1 = hu`, `q2 = hv`.
//!
//! ```text
//! F(U) = [ q1              q2             ]     S(U) = [ 0         ]
//!        [ q1²/h + g h²/2  q1 q2/h        ]            [ -g h ψ_x  ]
//!        [ q1 q2/h         q2²/h + g h²/2 ]            [ -g h ψ_y  ]
//! ```
//!
//! The adjoint matrices are `A = -(∂F_x/∂U)ᵀ`, `B = -(∂F_y/∂U)ᵀ` and
//! `C = -(∂S/∂U)ᵀ`.

use crate::error::{Result, SweError};
use crate::grid::H_MIN;

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];
/// Spatial gradient of a three-component field: row `i` is `(∂ₓUᵢ, ∂ᵧUᵢ)`.
pub type Grad3 = [[f64; 2]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState {
    pub h: f64,
    pub q1: f64,
    pub q2: f64,
}

impl CellState {
    pub fn new(h: f64, q1: f64, q2: f64) -> Self {
        CellState { h, q1, q2 }
    }

    pub fn from_array(v: Vec3) -> Self {
        CellState { h: v[0], q1: v[1], q2: v[2] }
    }

    pub fn to_array(self) -> Vec3 {
        [self.h, self.q1, self.q2]
    }

    pub fn check(&self) -> Result<()> {
        if self.h.is_finite() && self.h >= H_MIN {
            Ok(())
        } else {
            Err(SweError::Domain(format!("h = {:e} below floor {H_MIN:e}", self.h)))
        }
    }
}

/// 3×2 flux; column 0 is the x-flux, column 1 the y-flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxTensor(pub [[f64; 2]; 3]);

impl FluxTensor {
    pub fn x_flux(&self) -> Vec3 {
        [self.0[0][0], self.0[1][0], self.0[2][0]]
    }

    pub fn y_flux(&self) -> Vec3 {
        [self.0[0][1], self.0[1][1], self.0[2][1]]
    }
}

pub fn flux(c: CellState, g: f64) -> Result<FluxTensor> {
    c.check()?;
    Ok(flux_raw(c, g))
}

#[inline]
pub(crate) fn flux_raw(c: CellState, g: f64) -> FluxTensor {
    let CellState { h, q1, q2 } = c;
    let p = 0.5 * g * h * h;
    let q12 = q1 * q2 / h;
    FluxTensor([[q1, q2], [q1 * q1 / h + p, q12], [q12, q2 * q2 / h + p]])
}

/// `S(U) = (0, -g h ψ_x, -g h ψ_y)`.
pub fn source(c: CellState, dpsi: (f64, f64), g: f64) -> Result<Vec3> {
    c.check()?;
    Ok(source_raw(c, dpsi, g))
}

#[inline]
pub(crate) fn source_raw(c: CellState, dpsi: (f64, f64), g: f64) -> Vec3 {
    [0.0, -g * c.h * dpsi.0, -g * c.h * dpsi.1]
}

/// Exact Jacobians `(∂F_x/∂U, ∂F_y/∂U)`.
pub fn flux_jacobians(c: CellState, g: f64) -> Result<(Mat3, Mat3)> {
    c.check()?;
    Ok(flux_jacobians_raw(c, g))
}

#[inline]
pub(crate) fn flux_jacobians_raw(c: CellState, g: f64) -> (Mat3, Mat3) {
    let u = c.q1 / c.h;
    let v = c.q2 / c.h;
    let gh = g * c.h;
    let jx = [[0.0, 1.0, 0.0], [gh - u * u, 2.0 * u, 0.0], [-u * v, v, u]];
    let jy = [[0.0, 0.0, 1.0], [-u * v, v, u], [gh - v * v, 0.0, 2.0 * v]];
    (jx, jy)
}

/// Adjoint matrices `(A, B, C)` of the backward system
/// `-∂P/∂t + A P_x + B P_y + C P = 2ΔU - 2(U - U_d)`.
pub fn adjoint_matrices(c: CellState, dpsi: (f64, f64), g: f64) -> Result<(Mat3, Mat3, Mat3)> {
    c.check()?;
    Ok(adjoint_matrices_raw(c, dpsi, g))
}

#[inline]
pub(crate) fn adjoint_matrices_raw(c: CellState, dpsi: (f64, f64), g: f64) -> (Mat3, Mat3, Mat3) {
    let CellState { h, q1, q2 } = c;
    let h2 = h * h;
    let gh = g * h;
    let a = [
        [0.0, q1 * q1 / h2 - gh, q1 * q2 / h2],
        [-1.0, -2.0 * q1 / h, -q2 / h],
        [0.0, 0.0, -q1 / h],
    ];
    let b = [
        [0.0, q1 * q2 / h2, q2 * q2 / h2 - gh],
        [0.0, -q2 / h, 0.0],
        [-1.0, -q1 / h, -2.0 * q2 / h],
    ];
    let cm = [[0.0, g * dpsi.0, g * dpsi.1], [0.0; 3], [0.0; 3]];
    (a, b, cm)
}

/// Adjoint forcing `2·ΔU - 2·(U - U_d)`, componentwise.
///
/// The second and third components pair `Δq1` with `u_{2d}` and `Δq2` with
/// `u_{3d}`, matching the misfit `|q1 - u_{2d}|² + |q2 - u_{3d}|²` of the
/// objective.
pub fn adjoint_source(c: CellState, lap: Vec3, target: Vec3) -> Vec3 {
    let u = c.to_array();
    [
        2.0 * lap[0] - 2.0 * (u[0] - target[0]),
        2.0 * lap[1] - 2.0 * (u[1] - target[1]),
        2.0 * lap[2] - 2.0 * (u[2] - target[2]),
    ]
}

/// Flux divergence in quasi-linear form, `(∂F_x/∂U)·G₀ + (∂F_y/∂U)·G₁`,
/// where `G₀`, `G₁` are the x and y columns of the gradient `grad`.
///
/// At frozen `c` this is linear in `grad`.
pub fn flux_divergence_form(c: CellState, grad: &Grad3, g: f64) -> Vec3 {
    let (jx, jy) = flux_jacobians_raw(c, g);
    let gx = [grad[0][0], grad[1][0], grad[2][0]];
    let gy = [grad[0][1], grad[1][1], grad[2][1]];
    add3(matvec(&jx, &gx), matvec(&jy, &gy))
}

#[inline]
pub fn matvec(m: &Mat3, v: &Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

#[inline]
pub fn matvec_t(m: &Mat3, v: &Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}

#[inline]
pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
