//! Tracking + gradient objective
//!
//! ```text
//! J = ∫₀ᵀ∫_Ω |∇h|² + |∇q1|² + |∇q2|² + |h − u1d|² + |q1 − u2d|² + |q2 − u3d|²
//! ```
//!
//! Midpoint rule in space, trapezoidal rule over the stored time levels,
//! gradients from [`gradient_one_sided`].

use crate::error::{Result, SweError};
use crate::forward::Trajectory;
use crate::grid::{gradient_one_sided, ConservedState, Field, GridSpec, PerturbationShape, TargetField};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveBreakdown {
    pub j_total: f64,
    pub j_gradient: f64,
    pub j_misfit: f64,
    /// Spatial integral of `|∇U|²` at each stored level.
    pub gradient_series: Vec<f64>,
    /// Spatial integral of `|U − U_d|²` at each stored level.
    pub misfit_series: Vec<f64>,
}

/// Trapezoidal weights for the given (increasing) sample times.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for k in 1..n {
        let half = 0.5 * (times[k] - times[k - 1]);
        w[k - 1] += half;
        w[k] += half;
    }
    w
}

/// Per-cell integrands `(|∇U|², |U − U_d|²)` for one level, optionally
/// multiplied by `weight`.
fn level_integrals(state: &ConservedState, target: &ConservedState, grid: &GridSpec, weight: Option<&Field>) -> (f64, f64) {
    let mut jg = 0.0;
    let mut jm = 0.0;
    for k in 0..3 {
        let f = state.channel(k);
        let (gx, gy) = gradient_one_sided(grid, f);
        let d = target.channel(k);
        for idx in 0..grid.len() {
            let w = weight.map_or(1.0, |m| m.data[idx]);
            jg += w * (gx.data[idx] * gx.data[idx] + gy.data[idx] * gy.data[idx]);
            let e = f.data[idx] - d.data[idx];
            jm += w * e * e;
        }
    }
    let a = grid.cell_area();
    (jg * a, jm * a)
}

fn evaluate_weighted(traj: &Trajectory, target: &TargetField, grid: &GridSpec, weight: Option<&Field>) -> Result<ObjectiveBreakdown> {
    if traj.levels.iter().any(|s| !s.fits(grid)) {
        return Err(SweError::Shape("trajectory does not match grid".into()));
    }
    target.check(grid, traj.len())?;
    let w = trapezoid_weights(&traj.times());
    let mut gradient_series = Vec::with_capacity(traj.len());
    let mut misfit_series = Vec::with_capacity(traj.len());
    for (k, s) in traj.levels.iter().enumerate() {
        let (g, m) = level_integrals(s, target.at(k), grid, weight);
        gradient_series.push(g);
        misfit_series.push(m);
    }
    let j_gradient: f64 = w.iter().zip(&gradient_series).map(|(a, b)| a * b).sum();
    let j_misfit: f64 = w.iter().zip(&misfit_series).map(|(a, b)| a * b).sum();
    Ok(ObjectiveBreakdown { j_total: j_gradient + j_misfit, j_gradient, j_misfit, gradient_series, misfit_series })
}

pub fn evaluate_j(traj: &Trajectory, target: &TargetField, grid: &GridSpec) -> Result<ObjectiveBreakdown> {
    evaluate_weighted(traj, target, grid, None)
}

/// Objective with the integrand removed on cells whose centres lie in the hole.
pub fn evaluate_j_masked(traj: &Trajectory, target: &TargetField, grid: &GridSpec, hole: &PerturbationShape) -> Result<ObjectiveBreakdown> {
    hole.check_interior(grid)?;
    let mask = hole.outside_mask(grid);
    evaluate_weighted(traj, target, grid, Some(&mask))
}

/// `Dxᵀ·fx + Dyᵀ·fy` for the gradient stencil of [`gradient_one_sided`].
pub fn gradient_transpose(grid: &GridSpec, fx: &Field, fy: &Field) -> Field {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = Field::zeros(nx, ny);
    for j in 0..ny {
        for i in 0..nx {
            let vx = fx.at(i, j);
            if i == 0 {
                out.data[grid.idx(1, j)] += vx / grid.dx;
                out.data[grid.idx(0, j)] -= vx / grid.dx;
            } else if i == nx - 1 {
                out.data[grid.idx(i, j)] += vx / grid.dx;
                out.data[grid.idx(i - 1, j)] -= vx / grid.dx;
            } else {
                out.data[grid.idx(i + 1, j)] += vx / (2.0 * grid.dx);
                out.data[grid.idx(i - 1, j)] -= vx / (2.0 * grid.dx);
            }
            let vy = fy.at(i, j);
            if j == 0 {
                out.data[grid.idx(i, 1)] += vy / grid.dy;
                out.data[grid.idx(i, 0)] -= vy / grid.dy;
            } else if j == ny - 1 {
                out.data[grid.idx(i, j)] += vy / grid.dy;
                out.data[grid.idx(i, j - 1)] -= vy / grid.dy;
            } else {
                out.data[grid.idx(i, j + 1)] += vy / (2.0 * grid.dy);
                out.data[grid.idx(i, j - 1)] -= vy / (2.0 * grid.dy);
            }
        }
    }
    out
}

/// Source of the discrete adjoint: `−(1/(2V))·∂j/∂U` of the per-level
/// spatial integral `j`, i.e. `−2·DᵀD·U − 2·(U − U_d)`, the exact
/// counterpart of `2ΔU − 2(U − U_d)` for the quadrature above.
pub fn discrete_adjoint_source(state: &ConservedState, target: &ConservedState, grid: &GridSpec) -> ConservedState {
    let mut out = ConservedState::zeros(grid);
    for k in 0..3 {
        let f = state.channel(k);
        let (gx, gy) = gradient_one_sided(grid, f);
        let dtd = gradient_transpose(grid, &gx, &gy);
        let d = target.channel(k);
        let o = out.channel_mut(k);
        for idx in 0..grid.len() {
            o.data[idx] = -2.0 * dtd.data[idx] - 2.0 * (f.data[idx] - d.data[idx]);
        }
    }
    out
}
