//! Pointwise topological derivative of the objective for a viscous hole
//! `ω_ε = x₀ + εω`, split into the nine terms of the averaged-adjoint
//! expansion.
//!
//! All fields are frozen at `x₀` (bilinear in space, linear in time between
//! stored levels) and integrated in time with the trapezoidal rule over the
//! forward steps. The corrector is the gradient-matching field
//! `∇K = G·1_ω` in the viscous channels, so every `(1/|ω|)∫_ω` average
//! reduces to the integrand at the frozen arguments.

use rayon::prelude::*;

use crate::adjoint::AdjointTrajectory;
use crate::error::{Result, SweError};
use crate::flux::{flux_divergence_form, source_raw, CellState, Grad3, Vec3};
use crate::forward::{SweModel, Trajectory};
use crate::grid::{Field, GridSpec, TargetField};

/// Minimum distance of a sample point to the walls, in cells.
pub const MIN_WALL_CELLS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TdBreakdown {
    pub r1_a1: f64,
    pub r2_a1: f64,
    pub dl_a1: f64,
    pub r1_a2: f64,
    pub r2_a2: f64,
    pub dl_a2: f64,
    pub r1_j: f64,
    pub r2_j: f64,
    pub dl_j: f64,
    pub total: f64,
}

impl TdBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.r1_a1 + self.r2_a1 + self.dl_a1 + self.r1_a2 + self.r2_a2 + self.dl_a2 + self.r1_j + self.r2_j + self.dl_j;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdSample {
    pub x: f64,
    pub y: f64,
    pub breakdown: TdBreakdown,
}

/// Value and gradient of a three-channel field at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct PointValue {
    v: Vec3,
    grad: Grad3,
}

impl PointValue {
    fn blend(a: &PointValue, b: &PointValue, w: f64) -> PointValue {
        let mut out = PointValue::default();
        for k in 0..3 {
            out.v[k] = (1.0 - w) * a.v[k] + w * b.v[k];
            for l in 0..2 {
                out.grad[k][l] = (1.0 - w) * a.grad[k][l] + w * b.grad[k][l];
            }
        }
        out
    }
}

#[inline]
fn cell_grad(f: &Field, grid: &GridSpec, i: usize, j: usize) -> [f64; 2] {
    let gx = if i == 0 {
        (f.at(1, j) - f.at(0, j)) / grid.dx
    } else if i == grid.nx - 1 {
        (f.at(i, j) - f.at(i - 1, j)) / grid.dx
    } else {
        (f.at(i + 1, j) - f.at(i - 1, j)) / (2.0 * grid.dx)
    };
    let gy = if j == 0 {
        (f.at(i, 1) - f.at(i, 0)) / grid.dy
    } else if j == grid.ny - 1 {
        (f.at(i, j) - f.at(i, j - 1)) / grid.dy
    } else {
        (f.at(i, j + 1) - f.at(i, j - 1)) / (2.0 * grid.dy)
    };
    [gx, gy]
}

/// Bilinear stencil `(i0, j0, tx, ty)` around `(x, y)`.
#[derive(Debug, Clone, Copy)]
struct Stencil {
    i0: usize,
    j0: usize,
    tx: f64,
    ty: f64,
}

impl Stencil {
    fn new(grid: &GridSpec, x: f64, y: f64) -> Self {
        let fx = x / grid.dx - 0.5;
        let fy = y / grid.dy - 0.5;
        let i0 = (fx.floor().max(0.0) as usize).min(grid.nx - 2);
        let j0 = (fy.floor().max(0.0) as usize).min(grid.ny - 2);
        Stencil { i0, j0, tx: fx - i0 as f64, ty: fy - j0 as f64 }
    }

    fn weights(&self) -> [(usize, usize, f64); 4] {
        let (i, j, tx, ty) = (self.i0, self.j0, self.tx, self.ty);
        [
            (i, j, (1.0 - tx) * (1.0 - ty)),
            (i + 1, j, tx * (1.0 - ty)),
            (i, j + 1, (1.0 - tx) * ty),
            (i + 1, j + 1, tx * ty),
        ]
    }

    fn scalar(&self, f: &Field) -> f64 {
        self.weights().iter().map(|&(i, j, w)| w * f.at(i, j)).sum()
    }

    fn sample(&self, grid: &GridSpec, channels: [&Field; 3]) -> PointValue {
        let mut out = PointValue::default();
        for (k, f) in channels.iter().enumerate() {
            for &(i, j, w) in self.weights().iter() {
                out.v[k] += w * f.at(i, j);
                let g = cell_grad(f, grid, i, j);
                out.grad[k][0] += w * g[0];
                out.grad[k][1] += w * g[1];
            }
        }
        out
    }
}

/// Inputs shared by every sample point.
pub struct TdContext<'a> {
    pub forward: &'a Trajectory,
    pub adjoint: &'a AdjointTrajectory,
    pub model: &'a SweModel,
    pub target: &'a TargetField,
}

impl<'a> TdContext<'a> {
    pub fn new(forward: &'a Trajectory, adjoint: &'a AdjointTrajectory, model: &'a SweModel, target: &'a TargetField) -> Result<Self> {
        let n = *forward.steps.last().ok_or_else(|| SweError::Trajectory("empty forward trajectory".into()))?;
        if adjoint.len() != n + 1 {
            return Err(SweError::Trajectory(format!("adjoint has {} levels, forward run has {} steps", adjoint.len(), n)));
        }
        if forward.steps[0] != 0 {
            return Err(SweError::Trajectory("forward trajectory must start at step 0".into()));
        }
        target.check(&model.grid, forward.len())?;
        Ok(TdContext { forward, adjoint, model, target })
    }

    fn n_steps(&self) -> usize {
        *self.forward.steps.last().unwrap()
    }

    /// Forward value/gradient and target at step `n`.
    fn forward_at(&self, st: &Stencil, n: usize) -> (PointValue, Vec3) {
        let grid = &self.model.grid;
        let level = |k: usize| {
            let s = &self.forward.levels[k];
            let d = self.target.at(k);
            let pv = st.sample(grid, [&s.h, &s.q1, &s.q2]);
            let dv = [st.scalar(&d.h), st.scalar(&d.q1), st.scalar(&d.q2)];
            (pv, dv)
        };
        match self.forward.steps.binary_search(&n) {
            Ok(k) => level(k),
            Err(k) => {
                let (s0, s1) = (self.forward.steps[k - 1], self.forward.steps[k]);
                let w = (n - s0) as f64 / (s1 - s0) as f64;
                let (a, da) = level(k - 1);
                let (b, db) = level(k);
                let d = [0, 1, 2].map(|c| (1.0 - w) * da[c] + w * db[c]);
                (PointValue::blend(&a, &b, w), d)
            }
        }
    }

    pub fn evaluate(&self, x: f64, y: f64) -> Result<TdSample> {
        let grid = &self.model.grid;
        if !(x.is_finite() && y.is_finite()) || grid.wall_distance_cells(x, y) < MIN_WALL_CELLS {
            return Err(SweError::OutOfDomain { x, y, msg: format!("sample points must be at least {MIN_WALL_CELLS} cells from the walls") });
        }
        let st = Stencil::new(grid, x, y);
        let g = grid.g;
        let dt = grid.dt;
        let q = self.model.visc.q_diag();
        let viscous = !self.model.visc.is_zero();
        let dpsi = (st.scalar(&self.model.bathy.dpsi_dx), st.scalar(&self.model.bathy.dpsi_dy));
        let n = self.n_steps();

        let fwd: Vec<(PointValue, Vec3)> = (0..=n).map(|m| self.forward_at(&st, m)).collect();
        let mut b = TdBreakdown::default();
        for m in 0..=n {
            let w = if n == 0 {
                0.0
            } else if m == 0 || m == n {
                0.5 * dt
            } else {
                dt
            };
            let (u, ud) = &fwd[m];
            let p = {
                let s = &self.adjoint.levels[m];
                st.sample(grid, [&s.p1, &s.p2, &s.p3])
            };
            let ut: Vec3 = if n == 0 {
                [0.0; 3]
            } else if m == 0 {
                [0, 1, 2].map(|k| (fwd[1].0.v[k] - fwd[0].0.v[k]) / dt)
            } else if m == n {
                [0, 1, 2].map(|k| (fwd[n].0.v[k] - fwd[n - 1].0.v[k]) / dt)
            } else {
                [0, 1, 2].map(|k| (fwd[m + 1].0.v[k] - fwd[m - 1].0.v[k]) / (2.0 * dt))
            };
            let c = CellState { h: u.v[0], q1: u.v[1], q2: u.v[2] };
            let src = source_raw(c, dpsi, g);
            let div = flux_divergence_form(c, &u.grad, g);
            let a1 = |div: Vec3| [0, 1, 2].map(|k| ut[k] + div[k] - src[k]);
            let dot = |a: Vec3, b: Vec3| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];

            b.dl_a1 += w * -dot(a1(div), p.v);

            let mut jg = 0.0;
            let mut jm = 0.0;
            for k in 0..3 {
                jg += u.grad[k][0] * u.grad[k][0] + u.grad[k][1] * u.grad[k][1];
                jm += (u.v[k] - ud[k]) * (u.v[k] - ud[k]);
            }
            b.dl_j += w * -(jg + jm);

            if viscous {
                let mut gk: Grad3 = [[0.0; 2]; 3];
                let mut qgp = 0.0;
                for k in 0..3 {
                    if q[k] != 0.0 {
                        gk[k] = u.grad[k];
                        qgp += q[k] * (u.grad[k][0] * p.grad[k][0] + u.grad[k][1] * p.grad[k][1]);
                    }
                }
                let mut shifted = u.grad;
                for k in 0..3 {
                    shifted[k][0] += gk[k][0];
                    shifted[k][1] += gk[k][1];
                }
                let lin = flux_divergence_form(c, &gk, g);
                let a_shift = a1(flux_divergence_form(c, &shifted, g));
                let a_base = a1(div);
                let rem = [0, 1, 2].map(|k| a_shift[k] - a_base[k] - lin[k]);
                b.r1_a1 += w * dot(rem, p.v);
                b.r2_a1 += w * (0.0 - dot(lin, p.v));
                b.dl_a2 += w * (0.0 - qgp);
                b.r2_a2 += w * (0.0 - qgp);
            }
        }
        Ok(TdSample { x, y, breakdown: b.finish() })
    }

    /// Evaluates every point (in parallel), returned in grid order
    /// (row-major by containing cell). Per-point failures are kept in place.
    pub fn field(&self, points: &[(f64, f64)]) -> Vec<(f64, f64, Result<TdSample>)> {
        let grid = &self.model.grid;
        let mut sorted: Vec<(f64, f64)> = points.to_vec();
        sorted.sort_by(|a, b| grid_order_key(grid, *a).partial_cmp(&grid_order_key(grid, *b)).unwrap_or(std::cmp::Ordering::Equal));
        sorted.par_iter().map(|&(x, y)| (x, y, self.evaluate(x, y))).collect()
    }
}

fn grid_order_key(grid: &GridSpec, (x, y): (f64, f64)) -> (f64, f64, f64, f64) {
    ((y / grid.dy).floor(), (x / grid.dx).floor(), y, x)
}

/// Cell centres at least [`MIN_WALL_CELLS`] from the walls, every `stride` cells.
pub fn interior_sweep(grid: &GridSpec, stride: usize) -> Vec<(f64, f64)> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    for j in (0..grid.ny).step_by(stride) {
        for i in (0..grid.nx).step_by(stride) {
            let (x, y) = (grid.x_center(i), grid.y_center(j));
            if grid.wall_distance_cells(x, y) >= MIN_WALL_CELLS {
                out.push((x, y));
            }
        }
    }
    out
}

/// Convenience wrapper around [`TdContext::evaluate`].
pub fn evaluate_td(
    x0: (f64, f64),
    forward: &Trajectory,
    adjoint: &AdjointTrajectory,
    model: &SweModel,
    target: &TargetField,
) -> Result<TdSample> {
    TdContext::new(forward, adjoint, model, target)?.evaluate(x0.0, x0.1)
}
