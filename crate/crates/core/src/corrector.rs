//! Corrector `K` for a viscous hole: the weak identity
//!
//! ```text
//! ∫_ω Q(α)∇K : ∇φ = ∫_ω Q(α)G : ∇φ   for all φ
//! ```
//!
//! with `G = ∇U₀(x₀)` frozen. Only the viscous channels are constrained; the
//! height channel is fixed to zero.
//!
//! [`closed_form_corrector`] returns the gradient-matching representative
//! `∇K = G·1_ω`. [`solve_corrector_numeric`] is a P1 Galerkin solve on the
//! square patch `[−R, R]²` with natural boundary conditions; outside `ω` the
//! coefficient is [`EXTERIOR_WEIGHT`] instead of zero so the system selects
//! the representative with the smallest exterior energy.

use crate::error::{Result, SweError};
use crate::flux::Grad3;
use crate::grid::ViscosityParams;

/// Coefficient of the Galerkin form outside `ω`.
pub const EXTERIOR_WEIGHT: f64 = 1e-6;

const CG_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSolution {
    pub patch_radius: f64,
    /// Cells per side; the patch has `(n + 1)²` nodes.
    pub n: usize,
    pub h: f64,
    /// Nodal values of `K`, row-major in `(x, y)` from `(−R, −R)`.
    pub nodes: Vec<[f64; 3]>,
    /// Relative Galerkin residual `‖A K − b‖ / ‖b‖` per channel (0 when `b = 0`).
    pub residual: [f64; 3],
    pub iterations: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorField {
    pub g: Grad3,
    pub omega_radius: f64,
    /// Channels with non-zero viscosity.
    pub active: [bool; 3],
    pub patch: Option<PatchSolution>,
}

fn active_channels(visc: &ViscosityParams) -> [bool; 3] {
    let q = visc.q_diag();
    [false, q[1] > 0.0, q[2] > 0.0]
}

pub fn closed_form_corrector(g: &Grad3, visc: &ViscosityParams, omega_radius: f64) -> CorrectorField {
    CorrectorField { g: *g, omega_radius, active: active_channels(visc), patch: None }
}

impl CorrectorField {
    pub fn in_omega(&self, x: f64, y: f64) -> bool {
        x * x + y * y < self.omega_radius * self.omega_radius
    }

    /// `∇K` at reference point `(x, y)`.
    pub fn grad_at(&self, x: f64, y: f64) -> Grad3 {
        let mut out = [[0.0; 2]; 3];
        match &self.patch {
            None => {
                if self.in_omega(x, y) {
                    for k in 0..3 {
                        if self.active[k] {
                            out[k] = self.g[k];
                        }
                    }
                }
            }
            Some(p) => {
                let Some((tri, corners)) = p.locate(x, y) else { return out };
                for k in 0..3 {
                    if self.active[k] {
                        out[k] = p.tri_grad(tri, corners, k);
                    }
                }
            }
        }
        out
    }

    /// `K` at a reference point inside `ω` (closed form: `G·x`).
    pub fn value_at(&self, x: f64, y: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        match &self.patch {
            None => {
                for k in 0..3 {
                    if self.active[k] {
                        out[k] = self.g[k][0] * x + self.g[k][1] * y;
                    }
                }
            }
            Some(p) => {
                if let Some((tri, corners)) = p.locate(x, y) {
                    let (i, j) = corners;
                    let x0 = -p.patch_radius + i as f64 * p.h;
                    let y0 = -p.patch_radius + j as f64 * p.h;
                    let base = p.nodes[p.node(i, j)];
                    for k in 0..3 {
                        let gk = p.tri_grad(tri, corners, k);
                        out[k] = base[k] + gk[0] * (x - x0) + gk[1] * (y - y0);
                    }
                }
            }
        }
        out
    }

    /// `∫_ω Q(∇K − G) : ∇φ` by midpoint quadrature on an `m × m` grid over
    /// the bounding square of `ω`.
    pub fn weak_residual(&self, visc: &ViscosityParams, m: usize, test_grad: impl Fn(f64, f64) -> Grad3) -> f64 {
        let q = visc.q_diag();
        let r = self.omega_radius;
        let step = 2.0 * r / m as f64;
        let mut acc = 0.0;
        for b in 0..m {
            for a in 0..m {
                let x = -r + (a as f64 + 0.5) * step;
                let y = -r + (b as f64 + 0.5) * step;
                if !self.in_omega(x, y) {
                    continue;
                }
                let gk = self.grad_at(x, y);
                let gp = test_grad(x, y);
                for k in 0..3 {
                    if q[k] != 0.0 {
                        acc += q[k] * ((gk[k][0] - self.g[k][0]) * gp[k][0] + (gk[k][1] - self.g[k][1]) * gp[k][1]);
                    }
                }
            }
        }
        acc * step * step
    }
}

impl PatchSolution {
    #[inline]
    fn node(&self, i: usize, j: usize) -> usize {
        i + (self.n + 1) * j
    }

    /// Triangle (0 lower, 1 upper) and square containing `(x, y)`.
    fn locate(&self, x: f64, y: f64) -> Option<(usize, (usize, usize))> {
        let fx = (x + self.patch_radius) / self.h;
        let fy = (y + self.patch_radius) / self.h;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= self.n as f64 && fy <= self.n as f64) {
            return None;
        }
        let i = (fx.floor() as usize).min(self.n - 1);
        let j = (fy.floor() as usize).min(self.n - 1);
        let tri = if fx - i as f64 >= fy - j as f64 { 0 } else { 1 };
        Some((tri, (i, j)))
    }

    fn tri_grad(&self, tri: usize, (i, j): (usize, usize), k: usize) -> [f64; 2] {
        let v = |a: usize, b: usize| self.nodes[self.node(a, b)][k];
        let h = self.h;
        if tri == 0 {
            [(v(i + 1, j) - v(i, j)) / h, (v(i + 1, j + 1) - v(i + 1, j)) / h]
        } else {
            [(v(i + 1, j + 1) - v(i, j + 1)) / h, (v(i, j + 1) - v(i, j)) / h]
        }
    }
}

/// Triangle mesh of `[−R, R]²` with per-triangle coefficients.
struct PatchMesh {
    n: usize,
    h: f64,
    /// `[lower, upper]` coefficient per square.
    kappa: Vec<[f64; 2]>,
    inside: Vec<[bool; 2]>,
}

// Basis gradients (times h) of the three corners of each triangle type.
// lower: (i,j), (i+1,j), (i+1,j+1); upper: (i,j), (i+1,j+1), (i,j+1)
const LOWER: [((usize, usize), [f64; 2]); 3] = [((0, 0), [-1.0, 0.0]), ((1, 0), [1.0, -1.0]), ((1, 1), [0.0, 1.0])];
const UPPER: [((usize, usize), [f64; 2]); 3] = [((0, 0), [0.0, -1.0]), ((1, 1), [1.0, 0.0]), ((0, 1), [-1.0, 1.0])];

impl PatchMesh {
    fn new(r: f64, n: usize, omega_radius: f64) -> Self {
        let h = 2.0 * r / n as f64;
        let mut kappa = Vec::with_capacity(n * n);
        let mut inside = Vec::with_capacity(n * n);
        let r2 = omega_radius * omega_radius;
        for j in 0..n {
            for i in 0..n {
                let x0 = -r + i as f64 * h;
                let y0 = -r + j as f64 * h;
                // centroids of the two triangles
                let lo = (x0 + 2.0 * h / 3.0, y0 + h / 3.0);
                let up = (x0 + h / 3.0, y0 + 2.0 * h / 3.0);
                let inl = lo.0 * lo.0 + lo.1 * lo.1 < r2;
                let inu = up.0 * up.0 + up.1 * up.1 < r2;
                inside.push([inl, inu]);
                kappa.push([if inl { 1.0 } else { EXTERIOR_WEIGHT }, if inu { 1.0 } else { EXTERIOR_WEIGHT }]);
            }
        }
        PatchMesh { n, h, kappa, inside }
    }

    fn n_nodes(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    #[inline]
    fn node(&self, i: usize, j: usize) -> usize {
        i + (self.n + 1) * j
    }

    /// `y = A x` for the weighted P1 stiffness matrix.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        // each triangle has area h²/2 and basis gradients of size 1/h
        for j in 0..self.n {
            for i in 0..self.n {
                let sq = i + self.n * j;
                for (t, corners) in [LOWER, UPPER].iter().enumerate() {
                    let w = 0.5 * self.kappa[sq][t];
                    let ids = corners.map(|((a, b), _)| self.node(i + a, j + b));
                    let mut gx = 0.0;
                    let mut gy = 0.0;
                    for (c, &id) in corners.iter().zip(&ids) {
                        gx += c.1[0] * x[id];
                        gy += c.1[1] * x[id];
                    }
                    for (c, &id) in corners.iter().zip(&ids) {
                        y[id] += w * (c.1[0] * gx + c.1[1] * gy);
                    }
                }
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_nodes()];
        for j in 0..self.n {
            for i in 0..self.n {
                let sq = i + self.n * j;
                for (t, corners) in [LOWER, UPPER].iter().enumerate() {
                    let w = 0.5 * self.kappa[sq][t];
                    for ((a, b), gr) in corners.iter() {
                        d[self.node(i + a, j + b)] += w * (gr[0] * gr[0] + gr[1] * gr[1]);
                    }
                }
            }
        }
        d
    }

    /// `b_i = ∫_ω G·∇φ_i`
    fn rhs(&self, gk: [f64; 2]) -> Vec<f64> {
        let mut b = vec![0.0; self.n_nodes()];
        // area h²/2 times gradient 1/h
        let s = 0.5 * self.h;
        for j in 0..self.n {
            for i in 0..self.n {
                let sq = i + self.n * j;
                for (t, corners) in [LOWER, UPPER].iter().enumerate() {
                    if !self.inside[sq][t] {
                        continue;
                    }
                    for ((a, bb), gr) in corners.iter() {
                        b[self.node(i + a, j + bb)] += s * (gk[0] * gr[0] + gk[1] * gr[1]);
                    }
                }
            }
        }
        b
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Jacobi-preconditioned CG on the (singular, consistent) patch system.
fn pcg(mesh: &PatchMesh, b: &[f64], diag: &[f64], max_iter: usize) -> Result<(Vec<f64>, f64, usize)> {
    let nn = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; nn];
    if bnorm == 0.0 {
        return Ok((x, 0.0, 0));
    }
    let mut r = b.to_vec();
    remove_mean(&mut r);
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; nn];
    for it in 0..max_iter {
        mesh.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..nn {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = dot(&r, &r).sqrt();
        if rn <= CG_TOL * bnorm {
            remove_mean(&mut x);
            // true residual
            mesh.apply(&x, &mut ap);
            let res = ap.iter().zip(b).map(|(a, bb)| (a - bb) * (a - bb)).sum::<f64>().sqrt() / bnorm;
            return Ok((x, res, it + 1));
        }
        for i in 0..nn {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..nn {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SweError::Solver(format!("corrector CG stalled after {max_iter} iterations")))
}

/// Galerkin solve on `[−R, R]²` with `n × n` squares; `pin` is added to
/// the zero-mean solution.
pub fn solve_corrector_numeric(
    g: &Grad3,
    visc: &ViscosityParams,
    omega_radius: f64,
    patch_radius: f64,
    n: usize,
    pin: f64,
) -> Result<CorrectorField> {
    if !(patch_radius >= 3.0 * omega_radius) {
        return Err(SweError::Domain(format!("patch radius {patch_radius} must be at least 3x the inclusion radius {omega_radius}")));
    }
    if n < 8 {
        return Err(SweError::Domain(format!("patch resolution {n} too coarse")));
    }
    let mesh = PatchMesh::new(patch_radius, n, omega_radius);
    let diag = mesh.diagonal();
    let active = active_channels(visc);
    let mut nodes = vec![[0.0; 3]; mesh.n_nodes()];
    let mut residual = [0.0; 3];
    let mut iterations = [0; 3];
    for k in 0..3 {
        if !active[k] {
            continue;
        }
        let b = mesh.rhs(g[k]);
        let (x, res, it) = pcg(&mesh, &b, &diag, 50 * mesh.n_nodes())?;
        for (node, v) in nodes.iter_mut().zip(&x) {
            node[k] = v + pin;
        }
        residual[k] = res;
        iterations[k] = it;
    }
    let patch = PatchSolution { patch_radius, n, h: mesh.h, nodes, residual, iterations };
    Ok(CorrectorField { g: *g, omega_radius, active, patch: Some(patch) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn visc() -> ViscosityParams {
        ViscosityParams::new(0.05, 0.02).unwrap()
    }

    #[test]
    fn zero_gradient_gives_zero_corrector() {
        let z = [[0.0; 2]; 3];
        let c = closed_form_corrector(&z, &visc(), 1.0);
        assert_eq!(c.grad_at(0.1, 0.2), z);
        let n = solve_corrector_numeric(&z, &visc(), 1.0, 3.0, 16, 0.0).unwrap();
        assert!(n.patch.as_ref().unwrap().nodes.iter().all(|v| v.iter().all(|x| x.abs() <= 1e-12)));
    }

    #[test]
    fn height_channel_is_always_zero() {
        let g = [[1.0, 2.0], [0.5, -1.0], [0.3, 0.7]];
        let c = closed_form_corrector(&g, &visc(), 1.0);
        assert_eq!(c.grad_at(0.0, 0.0)[0], [0.0, 0.0]);
        let n = solve_corrector_numeric(&g, &visc(), 1.0, 3.0, 24, 0.0).unwrap();
        assert_eq!(n.grad_at(0.2, -0.1)[0], [0.0, 0.0]);
        let inviscid = closed_form_corrector(&g, &ViscosityParams::inviscid(), 1.0);
        assert_eq!(inviscid.grad_at(0.0, 0.0), [[0.0; 2]; 3]);
    }

    #[test]
    fn closed_form_weak_residual_vanishes_for_polynomials() {
        let g = [[0.0, 0.0], [1.0, 0.0], [-0.4, 0.9]];
        let c = closed_form_corrector(&g, &visc(), 1.0);
        // ψ from the monomial basis up to degree 3
        for (a, b) in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)] {
            let tg = move |x: f64, y: f64| {
                let dx = if a > 0 { a as f64 * x.powi(a - 1) * y.powi(b) } else { 0.0 };
                let dy = if b > 0 { b as f64 * x.powi(a) * y.powi(b - 1) } else { 0.0 };
                [[dx, dy], [dx, dy], [dx, dy]]
            };
            assert_eq!(c.weak_residual(&visc(), 64, tg), 0.0);
        }
    }

    #[test]
    fn numeric_solve_recovers_gradient_inside_omega() {
        let g = [[0.0, 0.0], [1.0, 0.0], [0.0, -0.5]];
        let c = solve_corrector_numeric(&g, &visc(), 1.0, 3.0, 48, 0.0).unwrap();
        let p = c.patch.as_ref().unwrap();
        assert!(p.residual[1] <= 1e-10 && p.residual[2] <= 1e-10);
        for (x, y) in [(0.0, 0.0), (0.3, -0.2), (-0.5, 0.4)] {
            let gk = c.grad_at(x, y);
            assert!((gk[1][0] - 1.0).abs() < 1e-3 && gk[1][1].abs() < 1e-3, "{gk:?}");
            assert!((gk[2][1] + 0.5).abs() < 1e-3, "{gk:?}");
        }
    }

    #[test]
    fn pin_shifts_values_not_gradients() {
        let g = [[0.0, 0.0], [0.7, 0.2], [0.0, 0.0]];
        let a = solve_corrector_numeric(&g, &visc(), 1.0, 3.0, 24, 0.0).unwrap();
        let b = solve_corrector_numeric(&g, &visc(), 1.0, 3.0, 24, 2.5).unwrap();
        for (x, y) in [(0.1, 0.1), (-0.6, 0.2), (2.0, -2.5)] {
            let (ga, gb) = (a.grad_at(x, y), b.grad_at(x, y));
            assert!((0..3).all(|k| (ga[k][0] - gb[k][0]).abs() < 1e-12 && (ga[k][1] - gb[k][1]).abs() < 1e-12));
            assert!((b.value_at(x, y)[1] - a.value_at(x, y)[1] - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn patch_radius_must_cover_three_radii() {
        let g = [[0.0; 2]; 3];
        assert!(matches!(solve_corrector_numeric(&g, &visc(), 1.0, 2.0, 32, 0.0), Err(SweError::Domain(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn numeric_corrector_is_linear(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0) {
            let g1 = [[0.0, 0.0], [a, b], [c, 0.0]];
            let g2 = [[0.0, 0.0], [0.0, d], [b, a]];
            let g12 = [[0.0, 0.0], [a, b + d], [c + b, a]];
            let s = |g: &Grad3| solve_corrector_numeric(g, &visc(), 1.0, 3.0, 16, 0.0).unwrap();
            let (k1, k2, k12) = (s(&g1), s(&g2), s(&g12));
            for (x, y) in [(0.0, 0.1), (0.5, -0.5), (-2.0, 1.0)] {
                let (u, v, w) = (k1.grad_at(x, y), k2.grad_at(x, y), k12.grad_at(x, y));
                for k in 0..3 {
                    for l in 0..2 {
                        prop_assert!((u[k][l] + v[k][l] - w[k][l]).abs() <= 1e-8);
                    }
                }
            }
        }
    }
}
