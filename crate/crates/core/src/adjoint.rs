//! Backward adjoint solves.
//!
//! Two modes share the time levels of the forward run:
//!
//! * [`AdjointMode::Continuous`] discretises the strong form
//!   `−∂P/∂t + A P_x + B P_y + C P = S`, `P(T) = 0`, with centred `P_x`,
//!   mirror ghosts (`p1` even, `p2`/`p3` odd across x/y walls), the forward
//!   Lax–Friedrichs dissipation and, when `α > 0`, the self-adjoint viscous
//!   term. Coefficients are taken at the known level `n + 1`.
//! * [`AdjointMode::Discrete`] is the exact transpose of the linearised
//!   stepper, driven by the gradient of the discrete objective. It needs
//!   every forward step stored.
//!
//! In both modes `levels[n]` approximates `P(t_n)` and `levels[N] = 0`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SweError};
use crate::flux::{adjoint_matrices_raw, adjoint_source, matvec, CellState};
use crate::forward::{SweModel, Trajectory};
use crate::grid::{neighbor_index, AdjointState, Axis, ConservedState, GridSpec, TargetField};
use crate::objective::{discrete_adjoint_source, trapezoid_weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjointMode {
    #[default]
    Continuous,
    Discrete,
}

impl FromStr for AdjointMode {
    type Err = SweError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "continuous" => Ok(AdjointMode::Continuous),
            "discrete" => Ok(AdjointMode::Discrete),
            other => Err(SweError::config("td.adjoint_mode", format!("expected `continuous` or `discrete`, got `{other}`"))),
        }
    }
}

impl fmt::Display for AdjointMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdjointMode::Continuous => "continuous",
            AdjointMode::Discrete => "discrete",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    /// One level per forward step, `levels[n] ≈ P(n·dt)`.
    pub levels: Vec<AdjointState>,
    pub dt: f64,
    pub mode: AdjointMode,
}

impl AdjointTrajectory {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.levels.iter().map(|p| p.max_abs()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        AdjointTrajectory { levels: self.levels.iter().map(|p| p.scaled(s)).collect(), dt: self.dt, mode: self.mode }
    }
}

/// 5-point Laplacian of each channel with the forward ghost rules.
pub fn mirror_laplacian(state: &ConservedState, grid: &GridSpec) -> ConservedState {
    let mut out = ConservedState::zeros(grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let c = state.cell(grid.idx(i, j));
            let e = state.neighbor_cell(i, j, Axis::X, 1);
            let w = state.neighbor_cell(i, j, Axis::X, -1);
            let n = state.neighbor_cell(i, j, Axis::Y, 1);
            let s = state.neighbor_cell(i, j, Axis::Y, -1);
            let mut v = [0.0; 3];
            for k in 0..3 {
                v[k] = (e[k] - 2.0 * c[k] + w[k]) / (grid.dx * grid.dx) + (n[k] - 2.0 * c[k] + s[k]) / (grid.dy * grid.dy);
            }
            out.set_cell(grid.idx(i, j), v);
        }
    }
    out
}

/// Forcing `S = 2ΔU − 2(U − U_d)` of the continuous adjoint.
pub fn continuous_source(u: &ConservedState, target: &ConservedState, grid: &GridSpec) -> AdjointState {
    let lap = mirror_laplacian(u, grid);
    let mut out = AdjointState::zeros(grid);
    for idx in 0..grid.len() {
        let [h, q1, q2] = u.cell(idx);
        out.set_cell(idx, adjoint_source(CellState { h, q1, q2 }, lap.cell(idx), target.cell(idx)));
    }
    out
}

/// Homogeneous part `−A P_x − B P_y − C P + ∇·(Q∇P) + LF(P)` at coefficients `u`.
pub fn continuous_operator(p: &AdjointState, u: &ConservedState, model: &SweModel) -> AdjointState {
    let grid = &model.grid;
    let g = grid.g;
    let q = model.visc.q_diag();
    let mut out = AdjointState::zeros(grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let idx = grid.idx(i, j);
            let [h, q1, q2] = u.cell(idx);
            let dpsi = (model.bathy.dpsi_dx.data[idx], model.bathy.dpsi_dy.data[idx]);
            let (a, b, c) = adjoint_matrices_raw(CellState { h, q1, q2 }, dpsi, g);
            let pc = p.cell(idx);
            let mut r = matvec(&c, &pc).map(|v| -v);
            for (axis, d, m) in [(Axis::X, grid.dx, &a), (Axis::Y, grid.dy, &b)] {
                let pp = p.neighbor_cell(i, j, axis, 1);
                let pm = p.neighbor_cell(i, j, axis, -1);
                let deriv = [(pp[0] - pm[0]) / (2.0 * d), (pp[1] - pm[1]) / (2.0 * d), (pp[2] - pm[2]) / (2.0 * d)];
                let t = matvec(m, &deriv);
                let lf = 0.5 * model.lf_speed / d;
                let (ip, jp, mp) = neighbor_index(grid.nx, grid.ny, i, j, axis, 1);
                let (im, jm, mm) = neighbor_index(grid.nx, grid.ny, i, j, axis, -1);
                let kp = model.face_mask(idx, (!mp).then(|| grid.idx(ip, jp)));
                let km = model.face_mask(idx, (!mm).then(|| grid.idx(im, jm)));
                for k in 0..3 {
                    r[k] += -t[k] + lf * (pp[k] - 2.0 * pc[k] + pm[k]);
                    if q[k] != 0.0 {
                        r[k] += q[k] * (kp * (pp[k] - pc[k]) + km * (pm[k] - pc[k])) / (d * d);
                    }
                }
            }
            out.set_cell(idx, r);
        }
    }
    out
}

/// One backward step of the continuous adjoint:
/// `Pⁿ = Pⁿ⁺¹ + dt·[S(Uⁿ⁺¹) − A P_x − B P_y − C P + ∇·(Q∇P) + LF(P)]`
/// with every coefficient taken at level `n + 1`.
pub fn backward_step(p_next: &AdjointState, u_next: &ConservedState, target_next: &ConservedState, model: &SweModel) -> Result<AdjointState> {
    model.check_stability(u_next)?;
    let op = continuous_operator(p_next, u_next, model);
    let src = continuous_source(u_next, target_next, &model.grid);
    let dt = model.grid.dt;
    Ok(p_next.axpy(dt, &op).axpy(dt, &src))
}

fn target_at_step(traj: &Trajectory, target: &TargetField, n: usize) -> ConservedState {
    if target.is_constant() {
        return target.at(0).clone();
    }
    match traj.steps.binary_search(&n) {
        Ok(k) => target.at(k).clone(),
        Err(k) => {
            let (s0, s1) = (traj.steps[k - 1], traj.steps[k]);
            let w = (n - s0) as f64 / (s1 - s0) as f64;
            target.at(k - 1).scaled(1.0 - w).axpy(w, target.at(k))
        }
    }
}

fn n_steps_of(traj: &Trajectory) -> Result<usize> {
    traj.steps.last().copied().ok_or_else(|| SweError::Trajectory("empty trajectory".into()))
}

/// Solves the adjoint backward from `P(T) = 0`.
pub fn run_adjoint(traj: &Trajectory, target: &TargetField, model: &SweModel, mode: AdjointMode) -> Result<AdjointTrajectory> {
    let grid = &model.grid;
    target.check(grid, traj.len())?;
    if traj.steps.first() != Some(&0) {
        return Err(SweError::Trajectory("trajectory must start at step 0".into()));
    }
    let n = n_steps_of(traj)?;
    if (traj.dt - grid.dt).abs() > 1e-15 * grid.dt {
        return Err(SweError::Trajectory("trajectory time step differs from grid".into()));
    }
    let mut levels = vec![AdjointState::zeros(grid); n + 1];
    match mode {
        AdjointMode::Continuous => {
            for m in (1..=n).rev() {
                let u = traj.state_at_step(m)?;
                let d = target_at_step(traj, target, m);
                levels[m - 1] = backward_step(&levels[m], &u, &d, model).map_err(|e| annotate(e, m))?;
            }
        }
        AdjointMode::Discrete => {
            if !traj.is_complete() {
                return Err(SweError::Trajectory("discrete adjoint needs every forward step stored (stride 1)".into()));
            }
            let w = trapezoid_weights(&traj.times());
            let dt = grid.dt;
            for m in (1..=n).rev() {
                let u = &traj.levels[m];
                let lam: ConservedState = levels[m].clone().into();
                let src = discrete_adjoint_source(u, target.at(m), grid);
                let next = lam.axpy(dt, &model.transpose_rhs(u, &lam)).axpy(w[m], &src);
                levels[m - 1] = next.into();
            }
        }
    }
    for (m, p) in levels.iter().enumerate() {
        if (0..3).any(|k| p.channel(k).data.iter().any(|v| !v.is_finite())) {
            return Err(SweError::NonFinite { step: m });
        }
    }
    Ok(AdjointTrajectory { levels, dt: grid.dt, mode })
}

fn annotate(e: SweError, step: usize) -> SweError {
    match e {
        SweError::NonFinite { .. } => SweError::NonFinite { step },
        other => other,
    }
}

/// `dJ/dU⁰` from a discrete-mode adjoint.
pub fn initial_state_gradient(traj: &Trajectory, target: &TargetField, model: &SweModel, adj: &AdjointTrajectory) -> Result<ConservedState> {
    if adj.mode != AdjointMode::Discrete {
        return Err(SweError::Trajectory("initial-state gradient needs the discrete adjoint".into()));
    }
    let grid = &model.grid;
    let w = trapezoid_weights(&traj.times());
    let u0 = &traj.levels[0];
    let lam: ConservedState = adj.levels[0].clone().into();
    let src = discrete_adjoint_source(u0, target.at(0), grid);
    let full = lam.axpy(grid.dt, &model.transpose_rhs(u0, &lam)).axpy(w[0], &src);
    Ok(full.scaled(-grid.cell_area()))
}

/// `L·δU⁰`: the tangent propagator of the whole forward run.
pub fn tangent_propagate(traj: &Trajectory, model: &SweModel, du0: &ConservedState) -> Result<ConservedState> {
    if !traj.is_complete() {
        return Err(SweError::Trajectory("tangent propagation needs every forward step stored".into()));
    }
    let dt = model.grid.dt;
    let mut du = du0.clone();
    for u in &traj.levels[..traj.len() - 1] {
        du = du.axpy(dt, &model.tangent_rhs(u, &du));
    }
    Ok(du)
}

/// `Lᵀ·W`, exact transpose of [`tangent_propagate`].
pub fn discrete_transpose_propagate(traj: &Trajectory, model: &SweModel, w: &AdjointState) -> Result<AdjointState> {
    if !traj.is_complete() {
        return Err(SweError::Trajectory("transpose propagation needs every forward step stored".into()));
    }
    let dt = model.grid.dt;
    let mut lam: ConservedState = w.clone().into();
    for u in traj.levels[..traj.len() - 1].iter().rev() {
        lam = lam.axpy(dt, &model.transpose_rhs(u, &lam));
    }
    Ok(lam.into())
}

/// Homogeneous continuous-adjoint propagation of terminal data `W` back to `t = 0`.
pub fn continuous_propagate(traj: &Trajectory, model: &SweModel, w: &AdjointState) -> Result<AdjointState> {
    let n = n_steps_of(traj)?;
    let dt = model.grid.dt;
    let mut p = w.clone();
    for m in (1..=n).rev() {
        let u = traj.state_at_step(m)?;
        p = p.axpy(dt, &continuous_operator(&p, &u, model));
    }
    Ok(p)
}

/// Wall residuals of the two adjoint boundary conditions, evaluated with
/// face averages between each boundary cell and its mirror ghost.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryReport {
    /// `max |p2·n_x + p3·n_y|`
    pub normal_adjoint: f64,
    /// `max |(q1²/h + g h²/2) p2 n_x + (q1q2/h) p2 n_y + (q1q2/h) p3 n_x + (q2²/h + g h²/2) p3 n_y|`
    pub flux_pairing: f64,
}

pub fn boundary_diagnostics(p: &AdjointState, u: &ConservedState, grid: &GridSpec) -> BoundaryReport {
    let mut rep = BoundaryReport::default();
    let g = grid.g;
    let mut visit = |i: usize, j: usize, axis: Axis, step: isize| {
        let idx = grid.idx(i, j);
        let (pc, pg) = (p.cell(idx), p.neighbor_cell(i, j, axis, step));
        let (uc, ug) = (u.cell(idx), u.neighbor_cell(i, j, axis, step));
        let pf: Vec<f64> = (0..3).map(|k| 0.5 * (pc[k] + pg[k])).collect();
        let uf: Vec<f64> = (0..3).map(|k| 0.5 * (uc[k] + ug[k])).collect();
        let (nx, ny) = match axis {
            Axis::X => (step as f64, 0.0),
            Axis::Y => (0.0, step as f64),
        };
        let (h, q1, q2) = (uf[0], uf[1], uf[2]);
        rep.normal_adjoint = rep.normal_adjoint.max((pf[1] * nx + pf[2] * ny).abs());
        let sw2 = (q1 * q1 / h + 0.5 * g * h * h) * pf[1] * nx
            + (q1 * q2 / h) * pf[1] * ny
            + (q1 * q2 / h) * pf[2] * nx
            + (q2 * q2 / h + 0.5 * g * h * h) * pf[2] * ny;
        rep.flux_pairing = rep.flux_pairing.max(sw2.abs());
    };
    for j in 0..grid.ny {
        visit(0, j, Axis::X, -1);
        visit(grid.nx - 1, j, Axis::X, 1);
    }
    for i in 0..grid.nx {
        visit(i, 0, Axis::Y, -1);
        visit(i, grid.ny - 1, Axis::Y, 1);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{run_forward, StoragePolicy};
    use crate::grid::{make_grid, Bathymetry, Field, ViscosityParams};
    use crate::objective::evaluate_j;

    fn bump_setup(nx: usize, steps: usize, alpha: f64) -> (SweModel, ConservedState) {
        let dx = 1.0 / nx as f64;
        let dt = 0.2 * dx / (9.81f64 * 1.2).sqrt();
        let grid = make_grid(nx, nx, dx, dx, dt * steps as f64, dt, 9.81).unwrap();
        let init = ConservedState {
            h: Field::from_fn(&grid, |x, y| 1.0 + 0.1 * (-((x - 0.45).powi(2) + (y - 0.55).powi(2)) / 0.02).exp()),
            q1: Field::from_fn(&grid, |x, y| 0.05 * (std::f64::consts::PI * x).sin() * y),
            q2: Field::zeros(nx, nx),
        };
        let psi = Field::from_fn(&grid, |x, y| 0.05 * x + 0.02 * (3.0 * y).sin());
        let model = SweModel::for_initial(grid.clone(), Bathymetry::new(&grid, psi).unwrap(), ViscosityParams::new(alpha, 0.5 * alpha).unwrap(), &init).unwrap();
        (model, init)
    }

    #[test]
    fn mode_parses() {
        assert_eq!("discrete".parse::<AdjointMode>().unwrap(), AdjointMode::Discrete);
        assert!("exact".parse::<AdjointMode>().is_err());
    }

    #[test]
    fn first_backward_step_is_dt_times_source() {
        let (model, init) = bump_setup(8, 3, 0.01);
        let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
        let target = TargetField::uniform(&model.grid, [1.0, 0.0, 0.0]);
        let adj = run_adjoint(&traj, &target, &model, AdjointMode::Continuous).unwrap();
        let src = continuous_source(traj.final_state(), target.at(0), &model.grid);
        let expect = src.scaled(model.grid.dt);
        assert_eq!(adj.levels[3], AdjointState::zeros(&model.grid));
        assert!(adj.levels[2].axpy(-1.0, &expect).max_abs() <= 1e-15 * expect.max_abs());
    }

    #[test]
    fn zero_source_gives_zero_adjoint() {
        let grid = make_grid(6, 6, 0.1, 0.1, 0.05, 0.01, 9.81).unwrap();
        let init = ConservedState { h: Field::constant(6, 6, 1.3), q1: Field::zeros(6, 6), q2: Field::zeros(6, 6) };
        let model = SweModel::for_initial(grid.clone(), Bathymetry::flat(&grid), ViscosityParams::new(0.01, 0.01).unwrap(), &init).unwrap();
        let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
        let target = TargetField::constant_in_time(init.clone());
        for mode in [AdjointMode::Continuous, AdjointMode::Discrete] {
            let adj = run_adjoint(&traj, &target, &model, mode).unwrap();
            assert_eq!(adj.max_abs(), 0.0);
        }
    }

    #[test]
    fn discrete_gradient_matches_finite_differences() {
        let (model, init) = bump_setup(8, 6, 0.02);
        let target = TargetField::uniform(&model.grid, [1.02, 0.01, -0.01]);
        let j_of = |u0: &ConservedState| {
            let t = run_forward(u0, &model, StoragePolicy::every_step()).unwrap();
            evaluate_j(&t, &target, &model.grid).unwrap().j_total
        };
        let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
        let adj = run_adjoint(&traj, &target, &model, AdjointMode::Discrete).unwrap();
        let grad = initial_state_gradient(&traj, &target, &model, &adj).unwrap();
        let eps = 1e-6;
        for (k, idx) in [(0, 0), (0, 27), (1, 9), (2, 63), (1, 36)] {
            let mut up = init.clone();
            up.channel_mut(k).data[idx] += eps;
            let mut um = init.clone();
            um.channel_mut(k).data[idx] -= eps;
            let fd = (j_of(&up) - j_of(&um)) / (2.0 * eps);
            let an = grad.channel(k).data[idx];
            assert!((fd - an).abs() <= 1e-6 * fd.abs().max(1e-3), "channel {k} cell {idx}: fd {fd} vs adjoint {an}");
        }
    }

    #[test]
    fn adjoint_is_linear_in_source() {
        let (model, init) = bump_setup(8, 5, 0.01);
        let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
        let t1 = TargetField::uniform(&model.grid, [0.9, 0.0, 0.0]);
        let t2 = TargetField::uniform(&model.grid, [1.1, 0.05, 0.0]);
        // S is affine in U_d: S(d1) + S(d2) − S(0) = S(d1 + d2)
        let t12 = TargetField::uniform(&model.grid, [2.0, 0.05, 0.0]);
        let t0 = TargetField::uniform(&model.grid, [0.0, 0.0, 0.0]);
        for mode in [AdjointMode::Continuous, AdjointMode::Discrete] {
            let a = |t: &TargetField| run_adjoint(&traj, t, &model, mode).unwrap();
            let (p1, p2, p12, p0) = (a(&t1), a(&t2), a(&t12), a(&t0));
            for m in 0..p1.len() {
                let lhs = p1.levels[m].axpy(1.0, &p2.levels[m]).axpy(-1.0, &p0.levels[m]);
                let err = lhs.axpy(-1.0, &p12.levels[m]).max_abs();
                assert!(err <= 1e-12 * (1.0 + p12.levels[m].max_abs()), "{err}");
            }
        }
    }

    #[test]
    fn boundary_conditions_hold_at_every_level() {
        let (model, init) = bump_setup(10, 8, 0.02);
        let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
        let target = TargetField::uniform(&model.grid, [1.0, 0.0, 0.0]);
        let adj = run_adjoint(&traj, &target, &model, AdjointMode::Continuous).unwrap();
        for (m, p) in adj.levels.iter().enumerate() {
            let rep = boundary_diagnostics(p, &traj.levels[m], &model.grid);
            assert_eq!(rep.normal_adjoint, 0.0);
            assert!(rep.flux_pairing <= 1e-10);
        }
    }

    #[test]
    fn discrete_mode_rejects_thinned_storage() {
        let (model, init) = bump_setup(8, 4, 0.0);
        let traj = run_forward(&init, &model, StoragePolicy::stride(2).unwrap()).unwrap();
        let target = TargetField::uniform(&model.grid, [1.0, 0.0, 0.0]);
        assert!(matches!(run_adjoint(&traj, &target, &model, AdjointMode::Discrete), Err(SweError::Trajectory(_))));
        assert_eq!(run_adjoint(&traj, &target, &model, AdjointMode::Continuous).unwrap().len(), 5);
    }

    #[test]
    fn frozen_coefficients_match_fine_reference() {
        let n = 16;
        let dx = 1.0 / n as f64;
        // The Euler defect is first order in dt with a constant set by the
        // gravity-wave frequency, so the step is much finer than the CFL limit.
        let steps = 1600;
        let dt = 0.001 * dx;
        let grid = make_grid(n, n, dx, dx, dt * steps as f64, dt, 9.81).unwrap();
        let u = ConservedState { h: Field::constant(n, n, 1.0), q1: Field::constant(n, n, 0.1), q2: Field::constant(n, n, -0.05) };
        let pi = std::f64::consts::PI;
        let target = ConservedState {
            h: Field::from_fn(&grid, |x, y| 1.0 + 0.1 * (pi * x).cos() * (pi * y).cos()),
            q1: Field::from_fn(&grid, |x, y| 0.1 + 0.05 * (pi * y).cos() * x * x * (1.0 - x) * (1.0 - x)),
            q2: Field::constant(n, n, -0.05),
        };
        let model = SweModel::for_initial(grid.clone(), Bathymetry::flat(&grid), ViscosityParams::new(0.02, 0.01).unwrap(), &u).unwrap();

        let mut p = AdjointState::zeros(&grid);
        for _ in 0..steps {
            p = backward_step(&p, &u, &target, &model).unwrap();
        }

        let src = continuous_source(&u, &target, &grid);
        let rhs = |p: &AdjointState| continuous_operator(p, &u, &model).axpy(1.0, &src);
        let sub = 2;
        let h = dt / sub as f64;
        let mut r = AdjointState::zeros(&grid);
        for _ in 0..steps * sub {
            let k1 = rhs(&r);
            let k2 = rhs(&r.axpy(0.5 * h, &k1));
            let k3 = rhs(&r.axpy(0.5 * h, &k2));
            let k4 = rhs(&r.axpy(h, &k3));
            r = r.axpy(h / 6.0, &k1).axpy(h / 3.0, &k2).axpy(h / 3.0, &k3).axpy(h / 6.0, &k4);
        }
        let d = p.axpy(-1.0, &r);
        let rel = (d.dot(&d) / r.dot(&r)).sqrt();
        assert!(rel <= 1e-3, "relative deviation {rel:e}");
    }
}
