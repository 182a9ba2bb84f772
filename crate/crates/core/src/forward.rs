//! Explicit solver for the viscous shallow water system
//!
//! ```text
//! ∂U/∂t + ∇·F(U) − ∇·(Q(α)∇U) = S(U)
//! ```
//!
//! on a cell-centred grid with reflective walls. One step is forward Euler
//! applied to the semi-discrete right-hand side
//!
//! * centred flux differences for the advective part,
//! * global Lax–Friedrichs dissipation `c/(2Δ)·(W₊ − 2W + W₋)` with a frozen
//!   speed `c`, acting on `W = (h + ψ, q1, q2)`,
//! * hydrostatic pressure and bottom slope combined face by face as
//!   `−g/(2Δ)·[h_{+½}(η₊ − η) + h_{−½}(η − η₋)]` with `η = h + ψ`, which makes
//!   the lake at rest an exact discrete equilibrium,
//! * a 5-point Laplacian on `q1`, `q2` with face coefficients `α·χ_face`
//!   (`χ` is an optional cell mask used to punch viscous holes).
//!
//! Ghost cells mirror the interior: `h` even, normal discharge odd,
//! tangential discharge even.
//!
//! The same stencil is exposed through its exact linearisation
//! ([`SweModel::tangent_rhs`]) and the transpose of that linearisation
//! ([`SweModel::transpose_rhs`]); the discrete adjoint is built from the latter.

use crate::error::{Result, SweError};
use crate::flux::{Mat3, Vec3};
use crate::grid::{
    mirror_diag, neighbor_index, Axis, Bathymetry, ConservedState, Field, GridSpec, ViscosityParams, H_MIN,
};

/// Factor applied to the initial maximum wave speed when freezing the
/// Lax–Friedrichs dissipation speed.
pub const LF_SAFETY: f64 = 1.1;

/// Default number of positivity clamp events tolerated per run.
pub const DEFAULT_CLAMP_BUDGET: usize = 0;

const DIRS: [(Axis, isize); 4] = [(Axis::X, 1), (Axis::X, -1), (Axis::Y, 1), (Axis::Y, -1)];

/// Everything the stepper needs besides the state.
#[derive(Debug, Clone, PartialEq)]
pub struct SweModel {
    pub grid: GridSpec,
    pub bathy: Bathymetry,
    pub visc: ViscosityParams,
    /// Frozen Lax–Friedrichs speed `c`.
    pub lf_speed: f64,
    /// Cell indicator multiplying `Q(α)`: 1 where viscous, 0 inside a hole.
    pub visc_mask: Option<Field>,
    pub clamp_budget: usize,
}

impl SweModel {
    pub fn new(grid: GridSpec, bathy: Bathymetry, visc: ViscosityParams, lf_speed: f64) -> Result<Self> {
        if !bathy.psi.fits(&grid) {
            return Err(SweError::Shape("bathymetry does not match grid".into()));
        }
        if !(lf_speed.is_finite() && lf_speed >= 0.0) {
            return Err(SweError::Domain(format!("Lax-Friedrichs speed must be >= 0, got {lf_speed}")));
        }
        Ok(SweModel { grid, bathy, visc, lf_speed, visc_mask: None, clamp_budget: DEFAULT_CLAMP_BUDGET })
    }

    /// Freezes the dissipation speed at `LF_SAFETY ×` the initial maximum wave speed.
    pub fn for_initial(grid: GridSpec, bathy: Bathymetry, visc: ViscosityParams, init: &ConservedState) -> Result<Self> {
        init.validate(&grid)?;
        let c = LF_SAFETY * max_wave_speed(init, grid.g);
        Self::new(grid, bathy, visc, c)
    }

    pub fn with_visc_mask(mut self, mask: Option<Field>) -> Self {
        self.visc_mask = mask;
        self
    }

    pub fn with_clamp_budget(mut self, budget: usize) -> Self {
        self.clamp_budget = budget;
        self
    }

    /// Face factor `χ_face` between cell `idx` and its neighbour (`None` for a ghost).
    #[inline]
    pub(crate) fn face_mask(&self, idx: usize, nb: Option<usize>) -> f64 {
        match (&self.visc_mask, nb) {
            (None, _) => 1.0,
            (Some(m), Some(n)) => 0.5 * (m.data[idx] + m.data[n]),
            (Some(m), None) => m.data[idx],
        }
    }

    /// Semi-discrete right-hand side `R(U)`; a step is `U + dt·R(U)`.
    pub fn rhs(&self, u: &ConservedState) -> ConservedState {
        let grid = &self.grid;
        let mut out = ConservedState::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let idx = grid.idx(i, j);
                out.set_cell(idx, self.cell_rhs(u, i, j));
            }
        }
        out
    }

    fn cell_rhs(&self, u: &ConservedState, i: usize, j: usize) -> Vec3 {
        let grid = &self.grid;
        let g = grid.g;
        let idx = grid.idx(i, j);
        let uc = u.cell(idx);
        let psi_c = self.bathy.psi.data[idx];
        let eta_c = uc[0] + psi_c;
        let q = self.visc.q_diag();

        let mut r = [0.0; 3];
        for axis in [Axis::X, Axis::Y] {
            let d = if axis == Axis::X { grid.dx } else { grid.dy };
            let (ip, jp, mp) = neighbor_index(grid.nx, grid.ny, i, j, axis, 1);
            let (im, jm, mm) = neighbor_index(grid.nx, grid.ny, i, j, axis, -1);
            let up = u.neighbor_cell(i, j, axis, 1);
            let um = u.neighbor_cell(i, j, axis, -1);
            let psi_p = self.bathy.psi.at(ip, jp);
            let psi_m = self.bathy.psi.at(im, jm);
            let eta_p = up[0] + psi_p;
            let eta_m = um[0] + psi_m;

            // advective flux (pressure handled below)
            let fp = advective_flux(&up, axis);
            let fm = advective_flux(&um, axis);
            let lf = 0.5 * self.lf_speed / d;
            r[0] += -(fp[0] - fm[0]) / (2.0 * d) + lf * (eta_p - 2.0 * eta_c + eta_m);
            for k in 1..3 {
                r[k] += -(fp[k] - fm[k]) / (2.0 * d) + lf * (up[k] - 2.0 * uc[k] + um[k]);
            }

            // well-balanced pressure + slope
            let hp_face = 0.5 * (uc[0] + up[0]);
            let hm_face = 0.5 * (um[0] + uc[0]);
            let k_mom = if axis == Axis::X { 1 } else { 2 };
            r[k_mom] += -g / (2.0 * d) * (hp_face * (eta_p - eta_c) + hm_face * (eta_c - eta_m));

            // viscosity
            let kp = self.face_mask(idx, (!mp).then(|| grid.idx(ip, jp)));
            let km = self.face_mask(idx, (!mm).then(|| grid.idx(im, jm)));
            for k in 1..3 {
                if q[k] != 0.0 {
                    r[k] += q[k] * (kp * (up[k] - uc[k]) + km * (um[k] - uc[k])) / (d * d);
                }
            }
        }
        r
    }

    /// Local Jacobian blocks of `R` at cell `(i, j)`: the centre block and,
    /// for each of the four neighbours, its block, its source cell and
    /// whether it is a mirror ghost of the centre.
    fn cell_blocks(&self, u: &ConservedState, i: usize, j: usize) -> (Mat3, [(Mat3, usize, Option<Axis>); 4]) {
        let grid = &self.grid;
        let g = grid.g;
        let idx = grid.idx(i, j);
        let uc = u.cell(idx);
        let psi_c = self.bathy.psi.data[idx];
        let eta_c = uc[0] + psi_c;
        let q = self.visc.q_diag();

        let mut center = [[0.0; 3]; 3];
        let mut nbs = [([[0.0; 3]; 3], idx, None); 4];
        for (slot, &(axis, step)) in DIRS.iter().enumerate() {
            let d = if axis == Axis::X { grid.dx } else { grid.dy };
            let s = step as f64;
            let (ni, nj, mirrored) = neighbor_index(grid.nx, grid.ny, i, j, axis, step);
            let nidx = grid.idx(ni, nj);
            let un = u.neighbor_cell(i, j, axis, step);
            let psi_n = self.bathy.psi.data[nidx];
            let eta_n = un[0] + psi_n;
            let mut b = [[0.0; 3]; 3];

            // −s·J_a(U_n)/(2d)
            let ja = advective_jacobian(&un, axis);
            for r in 0..3 {
                for c in 0..3 {
                    b[r][c] -= s * ja[r][c] / (2.0 * d);
                }
            }
            // Lax–Friedrichs
            let lf = 0.5 * self.lf_speed / d;
            for k in 0..3 {
                b[k][k] += lf;
                center[k][k] -= lf;
            }
            // pressure + slope: term −g/(2d)·h_face·(η_out − η_in) oriented by `s`
            let k_mom = if axis == Axis::X { 1 } else { 2 };
            let h_face = 0.5 * (uc[0] + un[0]);
            // contribution T = −g/(2d)·h_face·s·(η_n − η_c)
            let deta = s * (eta_n - eta_c);
            b[k_mom][0] += -g / (2.0 * d) * (0.5 * deta + h_face * s);
            center[k_mom][0] += -g / (2.0 * d) * (0.5 * deta - h_face * s);
            // viscosity
            let kf = self.face_mask(idx, (!mirrored).then_some(nidx));
            for k in 1..3 {
                if q[k] != 0.0 {
                    let w = q[k] * kf / (d * d);
                    b[k][k] += w;
                    center[k][k] -= w;
                }
            }
            nbs[slot] = (b, nidx, mirrored.then_some(axis));
        }
        (center, nbs)
    }

    /// `R'(U)·δU`
    pub fn tangent_rhs(&self, u: &ConservedState, du: &ConservedState) -> ConservedState {
        let grid = &self.grid;
        let mut out = ConservedState::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let idx = grid.idx(i, j);
                let (center, nbs) = self.cell_blocks(u, i, j);
                let dc = du.cell(idx);
                let mut acc = mv(&center, &dc);
                for (b, nidx, mirror) in nbs.iter() {
                    let dn = match mirror {
                        Some(axis) => apply_diag(&mirror_diag(*axis), &dc),
                        None => du.cell(*nidx),
                    };
                    let t = mv(b, &dn);
                    for k in 0..3 {
                        acc[k] += t[k];
                    }
                }
                out.set_cell(idx, acc);
            }
        }
        out
    }

    /// `R'(U)ᵀ·λ`
    pub fn transpose_rhs(&self, u: &ConservedState, lambda: &ConservedState) -> ConservedState {
        let grid = &self.grid;
        let mut out = ConservedState::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let idx = grid.idx(i, j);
                let (center, nbs) = self.cell_blocks(u, i, j);
                let l = lambda.cell(idx);
                add_into(&mut out, idx, mtv(&center, &l));
                for (b, nidx, mirror) in nbs.iter() {
                    let t = mtv(b, &l);
                    match mirror {
                        Some(axis) => add_into(&mut out, idx, apply_diag(&mirror_diag(*axis), &t)),
                        None => add_into(&mut out, *nidx, t),
                    }
                }
            }
        }
        out
    }

    /// Largest stable `dt` for `state`, scaled by `cfl_number`.
    pub fn cfl_dt(&self, state: &ConservedState, cfl_number: f64) -> f64 {
        cfl_dt(state, &self.grid, &self.visc, self.grid.g, cfl_number)
    }

    /// Largest `dt` for which forward Euler on the full stencil is stable:
    /// `dt·[s·(1/dx + 1/dy) + 2α·(1/dx² + 1/dy²)] ≤ 1` with `s` the larger
    /// of the frozen dissipation speed and the current wave speed.
    pub fn max_stable_dt(&self, state: &ConservedState) -> f64 {
        let (hyp, par) = self.stability_rates(state);
        if hyp + par > 0.0 {
            1.0 / (hyp + par)
        } else {
            f64::INFINITY
        }
    }

    fn stability_rates(&self, state: &ConservedState) -> (f64, f64) {
        let grid = &self.grid;
        let s = max_wave_speed(state, grid.g).max(self.lf_speed);
        let hyp = s * (1.0 / grid.dx + 1.0 / grid.dy);
        let par = 2.0 * self.visc.max_alpha() * (1.0 / (grid.dx * grid.dx) + 1.0 / (grid.dy * grid.dy));
        (hyp, par)
    }

    pub(crate) fn check_stability(&self, state: &ConservedState) -> Result<()> {
        let (hyp, par) = self.stability_rates(state);
        let limit = self.max_stable_dt(state);
        if self.grid.dt > limit * (1.0 + 1e-12) {
            let which = if hyp >= par { "hyperbolic" } else { "parabolic" };
            return Err(SweError::Stability { dt: self.grid.dt, limit, which });
        }
        Ok(())
    }
}

#[inline]
fn advective_flux(u: &Vec3, axis: Axis) -> Vec3 {
    let [h, q1, q2] = *u;
    match axis {
        Axis::X => [q1, q1 * q1 / h, q1 * q2 / h],
        Axis::Y => [q2, q1 * q2 / h, q2 * q2 / h],
    }
}

#[inline]
fn advective_jacobian(u: &Vec3, axis: Axis) -> Mat3 {
    let uu = u[1] / u[0];
    let vv = u[2] / u[0];
    match axis {
        Axis::X => [[0.0, 1.0, 0.0], [-uu * uu, 2.0 * uu, 0.0], [-uu * vv, vv, uu]],
        Axis::Y => [[0.0, 0.0, 1.0], [-uu * vv, vv, uu], [-vv * vv, 0.0, 2.0 * vv]],
    }
}

#[inline]
fn mv(m: &Mat3, v: &Vec3) -> Vec3 {
    crate::flux::matvec(m, v)
}

#[inline]
fn mtv(m: &Mat3, v: &Vec3) -> Vec3 {
    crate::flux::matvec_t(m, v)
}

#[inline]
fn apply_diag(d: &[f64; 3], v: &Vec3) -> Vec3 {
    [d[0] * v[0], d[1] * v[1], d[2] * v[2]]
}

#[inline]
fn add_into(s: &mut ConservedState, idx: usize, v: Vec3) {
    let c = s.cell(idx);
    s.set_cell(idx, [c[0] + v[0], c[1] + v[1], c[2] + v[2]]);
}

/// `max(|u| + √(g h), |v| + √(g h))` over all cells.
pub fn max_wave_speed(state: &ConservedState, g: f64) -> f64 {
    let mut s: f64 = 0.0;
    for idx in 0..state.h.data.len() {
        let [h, q1, q2] = state.cell(idx);
        let c = (g * h.max(0.0)).sqrt();
        s = s.max((q1 / h).abs() + c).max((q2 / h).abs() + c);
    }
    s
}

/// Largest `dt` satisfying the hyperbolic bound `min(dx,dy)/s` and, when
/// viscous, the parabolic bound `min(dx,dy)²/(4 max α)`, scaled by
/// `cfl_number`.
pub fn cfl_dt(state: &ConservedState, grid: &GridSpec, visc: &ViscosityParams, g: f64, cfl_number: f64) -> f64 {
    let m = grid.dx.min(grid.dy);
    let s = max_wave_speed(state, g);
    let hyp = if s > 0.0 { m / s } else { f64::INFINITY };
    let a = visc.max_alpha();
    let par = if a > 0.0 { m * m / (4.0 * a) } else { f64::INFINITY };
    cfl_number * hyp.min(par)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepDiagnostics {
    pub clamp_events: usize,
    pub max_wave_speed: f64,
}

/// One forward Euler step; h below [`H_MIN`] is clamped and counted.
pub fn step(state: &ConservedState, model: &SweModel) -> Result<(ConservedState, StepDiagnostics)> {
    model.check_stability(state)?;
    let r = model.rhs(state);
    let mut next = state.axpy(model.grid.dt, &r);
    let mut clamp_events = 0;
    for v in next.h.data.iter_mut() {
        if *v < H_MIN {
            *v = H_MIN;
            clamp_events += 1;
        }
    }
    for k in 0..3 {
        if next.channel(k).data.iter().any(|v| !v.is_finite()) {
            return Err(SweError::NonFinite { step: 0 });
        }
    }
    let diag = StepDiagnostics { clamp_events, max_wave_speed: max_wave_speed(&next, model.grid.g) };
    Ok((next, diag))
}

/// Which time levels a forward run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoragePolicy {
    pub stride: usize,
}

impl StoragePolicy {
    pub fn every_step() -> Self {
        StoragePolicy { stride: 1 }
    }

    pub fn stride(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(SweError::config("output.stride", "must be >= 1"));
        }
        Ok(StoragePolicy { stride: k })
    }
}

impl Default for StoragePolicy {
    fn default() -> Self {
        Self::every_step()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunDiagnostics {
    /// `Σ h·dx·dy` at every step (not only stored ones).
    pub mass: Vec<f64>,
    pub max_wave_speed: Vec<f64>,
    pub clamp_events: usize,
}

impl RunDiagnostics {
    pub fn relative_mass_drift(&self) -> f64 {
        let m0 = self.mass.first().copied().unwrap_or(0.0);
        self.mass.iter().fold(0.0f64, |d, m| d.max((m - m0).abs())) / m0.abs().max(f64::MIN_POSITIVE)
    }
}

/// Stored forward levels. `steps[k]` is the step index of `levels[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub levels: Vec<ConservedState>,
    pub steps: Vec<usize>,
    pub dt: f64,
    pub lf_speed: f64,
    pub diagnostics: RunDiagnostics,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn time(&self, level: usize) -> f64 {
        self.steps[level] as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn final_state(&self) -> &ConservedState {
        self.levels.last().expect("trajectory has at least one level")
    }

    pub fn is_complete(&self) -> bool {
        self.steps.windows(2).all(|w| w[1] == w[0] + 1)
    }

    /// Builds a trajectory from explicit levels at uniform spacing `dt`.
    pub fn from_levels(levels: Vec<ConservedState>, dt: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(SweError::Trajectory("no levels".into()));
        }
        let steps = (0..levels.len()).collect();
        Ok(Trajectory { levels, steps, dt, lf_speed: 0.0, diagnostics: RunDiagnostics::default() })
    }

    /// State at step `n`, linearly interpolated between stored levels.
    pub fn state_at_step(&self, n: usize) -> Result<ConservedState> {
        match self.steps.binary_search(&n) {
            Ok(k) => Ok(self.levels[k].clone()),
            Err(k) => {
                if k == 0 || k >= self.steps.len() {
                    return Err(SweError::Trajectory(format!("step {n} outside stored range")));
                }
                let (s0, s1) = (self.steps[k - 1], self.steps[k]);
                let w = (n - s0) as f64 / (s1 - s0) as f64;
                Ok(self.levels[k - 1].scaled(1.0 - w).axpy(w, &self.levels[k]))
            }
        }
    }
}

/// Runs `n_steps` forward steps from `init`.
pub fn run_forward(init: &ConservedState, model: &SweModel, storage: StoragePolicy) -> Result<Trajectory> {
    init.validate(&model.grid)?;
    let grid = &model.grid;
    let mut diagnostics = RunDiagnostics {
        mass: vec![init.mass(grid)],
        max_wave_speed: vec![max_wave_speed(init, grid.g)],
        clamp_events: 0,
    };
    let mut levels = vec![init.clone()];
    let mut steps = vec![0];
    let mut cur = init.clone();
    for n in 0..grid.n_steps {
        let (next, d) = step(&cur, model).map_err(|e| match e {
            SweError::NonFinite { .. } => SweError::NonFinite { step: n + 1 },
            other => other,
        })?;
        diagnostics.clamp_events += d.clamp_events;
        if diagnostics.clamp_events > model.clamp_budget {
            return Err(SweError::BlowUp { step: n + 1, events: diagnostics.clamp_events, budget: model.clamp_budget });
        }
        diagnostics.mass.push(next.mass(grid));
        diagnostics.max_wave_speed.push(d.max_wave_speed);
        let n1 = n + 1;
        if n1 % storage.stride == 0 || n1 == grid.n_steps {
            levels.push(next.clone());
            steps.push(n1);
        }
        cur = next;
    }
    Ok(Trajectory { levels, steps, dt: grid.dt, lf_speed: model.lf_speed, diagnostics })
}
