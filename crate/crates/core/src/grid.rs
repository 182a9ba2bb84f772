//! Shared data model: grid, cell-centred fields, states, bathymetry, targets
//! and the reference inclusion used for hole perturbations.
//!
//! Fields live on a uniform Cartesian grid of `nx × ny` cells covering
//! `[0, nx·dx] × [0, ny·dy]`; cell `(i, j)` is centred at
//! `((i + ½)·dx, (j + ½)·dy)` and stored at flat index `i + nx·j`.
//! Walls are reflective and realised by mirror ghost cells (see [`ghost_sign`]).

use std::f64::consts::PI;

use crate::error::{Result, SweError};

/// Positivity floor for the water height.
pub const H_MIN: f64 = 1e-6;

/// Coordinate axis of a wall / stencil direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Sign applied to channel `channel` of a three-component field when it is
/// mirrored across a wall normal to `axis`.
///
/// Channel 0 (height / `p1`) is even; channel 1 (`q1` / `p2`) is odd across
/// x-walls; channel 2 (`q2` / `p3`) is odd across y-walls. This makes the
/// face value of the normal component vanish on every wall.
#[inline]
pub fn ghost_sign(channel: usize, axis: Axis) -> f64 {
    match (channel, axis) {
        (1, Axis::X) | (2, Axis::Y) => -1.0,
        _ => 1.0,
    }
}

/// Mirror matrix (as a diagonal) for a wall normal to `axis`.
#[inline]
pub fn mirror_diag(axis: Axis) -> [f64; 3] {
    [ghost_sign(0, axis), ghost_sign(1, axis), ghost_sign(2, axis)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub g: f64,
}

/// Builds a grid whose time step is the largest `dt ≤ dt_hint` with
/// `n_steps · dt = t_end` for an integer `n_steps`.
pub fn make_grid(
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    t_end: f64,
    dt_hint: f64,
    g: f64,
) -> Result<GridSpec> {
    if nx < 3 {
        return Err(SweError::config("grid.nx", format!("must be >= 3, got {nx}")));
    }
    if ny < 3 {
        return Err(SweError::config("grid.ny", format!("must be >= 3, got {ny}")));
    }
    for (name, v) in [("grid.dx", dx), ("grid.dy", dy), ("grid.dt_hint", dt_hint), ("grid.g", g)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(SweError::config(name, format!("must be positive and finite, got {v}")));
        }
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(SweError::config("grid.t_end", format!("must be non-negative, got {t_end}")));
    }
    if t_end == 0.0 {
        return Ok(GridSpec { nx, ny, dx, dy, t_end: 0.0, dt: dt_hint, n_steps: 0, g });
    }
    let ratio = t_end / dt_hint;
    // Guard against ratios like 3.0000000000000004 that are integers up to rounding.
    let mut n_steps = ratio.round() as usize;
    if (ratio - n_steps as f64).abs() > 1e-9 * ratio.max(1.0) {
        n_steps = ratio.ceil() as usize;
    }
    let n_steps = n_steps.max(1);
    let dt = t_end / n_steps as f64;
    Ok(GridSpec { nx, ny, dx, dy, t_end: n_steps as f64 * dt, dt, n_steps, g })
}

impl GridSpec {
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    #[inline]
    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy
    }

    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Same spatial grid with a different time discretisation.
    pub fn with_time(&self, t_end: f64, dt_hint: f64) -> Result<GridSpec> {
        make_grid(self.nx, self.ny, self.dx, self.dy, t_end, dt_hint, self.g)
    }

    /// Distance of `(x, y)` to the nearest wall, in cell widths of the
    /// corresponding axis (minimum over both axes).
    pub fn wall_distance_cells(&self, x: f64, y: f64) -> f64 {
        let dxl = x / self.dx;
        let dxr = (self.lx() - x) / self.dx;
        let dyb = y / self.dy;
        let dyt = (self.ly() - y) / self.dy;
        dxl.min(dxr).min(dyb).min(dyt)
    }
}

/// Scalar cell-centred field.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Field { nx, ny, data: vec![0.0; nx * ny] }
    }

    pub fn constant(nx: usize, ny: usize, v: f64) -> Self {
        Field { nx, ny, data: vec![v; nx * ny] }
    }

    /// Samples `f(x, y)` at cell centres.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data.push(f(grid.x_center(i), grid.y_center(j)));
            }
        }
        Field { nx: grid.nx, ny: grid.ny, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i + self.nx * j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + self.nx * j] = v;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    pub fn fits(&self, grid: &GridSpec) -> bool {
        self.nx == grid.nx && self.ny == grid.ny && self.data.len() == grid.len()
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Value of the mirrored neighbour of `(i, j)` one cell away along `axis`
    /// in direction `step` (±1), with parity `sign` applied to ghosts.
    #[inline]
    pub fn neighbor(&self, i: usize, j: usize, axis: Axis, step: isize, sign: f64) -> f64 {
        let (ni, nj, mirrored) = neighbor_index(self.nx, self.ny, i, j, axis, step);
        if mirrored {
            sign * self.at(ni, nj)
        } else {
            self.at(ni, nj)
        }
    }
}

/// Index of the neighbour of `(i, j)` along `axis`; `true` in the last slot
/// when it is a mirror ghost (then the index is `(i, j)` itself).
#[inline]
pub fn neighbor_index(nx: usize, ny: usize, i: usize, j: usize, axis: Axis, step: isize) -> (usize, usize, bool) {
    match axis {
        Axis::X => {
            let ni = i as isize + step;
            if ni < 0 || ni >= nx as isize {
                (i, j, true)
            } else {
                (ni as usize, j, false)
            }
        }
        Axis::Y => {
            let nj = j as isize + step;
            if nj < 0 || nj >= ny as isize {
                (i, j, true)
            } else {
                (i, nj as usize, false)
            }
        }
    }
}

macro_rules! three_field_state {
    ($name:ident, $a:ident, $b:ident, $c:ident) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            pub $a: Field,
            pub $b: Field,
            pub $c: Field,
        }

        impl $name {
            pub fn zeros(grid: &GridSpec) -> Self {
                $name {
                    $a: Field::zeros(grid.nx, grid.ny),
                    $b: Field::zeros(grid.nx, grid.ny),
                    $c: Field::zeros(grid.nx, grid.ny),
                }
            }

            pub fn from_fields($a: Field, $b: Field, $c: Field) -> Result<Self> {
                if !$a.same_shape(&$b) || !$a.same_shape(&$c) {
                    return Err(SweError::Shape(format!(
                        "{} channels have different shapes",
                        stringify!($name)
                    )));
                }
                Ok($name { $a, $b, $c })
            }

            #[inline]
            pub fn channel(&self, k: usize) -> &Field {
                match k {
                    0 => &self.$a,
                    1 => &self.$b,
                    _ => &self.$c,
                }
            }

            #[inline]
            pub fn channel_mut(&mut self, k: usize) -> &mut Field {
                match k {
                    0 => &mut self.$a,
                    1 => &mut self.$b,
                    _ => &mut self.$c,
                }
            }

            #[inline]
            pub fn cell(&self, idx: usize) -> [f64; 3] {
                [self.$a.data[idx], self.$b.data[idx], self.$c.data[idx]]
            }

            #[inline]
            pub fn set_cell(&mut self, idx: usize, v: [f64; 3]) {
                self.$a.data[idx] = v[0];
                self.$b.data[idx] = v[1];
                self.$c.data[idx] = v[2];
            }

            /// Mirrored neighbour cell of `(i, j)`.
            #[inline]
            pub fn neighbor_cell(&self, i: usize, j: usize, axis: Axis, step: isize) -> [f64; 3] {
                let nx = self.$a.nx;
                let (ni, nj, mirrored) = neighbor_index(nx, self.$a.ny, i, j, axis, step);
                let v = self.cell(ni + nx * nj);
                if mirrored {
                    let m = mirror_diag(axis);
                    [m[0] * v[0], m[1] * v[1], m[2] * v[2]]
                } else {
                    v
                }
            }

            pub fn fits(&self, grid: &GridSpec) -> bool {
                self.$a.fits(grid) && self.$b.fits(grid) && self.$c.fits(grid)
            }

            /// Euclidean inner product over all cells and channels.
            pub fn dot(&self, other: &Self) -> f64 {
                (0..3).map(|k| self.channel(k).dot(other.channel(k))).sum()
            }

            pub fn max_abs(&self) -> f64 {
                (0..3).map(|k| self.channel(k).max_abs()).fold(0.0, f64::max)
            }

            pub fn scaled(&self, s: f64) -> Self {
                let mut out = self.clone();
                for k in 0..3 {
                    out.channel_mut(k).data.iter_mut().for_each(|v| *v *= s);
                }
                out
            }

            /// `self + s·other`
            pub fn axpy(&self, s: f64, other: &Self) -> Self {
                let mut out = self.clone();
                for k in 0..3 {
                    for (a, b) in out.channel_mut(k).data.iter_mut().zip(&other.channel(k).data) {
                        *a += s * b;
                    }
                }
                out
            }
        }
    };
}

three_field_state!(ConservedState, h, q1, q2);
three_field_state!(AdjointState, p1, p2, p3);

impl ConservedState {
    /// Checks shape, finiteness and the positivity floor.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !self.fits(grid) {
            return Err(SweError::Shape(format!(
                "state is {}x{}, grid is {}x{}",
                self.h.nx, self.h.ny, grid.nx, grid.ny
            )));
        }
        for k in 0..3 {
            if self.channel(k).data.iter().any(|v| !v.is_finite()) {
                return Err(SweError::Domain(format!("channel {k} has non-finite values")));
            }
        }
        if let Some(v) = self.h.data.iter().find(|&&v| v < H_MIN) {
            return Err(SweError::Domain(format!("h = {v:e} below floor {H_MIN:e}")));
        }
        Ok(())
    }

    pub fn mass(&self, grid: &GridSpec) -> f64 {
        self.h.sum() * grid.cell_area()
    }

    /// Total momentum vector `(Σ q1, Σ q2)·dx·dy`.
    pub fn momentum(&self, grid: &GridSpec) -> (f64, f64) {
        (self.q1.sum() * grid.cell_area(), self.q2.sum() * grid.cell_area())
    }

    /// Total mechanical energy `Σ (|q|²/(2h) + g h²/2)·dx·dy` on a flat bottom.
    pub fn energy(&self, grid: &GridSpec) -> f64 {
        let mut e = 0.0;
        for idx in 0..grid.len() {
            let [h, q1, q2] = self.cell(idx);
            e += 0.5 * (q1 * q1 + q2 * q2) / h + 0.5 * grid.g * h * h;
        }
        e * grid.cell_area()
    }
}

impl From<ConservedState> for AdjointState {
    fn from(s: ConservedState) -> Self {
        AdjointState { p1: s.h, p2: s.q1, p3: s.q2 }
    }
}

impl From<AdjointState> for ConservedState {
    fn from(p: AdjointState) -> Self {
        ConservedState { h: p.p1, q1: p.p2, q2: p.p3 }
    }
}

/// Bottom topography with its centred gradients (one-sided at walls).
#[derive(Debug, Clone, PartialEq)]
pub struct Bathymetry {
    pub psi: Field,
    pub dpsi_dx: Field,
    pub dpsi_dy: Field,
}

impl Bathymetry {
    pub fn new(grid: &GridSpec, psi: Field) -> Result<Self> {
        if !psi.fits(grid) {
            return Err(SweError::Shape("bathymetry does not match grid".into()));
        }
        let (dpsi_dx, dpsi_dy) = gradient_one_sided(grid, &psi);
        Ok(Bathymetry { psi, dpsi_dx, dpsi_dy })
    }

    pub fn flat(grid: &GridSpec) -> Self {
        let z = Field::zeros(grid.nx, grid.ny);
        Bathymetry { psi: z.clone(), dpsi_dx: z.clone(), dpsi_dy: z }
    }
}

/// Centred differences in the interior, first-order one-sided at walls.
pub fn gradient_one_sided(grid: &GridSpec, f: &Field) -> (Field, Field) {
    let mut gx = Field::zeros(grid.nx, grid.ny);
    let mut gy = Field::zeros(grid.nx, grid.ny);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let dx = if i == 0 {
                (f.at(1, j) - f.at(0, j)) / grid.dx
            } else if i == grid.nx - 1 {
                (f.at(i, j) - f.at(i - 1, j)) / grid.dx
            } else {
                (f.at(i + 1, j) - f.at(i - 1, j)) / (2.0 * grid.dx)
            };
            let dy = if j == 0 {
                (f.at(i, 1) - f.at(i, 0)) / grid.dy
            } else if j == grid.ny - 1 {
                (f.at(i, j) - f.at(i, j - 1)) / grid.dy
            } else {
                (f.at(i, j + 1) - f.at(i, j - 1)) / (2.0 * grid.dy)
            };
            gx.set(i, j, dx);
            gy.set(i, j, dy);
        }
    }
    (gx, gy)
}

/// Target `U_d`: one snapshot per stored time level, or a single snapshot
/// broadcast to every level.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetField {
    snapshots: Vec<ConservedState>,
}

impl TargetField {
    pub fn constant_in_time(state: ConservedState) -> Self {
        TargetField { snapshots: vec![state] }
    }

    pub fn uniform(grid: &GridSpec, value: [f64; 3]) -> Self {
        let s = ConservedState {
            h: Field::constant(grid.nx, grid.ny, value[0]),
            q1: Field::constant(grid.nx, grid.ny, value[1]),
            q2: Field::constant(grid.nx, grid.ny, value[2]),
        };
        Self::constant_in_time(s)
    }

    pub fn per_level(snapshots: Vec<ConservedState>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(SweError::Shape("target needs at least one snapshot".into()));
        }
        if snapshots.iter().any(|s| !s.h.same_shape(&snapshots[0].h)) {
            return Err(SweError::Shape("target snapshots differ in shape".into()));
        }
        Ok(TargetField { snapshots })
    }

    pub fn n_snapshots(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_constant(&self) -> bool {
        self.snapshots.len() == 1
    }

    /// Snapshot for stored level `level`.
    pub fn at(&self, level: usize) -> &ConservedState {
        if self.snapshots.len() == 1 {
            &self.snapshots[0]
        } else {
            &self.snapshots[level.min(self.snapshots.len() - 1)]
        }
    }

    pub fn check(&self, grid: &GridSpec, levels: usize) -> Result<()> {
        if !self.snapshots[0].fits(grid) {
            return Err(SweError::Shape("target does not match grid".into()));
        }
        if self.snapshots.len() != 1 && self.snapshots.len() != levels {
            return Err(SweError::Shape(format!(
                "target has {} snapshots, trajectory has {levels} levels",
                self.snapshots.len()
            )));
        }
        Ok(())
    }
}

/// Artificial viscosity `Q(α) = diag(0, α₁, α₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityParams {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl ViscosityParams {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha1.is_finite() && alpha1 >= 0.0) {
            return Err(SweError::config("physics.alpha1", format!("must be >= 0, got {alpha1}")));
        }
        if !(alpha2.is_finite() && alpha2 >= 0.0) {
            return Err(SweError::config("physics.alpha2", format!("must be >= 0, got {alpha2}")));
        }
        Ok(ViscosityParams { alpha1, alpha2 })
    }

    pub fn inviscid() -> Self {
        ViscosityParams { alpha1: 0.0, alpha2: 0.0 }
    }

    /// Diagonal of `Q(α)`; the first entry is always exactly zero.
    #[inline]
    pub fn q_diag(&self) -> [f64; 3] {
        [0.0, self.alpha1, self.alpha2]
    }

    pub fn max_alpha(&self) -> f64 {
        self.alpha1.max(self.alpha2)
    }

    pub fn is_zero(&self) -> bool {
        self.alpha1 == 0.0 && self.alpha2 == 0.0
    }
}

/// Inclusion `ω_ε = x₀ + ε·ω` with `ω` the disk of radius `ref_radius`
/// (the unit disk by default).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationShape {
    pub center: (f64, f64),
    pub ref_radius: f64,
    pub epsilon: f64,
}

impl PerturbationShape {
    pub fn unit_disk(center: (f64, f64), epsilon: f64) -> Result<Self> {
        Self::disk(center, 1.0, epsilon)
    }

    pub fn disk(center: (f64, f64), ref_radius: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(SweError::Domain(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(ref_radius.is_finite() && ref_radius > 0.0) {
            return Err(SweError::Domain(format!("reference radius must be positive, got {ref_radius}")));
        }
        Ok(PerturbationShape { center, ref_radius, epsilon })
    }

    /// `|ω|`
    pub fn reference_area(&self) -> f64 {
        PI * self.ref_radius * self.ref_radius
    }

    /// `|ω_ε| = ε²·|ω|`
    pub fn volume(&self) -> f64 {
        self.epsilon * self.epsilon * self.reference_area()
    }

    pub fn radius(&self) -> f64 {
        self.epsilon * self.ref_radius
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (cx, cy) = self.center;
        let r = self.radius();
        (x - cx).powi(2) + (y - cy).powi(2) < r * r
    }

    /// Errors unless `ω_ε` stays at least one full cell away from every wall.
    pub fn check_interior(&self, grid: &GridSpec) -> Result<()> {
        let (cx, cy) = self.center;
        let r = self.radius();
        let ok = cx - r >= grid.dx && cx + r <= grid.lx() - grid.dx && cy - r >= grid.dy && cy + r <= grid.ly() - grid.dy;
        if ok {
            Ok(())
        } else {
            Err(SweError::OutOfDomain { x: cx, y: cy, msg: format!("hole of radius {r} touches the boundary layer") })
        }
    }

    /// Flat indices of cells whose centres lie in `ω_ε`.
    pub fn covered_cells(&self, grid: &GridSpec) -> Vec<usize> {
        let mut out = Vec::new();
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if self.contains(grid.x_center(i), grid.y_center(j)) {
                    out.push(grid.idx(i, j));
                }
            }
        }
        out
    }

    /// Cell-count area of the discrete hole.
    pub fn covered_area(&self, grid: &GridSpec) -> f64 {
        self.covered_cells(grid).len() as f64 * grid.cell_area()
    }

    /// Indicator of the complement of the discrete hole (1 outside, 0 inside).
    pub fn outside_mask(&self, grid: &GridSpec) -> Field {
        let mut m = Field::constant(grid.nx, grid.ny, 1.0);
        for idx in self.covered_cells(grid) {
            m.data[idx] = 0.0;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_grid_picks_largest_dividing_step() {
        let g = make_grid(8, 8, 1.0, 1.0, 1.0, 0.3, 9.81).unwrap();
        assert_eq!(g.n_steps, 4);
        assert_eq!(g.dt, 0.25);
        assert_eq!(g.n_steps as f64 * g.dt, g.t_end);

        let g = make_grid(3, 3, 0.5, 0.5, 2.0, 2.0, 9.81).unwrap();
        assert_eq!(g.n_steps, 1);
        assert_eq!(g.dt, 2.0);
    }

    #[test]
    fn make_grid_rejects_small_or_negative() {
        assert!(matches!(make_grid(2, 8, 1.0, 1.0, 1.0, 0.1, 9.81), Err(SweError::Config { field, .. }) if field == "grid.nx"));
        assert!(make_grid(8, 8, -1.0, 1.0, 1.0, 0.1, 9.81).is_err());
        assert!(make_grid(8, 8, 1.0, 1.0, 1.0, 0.0, 9.81).is_err());
        assert!(make_grid(8, 8, 1.0, 1.0, 1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn make_grid_exact_ratio_not_bumped() {
        // 0.3 / 0.1 = 2.9999999999999996 in f64
        let g = make_grid(4, 4, 1.0, 1.0, 0.3, 0.1, 9.81).unwrap();
        assert_eq!(g.n_steps, 3);
        assert!(g.dt <= 0.1 + 1e-15);
    }

    #[test]
    fn constant_bathymetry_has_zero_gradient() {
        let grid = make_grid(6, 5, 0.3, 0.7, 1.0, 0.1, 9.81).unwrap();
        let b = Bathymetry::new(&grid, Field::constant(6, 5, 2.5)).unwrap();
        assert_eq!(b.dpsi_dx.max_abs(), 0.0);
        assert_eq!(b.dpsi_dy.max_abs(), 0.0);
    }

    #[test]
    fn linear_bathymetry_gradient_is_exact_including_walls() {
        let grid = make_grid(7, 5, 0.5, 0.25, 1.0, 0.1, 9.81).unwrap();
        let b = Bathymetry::new(&grid, Field::from_fn(&grid, |x, y| 0.2 * x - 0.3 * y)).unwrap();
        for v in &b.dpsi_dx.data {
            assert!((v - 0.2).abs() < 1e-12);
        }
        for v in &b.dpsi_dy.data {
            assert!((v + 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn valid_state_round_trips_validation() {
        let grid = make_grid(5, 4, 1.0, 1.0, 1.0, 0.1, 9.81).unwrap();
        let s = ConservedState {
            h: Field::from_fn(&grid, |x, y| 1.0 + 0.1 * x * y),
            q1: Field::zeros(5, 4),
            q2: Field::zeros(5, 4),
        };
        assert!(s.validate(&grid).is_ok());
        let mut bad = s.clone();
        bad.h.data[3] = 0.0;
        assert!(matches!(bad.validate(&grid), Err(SweError::Domain(_))));
        let wrong = ConservedState::zeros(&make_grid(4, 4, 1.0, 1.0, 1.0, 0.1, 9.81).unwrap());
        assert!(matches!(wrong.validate(&grid), Err(SweError::Shape(_))));
    }

    #[test]
    fn mirror_ghost_flips_normal_component_only() {
        let grid = make_grid(3, 3, 1.0, 1.0, 1.0, 0.1, 9.81).unwrap();
        let mut s = ConservedState::zeros(&grid);
        s.set_cell(grid.idx(0, 1), [2.0, 3.0, 4.0]);
        assert_eq!(s.neighbor_cell(0, 1, Axis::X, -1), [2.0, -3.0, 4.0]);
        let idx = grid.idx(1, 2);
        s.set_cell(idx, [2.0, 3.0, 4.0]);
        assert_eq!(s.neighbor_cell(1, 2, Axis::Y, 1), [2.0, 3.0, -4.0]);
    }

    #[test]
    fn viscosity_matrix_first_entry_zero() {
        let v = ViscosityParams::new(0.3, 0.7).unwrap();
        assert_eq!(v.q_diag(), [0.0, 0.3, 0.7]);
        assert!(ViscosityParams::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn unit_disk_area_and_coverage() {
        let grid = make_grid(40, 40, 0.1, 0.1, 1.0, 0.1, 9.81).unwrap();
        let p = PerturbationShape::unit_disk((2.05, 2.05), 0.5).unwrap();
        assert!((p.reference_area() - PI).abs() < 1e-15);
        assert!((p.volume() - 0.25 * PI).abs() < 1e-15);
        let area = p.covered_area(&grid);
        assert!((area - p.volume()).abs() / p.volume() < 0.1);
        assert!(p.check_interior(&grid).is_ok());
        let edge = PerturbationShape::unit_disk((0.3, 2.0), 0.5).unwrap();
        assert!(edge.check_interior(&grid).is_err());
    }
}
