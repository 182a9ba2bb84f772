//! Independent checks: adjoint dot-product test, continuous-vs-discrete
//! adjoint convergence, affinity of the flux divergence in the gradient
//! slot, and the hole-punching finite-difference oracle for the
//! topological derivative.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adjoint::{continuous_propagate, discrete_transpose_propagate, tangent_propagate};
use crate::error::{Result, SweError};
use crate::flux::{flux_divergence_form, CellState, Grad3};
use crate::forward::{run_forward, StoragePolicy, SweModel, Trajectory};
use crate::grid::{make_grid, AdjointState, Bathymetry, ConservedState, Field, GridSpec, PerturbationShape, TargetField, ViscosityParams};
use crate::objective::{evaluate_j, evaluate_j_masked};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotProductReport {
    /// `⟨L δU, W⟩`
    pub lhs: f64,
    /// `⟨δU, L* W⟩`
    pub rhs: f64,
    pub residual: f64,
}

impl DotProductReport {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        let residual = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-30);
        DotProductReport { lhs, rhs, residual }
    }
}

/// White-noise state with entries uniform in `[−1, 1)`.
pub fn white_noise(grid: &GridSpec, rng: &mut ChaCha8Rng) -> ConservedState {
    let mut s = ConservedState::zeros(grid);
    for k in 0..3 {
        for v in s.channel_mut(k).data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    s
}

/// Smooth random state built from low cosine/sine modes whose parities match
/// the mirror ghosts (so the field stays smooth across the walls).
pub fn smooth_noise(grid: &GridSpec, rng: &mut ChaCha8Rng, modes: usize) -> ConservedState {
    let (lx, ly) = (grid.lx(), grid.ly());
    let mut s = ConservedState::zeros(grid);
    for k in 0..3 {
        let mut coef = vec![0.0; (modes + 1) * (modes + 1)];
        for c in coef.iter_mut() {
            *c = rng.random_range(-1.0..1.0);
        }
        let f = Field::from_fn(grid, |x, y| {
            let mut v = 0.0;
            for a in 0..=modes {
                for b in 0..=modes {
                    let (ka, kb) = (a as f64 * PI / lx, b as f64 * PI / ly);
                    let bx = if k == 1 { (ka * x).sin() } else { (ka * x).cos() };
                    let by = if k == 2 { (kb * y).sin() } else { (kb * y).cos() };
                    v += coef[a * (modes + 1) + b] * bx * by;
                }
            }
            v
        });
        *s.channel_mut(k) = f;
    }
    s
}

/// Compares `⟨L δU, W⟩` with `⟨δU, L* W⟩` for a caller-supplied adjoint
/// propagator.
pub fn dot_product_with<F>(traj: &Trajectory, model: &SweModel, du0: &ConservedState, w: &AdjointState, adjoint: F) -> Result<DotProductReport>
where
    F: Fn(&Trajectory, &SweModel, &AdjointState) -> Result<AdjointState>,
{
    let ldu = tangent_propagate(traj, model, du0)?;
    let lw: ConservedState = adjoint(traj, model, w)?.into();
    let wc: ConservedState = w.clone().into();
    Ok(DotProductReport::new(ldu.dot(&wc), du0.dot(&lw)))
}

/// Discrete-mode dot-product test with seeded white-noise `δU` and `W`.
pub fn dot_product_test(traj: &Trajectory, model: &SweModel, seed: u64) -> Result<DotProductReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let du0 = white_noise(&model.grid, &mut rng);
    let w: AdjointState = white_noise(&model.grid, &mut rng).into();
    dot_product_with(traj, model, &du0, &w, discrete_transpose_propagate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub resolutions: Vec<usize>,
    /// `‖L*_cont W − L*_disc W‖ / ‖L*_disc W‖` per grid.
    pub discrepancy: Vec<f64>,
    /// `log2` ratios of `discrepancy` between consecutive grids.
    pub orders: Vec<f64>,
    /// Dot-product residual of the continuous adjoint (signed gaps may cancel).
    pub continuous_residual: Vec<f64>,
    /// Discrete-mode residuals on the same runs.
    pub discrete_residual: Vec<f64>,
}

impl ConvergenceReport {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn decreasing(&self) -> bool {
        self.discrepancy.windows(2).all(|w| w[1] < w[0])
    }
}

/// Base scene of the convergence study: unit square, still depth with a weak
/// shear flow over gentle bathymetry, `dt = dx/20`.
pub fn convergence_scene(n: usize, t_end: f64, alpha: f64) -> Result<(SweModel, ConservedState)> {
    let dx = 1.0 / n as f64;
    let grid = make_grid(n, n, dx, dx, t_end, 0.05 * dx, 9.81)?;
    let init = ConservedState {
        h: Field::constant(n, n, 1.0),
        q1: Field::from_fn(&grid, |x, y| 0.03 * (PI * x).sin() * (PI * y).cos()),
        q2: Field::from_fn(&grid, |x, y| -0.02 * (PI * x).cos() * (PI * y).sin()),
    };
    let psi = Field::from_fn(&grid, |x, y| 0.03 * (PI * x).cos() * (PI * y).cos());
    let model = SweModel::for_initial(grid.clone(), Bathymetry::new(&grid, psi)?, ViscosityParams::new(alpha, alpha)?, &init)?;
    Ok((model, init))
}

/// Refinement study of the continuous adjoint against the exact transpose.
///
/// The same smooth `δU` and `W` (fixed seeded mode coefficients) are sampled
/// on each grid.
pub fn adjoint_convergence_study(resolutions: &[usize], t_end: f64, alpha: f64, seed: u64) -> Result<ConvergenceReport> {
    let mut discrepancy = Vec::new();
    let mut continuous_residual = Vec::new();
    let mut discrete_residual = Vec::new();
    for &n in resolutions {
        let (model, init) = convergence_scene(n, t_end, alpha)?;
        let traj = run_forward(&init, &model, StoragePolicy::every_step())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let du0 = smooth_noise(&model.grid, &mut rng, 2);
        let w: AdjointState = smooth_noise(&model.grid, &mut rng, 2).into();
        let cont = dot_product_with(&traj, &model, &du0, &w, continuous_propagate)?;
        let disc = dot_product_with(&traj, &model, &du0, &w, discrete_transpose_propagate)?;
        continuous_residual.push(cont.residual);
        discrete_residual.push(disc.residual);
        let pc = continuous_propagate(&traj, &model, &w)?;
        let pd = discrete_transpose_propagate(&traj, &model, &w)?;
        let diff = pc.axpy(-1.0, &pd);
        discrepancy.push((diff.dot(&diff) / pd.dot(&pd)).sqrt());
    }
    let orders = discrepancy.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(ConvergenceReport { resolutions: resolutions.to_vec(), discrepancy, orders, continuous_residual, discrete_residual })
}

/// Max superposition defect
/// `‖form(U, G₁+G₂) − form(U, G₁) − form(U, G₂) + form(U, 0)‖∞`
/// over 100 seeded random triples.
pub fn affinity_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = 9.81;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let c = CellState::new(rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let mut draw = || -> Grad3 { [0, 1, 2].map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]) };
        let (g1, g2) = (draw(), draw());
        let mut g12 = g1;
        for k in 0..3 {
            for l in 0..2 {
                g12[k][l] += g2[k][l];
            }
        }
        let f12 = flux_divergence_form(c, &g12, g);
        let f1 = flux_divergence_form(c, &g1, g);
        let f2 = flux_divergence_form(c, &g2, g);
        let f0 = flux_divergence_form(c, &[[0.0; 2]; 3], g);
        for k in 0..3 {
            worst = worst.max((f12[k] - f1[k] - f2[k] + f0[k]).abs());
        }
    }
    worst
}

/// What the hole removes in the perturbed problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HoleModel {
    /// Viscosity (face coefficients) and objective integrand.
    #[default]
    Full,
    /// Objective integrand only; the state is not re-solved.
    IntegrandOnly,
}

/// Unperturbed problem handed to the oracle.
#[derive(Debug, Clone)]
pub struct BaseProblem {
    pub model: SweModel,
    pub init: ConservedState,
    pub target: TargetField,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEntry {
    pub epsilon: f64,
    pub j_eps: f64,
    /// Measured covered area `count·dx·dy`.
    pub area: f64,
    /// Mean `|x − x₀|²` over covered cell centres.
    pub second_moment: f64,
    pub quotient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub x0: (f64, f64),
    pub j0: f64,
    pub entries: Vec<FdEntry>,
    /// Richardson extrapolation of the two smallest holes in the second moment.
    pub extrapolated: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdAgreement {
    pub analytic: f64,
    pub extrapolated: f64,
    pub relative_error: f64,
    pub sign_agrees: bool,
}

impl FdReport {
    pub fn monotone(&self) -> bool {
        let q: Vec<f64> = self.entries.iter().map(|e| e.quotient).collect();
        q.windows(2).all(|w| w[1] >= w[0]) || q.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn agreement(&self, analytic: f64) -> FdAgreement {
        let relative_error = (self.extrapolated - analytic).abs() / analytic.abs().max(1e-300);
        FdAgreement { analytic, extrapolated: self.extrapolated, relative_error, sign_agrees: self.extrapolated.signum() == analytic.signum() }
    }
}

/// Forward run of the base problem with the hole's viscosity mask applied.
fn perturbed_run(base: &BaseProblem, mask: Option<Field>) -> Result<Trajectory> {
    let model = base.model.clone().with_visc_mask(mask);
    run_forward(&base.init, &model, StoragePolicy::every_step())
}

pub fn fd_td_oracle(x0: (f64, f64), eps_list: &[f64], base: &BaseProblem, omega_radius: f64, hole: HoleModel) -> Result<FdReport> {
    let grid = &base.model.grid;
    if eps_list.len() < 3 {
        return Err(SweError::Domain(format!("need at least 3 hole sizes, got {}", eps_list.len())));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(SweError::Domain("hole sizes must be strictly decreasing".into()));
    }
    let shapes: Vec<PerturbationShape> = eps_list.iter().map(|&e| PerturbationShape::disk(x0, omega_radius, e)).collect::<Result<_>>()?;
    for s in &shapes {
        s.check_interior(grid)?;
        let n = s.covered_cells(grid).len();
        if n < 4 {
            return Err(SweError::Degenerate(format!("hole of radius {} covers only {n} cell centres", s.radius())));
        }
    }
    let traj0 = run_forward(&base.init, &base.model, StoragePolicy::every_step())?;
    let j0 = evaluate_j(&traj0, &base.target, grid)?.j_total;

    let entries: Vec<FdEntry> = shapes
        .par_iter()
        .map(|s| -> Result<FdEntry> {
            let j_eps = match hole {
                HoleModel::IntegrandOnly => evaluate_j_masked(&traj0, &base.target, grid, s)?.j_total,
                HoleModel::Full => {
                    let t = perturbed_run(base, Some(s.outside_mask(grid)))?;
                    evaluate_j_masked(&t, &base.target, grid, s)?.j_total
                }
            };
            let cells = s.covered_cells(grid);
            let area = cells.len() as f64 * grid.cell_area();
            let second_moment = cells
                .iter()
                .map(|&idx| {
                    let (i, j) = (idx % grid.nx, idx / grid.nx);
                    (grid.x_center(i) - x0.0).powi(2) + (grid.y_center(j) - x0.1).powi(2)
                })
                .sum::<f64>()
                / cells.len() as f64;
            Ok(FdEntry { epsilon: s.epsilon, j_eps, area, second_moment, quotient: (j_eps - j0) / area })
        })
        .collect::<Result<_>>()?;

    let a = &entries[entries.len() - 2];
    let b = &entries[entries.len() - 1];
    let extrapolated = if (a.second_moment - b.second_moment).abs() > 1e-14 * a.second_moment {
        (a.second_moment * b.quotient - b.second_moment * a.quotient) / (a.second_moment - b.second_moment)
    } else {
        b.quotient
    };
    Ok(FdReport { x0, j0, entries, extrapolated })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_perturbation_gives_zero_residual() {
        let (model, init) = convergence_scene(8, 0.02, 0.01).unwrap();
        let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
        let z = ConservedState::zeros(&model.grid);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w: AdjointState = white_noise(&model.grid, &mut rng).into();
        let r = dot_product_with(&traj, &model, &z, &w, discrete_transpose_propagate).unwrap();
        assert_eq!((r.lhs, r.rhs, r.residual), (0.0, 0.0, 0.0));
    }

    #[test]
    fn discrete_dot_product_is_round_off() {
        let (model, init) = convergence_scene(12, 0.02, 0.01).unwrap();
        let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
        assert!(dot_product_test(&traj, &model, 7).unwrap().residual <= 1e-12);
    }

    #[test]
    fn affinity_examples() {
        assert!(affinity_check(3) <= 1e-12);
        let c = CellState::new(1.3, 0.2, -0.4);
        let g1 = [[0.1, 0.2], [0.3, -0.1], [0.0, 0.5]];
        let z = [[0.0; 2]; 3];
        let f1 = flux_divergence_form(c, &g1, 9.81);
        let f0 = flux_divergence_form(c, &z, 9.81);
        // G₂ = 0: form(G₁ + 0) − form(G₁) − form(0) + form(0)
        let same = flux_divergence_form(c, &g1, 9.81);
        for k in 0..3 {
            assert_eq!(same[k] - f1[k] - f0[k] + f0[k], 0.0);
        }
        let scaled = flux_divergence_form(c, &g1.map(|r| [2.5 * r[0], 2.5 * r[1]]), 9.81);
        for k in 0..3 {
            assert!((scaled[k] - 2.5 * f1[k]).abs() <= 1e-14);
        }
    }

    fn small_base() -> BaseProblem {
        let (model, init) = convergence_scene(24, 0.02, 0.02).unwrap();
        let target = TargetField::uniform(&model.grid, [1.0, 0.0, 0.0]);
        BaseProblem { model, init, target }
    }

    #[test]
    fn oracle_rejects_bad_hole_lists() {
        let base = small_base();
        let g = &base.model.grid;
        let x0 = (g.x_center(12), g.y_center(12));
        let e = g.dx;
        assert!(fd_td_oracle(x0, &[4.0 * e, 4.0 * e, 3.0 * e], &base, 1.0, HoleModel::Full).is_err());
        assert!(fd_td_oracle(x0, &[4.0 * e, 3.0 * e], &base, 1.0, HoleModel::Full).is_err());
        assert!(matches!(fd_td_oracle(x0, &[3.0 * e, 2.0 * e, 0.5 * e], &base, 1.0, HoleModel::Full), Err(SweError::Degenerate(_))));
    }

    #[test]
    fn oracle_is_reproducible() {
        let base = small_base();
        let g = &base.model.grid;
        let x0 = (g.x_center(12), g.y_center(11));
        let eps = [4.0 * g.dx, 3.0 * g.dx, 2.0 * g.dx];
        let a = fd_td_oracle(x0, &eps, &base, 1.0, HoleModel::Full).unwrap();
        let b = fd_td_oracle(x0, &eps, &base, 1.0, HoleModel::Full).unwrap();
        assert_eq!(a, b);
        assert!(a.entries.iter().all(|e| e.quotient < 0.0));
    }
}
