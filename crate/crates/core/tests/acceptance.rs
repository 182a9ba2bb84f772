//! Acceptance suite. Every criterion writes one `PASS`/`FAIL` line to stderr
//! (outside the test harness capture) before asserting.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swetop::adjoint::{run_adjoint, AdjointMode};
use swetop::corrector::{closed_form_corrector, solve_corrector_numeric};
use swetop::forward::{run_forward, StoragePolicy, SweModel, Trajectory};
use swetop::grid::{make_grid, Bathymetry, ConservedState, Field, GridSpec, TargetField, ViscosityParams};
use swetop::objective::evaluate_j;
use swetop::topo::{interior_sweep, TdContext};
use swetop::validation::{adjoint_convergence_study, affinity_check, convergence_scene, dot_product_test, fd_td_oracle, BaseProblem, HoleModel};

const MASS_DRIFT_TOL: f64 = 1e-10;
const MASS_RUNTIME: Duration = Duration::from_secs(10);
const LAKE_TOL: f64 = 1e-10;
const LAKE_RUNTIME: Duration = Duration::from_secs(2);
const DOT_TOL: f64 = 1e-10;
const MIN_ORDER: f64 = 0.9;
const ZERO_ADJOINT_TOL: f64 = 1e-14;
const ZERO_TD_TOL: f64 = 1e-14;
const AFFINITY_TOL: f64 = 1e-12;
const R1_REL_TOL: f64 = 1e-10;
const CORRECTOR_TOL: f64 = 1e-2;
const CORRECTOR_R_TOL: f64 = 1e-3;
const FD_REL_TOL: f64 = 0.25;
const FD_RUNTIME: Duration = Duration::from_secs(60);
const DEGENERATE_TOL: f64 = 0.05;
const OBJECTIVE_TOL: f64 = 1e-12;
const SEED: u64 = 20240917;

fn report(n: u32, name: &str, pass: bool, detail: String) {
    let line = format!("criterion {n} {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{line}");
}

fn unit_square(n: usize, t_end: f64, dt: f64) -> GridSpec {
    make_grid(n, n, 1.0 / n as f64, 1.0 / n as f64, t_end, dt, 9.81).unwrap()
}

/// `1 + amp·exp(−|x − c|²/width)` at rest.
fn bump(grid: &GridSpec, amp: f64, width: f64) -> ConservedState {
    ConservedState {
        h: Field::from_fn(grid, |x, y| 1.0 + amp * (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / width).exp()),
        q1: Field::zeros(grid.nx, grid.ny),
        q2: Field::zeros(grid.nx, grid.ny),
    }
}

fn flat_model(grid: &GridSpec, alpha: f64, init: &ConservedState) -> SweModel {
    SweModel::for_initial(grid.clone(), Bathymetry::flat(grid), ViscosityParams::new(alpha, alpha).unwrap(), init).unwrap()
}

#[test]
fn c1_mass_conservation() {
    let n = 64;
    let dt = 0.05 / n as f64;
    let grid = unit_square(n, 500.0 * dt, dt);
    assert_eq!(grid.n_steps, 500);
    let init = bump(&grid, 0.1, 0.02);
    let model = flat_model(&grid, 0.01, &init);
    let start = Instant::now();
    let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
    let elapsed = start.elapsed();
    let drift = traj.diagnostics.relative_mass_drift();
    let pass = drift <= MASS_DRIFT_TOL && elapsed <= MASS_RUNTIME;
    report(1, "mass conservation", pass, format!("drift {drift:.3e} <= {MASS_DRIFT_TOL:e}, {:.2}s <= {}s", elapsed.as_secs_f64(), MASS_RUNTIME.as_secs()));
}

#[test]
fn c2_lake_at_rest() {
    let n = 32;
    let dt = 0.05 / n as f64;
    let grid = unit_square(n, 200.0 * dt, dt);
    assert_eq!(grid.n_steps, 200);
    let psi = Field::from_fn(&grid, |x, y| 0.1 + 0.3 * x + 0.2 * y);
    let init = ConservedState {
        h: Field::from_fn(&grid, |x, y| 1.0 - (0.1 + 0.3 * x + 0.2 * y)),
        q1: Field::zeros(n, n),
        q2: Field::zeros(n, n),
    };
    let model = SweModel::for_initial(grid.clone(), Bathymetry::new(&grid, psi).unwrap(), ViscosityParams::new(0.01, 0.01).unwrap(), &init).unwrap();
    let start = Instant::now();
    let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
    let elapsed = start.elapsed();
    let worst = traj.levels.iter().map(|s| s.q1.max_abs().max(s.q2.max_abs())).fold(0.0, f64::max);
    let pass = worst <= LAKE_TOL && elapsed <= LAKE_RUNTIME;
    report(2, "lake at rest", pass, format!("max |q| {worst:.3e} <= {LAKE_TOL:e}, {:.2}s <= {}s", elapsed.as_secs_f64(), LAKE_RUNTIME.as_secs()));
}

#[test]
fn c3_dot_product_and_adjoint_convergence() {
    let (model, init) = convergence_scene(16, 10.0 * 0.05 / 16.0, 0.01).unwrap();
    assert_eq!(model.grid.n_steps, 10);
    let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
    let dot = dot_product_test(&traj, &model, SEED).unwrap();
    // Short horizon: coarser grids or longer runs are still pre-asymptotic
    // because the dissipation damps W strongly at coarse resolution.
    let study = adjoint_convergence_study(&[32, 64, 128], 0.025, 0.01, SEED).unwrap();
    let order = study.min_order();
    let pass = dot.residual <= DOT_TOL && study.decreasing() && order >= MIN_ORDER;
    report(
        3,
        "dot product and adjoint convergence",
        pass,
        format!("residual {:.3e} <= {DOT_TOL:e}, discrepancy {:?}, orders {:.3?} >= {MIN_ORDER}", dot.residual, study.discrepancy.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>(), study.orders),
    );
}

#[test]
fn c4_adjoint_zero_case() {
    let n = 16;
    let grid = unit_square(n, 0.05, 0.05 / n as f64);
    let state = ConservedState { h: Field::constant(n, n, 1.3), q1: Field::zeros(n, n), q2: Field::zeros(n, n) };
    let model = flat_model(&grid, 0.02, &state);
    let target = TargetField::constant_in_time(state.clone());
    let traj = run_forward(&state, &model, StoragePolicy::every_step()).unwrap();
    let mut worst_p: f64 = 0.0;
    let mut worst_td: f64 = 0.0;
    let mut points = 0;
    for mode in [AdjointMode::Continuous, AdjointMode::Discrete] {
        let adj = run_adjoint(&traj, &target, &model, mode).unwrap();
        worst_p = worst_p.max(adj.max_abs());
        let ctx = TdContext::new(&traj, &adj, &model, &target).unwrap();
        for (_, _, r) in ctx.field(&interior_sweep(&grid, 1)) {
            worst_td = worst_td.max(r.unwrap().breakdown.total.abs());
            points += 1;
        }
    }
    let pass = worst_p <= ZERO_ADJOINT_TOL && worst_td <= ZERO_TD_TOL;
    report(4, "adjoint zero case", pass, format!("max |P| {worst_p:.3e} <= {ZERO_ADJOINT_TOL:e}, max |td| {worst_td:.3e} over {points} points"));
}

/// Smooth 32×32 bump scene shared by the affinity and FD-oracle criteria.
fn smooth_scene() -> BaseProblem {
    let n = 32;
    let grid = unit_square(n, 0.05, 0.05 / n as f64);
    let init = bump(&grid, 0.1, 0.02);
    let model = flat_model(&grid, 0.05, &init);
    BaseProblem { model, init, target: TargetField::uniform(&grid, [1.0, 0.0, 0.0]) }
}

#[test]
fn c5_affinity_cancellation() {
    let defect = affinity_check(SEED);
    let base = smooth_scene();
    let grid = &base.model.grid;
    let traj = run_forward(&base.init, &base.model, StoragePolicy::every_step()).unwrap();
    let adj = run_adjoint(&traj, &base.target, &base.model, AdjointMode::Continuous).unwrap();
    let ctx = TdContext::new(&traj, &adj, &base.model, &base.target).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let margin = 2.0 * grid.dx;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (x, y) = (rng.random_range(margin..1.0 - margin), rng.random_range(margin..1.0 - margin));
        let b = ctx.evaluate(x, y).unwrap().breakdown;
        worst = worst.max(b.r1_a1.abs() / b.dl_a1.abs().max(f64::MIN_POSITIVE));
    }
    let pass = defect <= AFFINITY_TOL && worst <= R1_REL_TOL;
    report(5, "affinity cancellation", pass, format!("superposition defect {defect:.3e} <= {AFFINITY_TOL:e}, max |r1_a1|/|dl_a1| {worst:.3e} <= {R1_REL_TOL:e}"));
}

#[test]
fn c6_corrector() {
    let g = [[0.0, 0.0], [0.8, -0.3], [0.25, 0.6]];
    let visc = ViscosityParams::new(0.05, 0.02).unwrap();
    let closed = closed_form_corrector(&g, &visc, 1.0);
    let r5 = solve_corrector_numeric(&g, &visc, 1.0, 5.0, 128, 0.0).unwrap();
    let r10 = solve_corrector_numeric(&g, &visc, 1.0, 10.0, 128, 0.0).unwrap();
    // Points at least two cells of the coarser mesh inside the disk.
    let inner = 1.0 - 2.0 * r10.patch.as_ref().unwrap().h;
    let scale = g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut dev, mut change) = (0.0f64, 0.0f64);
    let m = 41;
    for a in 0..m {
        for b in 0..m {
            let (x, y) = (-1.0 + 2.0 * a as f64 / (m - 1) as f64, -1.0 + 2.0 * b as f64 / (m - 1) as f64);
            if x.hypot(y) > inner {
                continue;
            }
            let (gc, g5, g10) = (closed.grad_at(x, y), r5.grad_at(x, y), r10.grad_at(x, y));
            for k in 0..3 {
                for l in 0..2 {
                    dev = dev.max((g5[k][l] - gc[k][l]).abs());
                    change = change.max((g10[k][l] - g5[k][l]).abs() / scale);
                }
            }
        }
    }
    let pass = dev <= CORRECTOR_TOL && change <= CORRECTOR_R_TOL;
    report(6, "corrector", pass, format!("max deviation {dev:.3e} <= {CORRECTOR_TOL:e}, R doubling change {change:.3e} <= {CORRECTOR_R_TOL:e}"));
}

const TD_POINTS: [(f64, f64); 5] = [(0.4, 0.5), (0.6, 0.45), (0.5, 0.62), (0.38, 0.38), (0.55, 0.35)];

#[test]
fn c7_td_against_fd_oracle() {
    let start = Instant::now();
    let base = smooth_scene();
    let dx = base.model.grid.dx;
    let traj = run_forward(&base.init, &base.model, StoragePolicy::every_step()).unwrap();
    let adj = run_adjoint(&traj, &base.target, &base.model, AdjointMode::Continuous).unwrap();
    let ctx = TdContext::new(&traj, &adj, &base.model, &base.target).unwrap();
    let (mut signs, mut close) = (0, 0);
    let mut rel = Vec::new();
    for &(x, y) in &TD_POINTS {
        let analytic = ctx.evaluate(x, y).unwrap().breakdown.total;
        let fd = fd_td_oracle((x, y), &[6.0 * dx, 4.0 * dx, 3.0 * dx], &base, 1.0, HoleModel::Full).unwrap();
        let a = fd.agreement(analytic);
        signs += a.sign_agrees as usize;
        close += (a.relative_error <= FD_REL_TOL) as usize;
        rel.push(a.relative_error);
    }
    let elapsed = start.elapsed();
    let pass = signs >= 4 && close >= 3 && elapsed <= FD_RUNTIME;
    report(
        7,
        "TD vs FD oracle",
        pass,
        format!("sign {signs}/5 (need 4), within {FD_REL_TOL} {close}/5 (need 3), relative errors {rel:.3?}, {:.2}s", elapsed.as_secs_f64()),
    );
}

#[test]
fn c8_inviscid_degeneracy() {
    let n = 64;
    let grid = unit_square(n, 0.05, 0.05 / n as f64);
    let init = bump(&grid, 0.1, 0.06);
    let model = flat_model(&grid, 0.0, &init);
    let base = BaseProblem { model: model.clone(), init: init.clone(), target: TargetField::uniform(&grid, [1.0, 0.0, 0.0]) };
    let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
    let adj = run_adjoint(&traj, &base.target, &model, AdjointMode::Continuous).unwrap();
    let ctx = TdContext::new(&traj, &adj, &model, &base.target).unwrap();

    let mut exact = true;
    for (_, _, r) in ctx.field(&interior_sweep(&grid, 4)) {
        let b = r.unwrap().breakdown;
        let zeros = [b.r1_a1, b.r2_a1, b.r1_a2, b.r2_a2, b.dl_a2].iter().all(|v| v.to_bits() == 0.0f64.to_bits());
        exact &= zeros && b.total == b.dl_a1 + b.dl_j;
    }
    let mut worst: f64 = 0.0;
    for &(x, y) in &TD_POINTS {
        let dl_j = ctx.evaluate(x, y).unwrap().breakdown.dl_j;
        let fd = fd_td_oracle((x, y), &[6.0 * grid.dx, 4.0 * grid.dx, 3.0 * grid.dx], &base, 1.0, HoleModel::IntegrandOnly).unwrap();
        worst = worst.max((fd.extrapolated - dl_j).abs() / dl_j.abs());
    }
    let pass = exact && worst <= DEGENERATE_TOL;
    report(8, "inviscid degeneracy", pass, format!("exact split {exact}, max integrand-only relative error {worst:.3e} <= {DEGENERATE_TOL}"));
}

/// Independent quadrature: explicit differences and trapezoid weights.
fn brute_force_j(levels: &[ConservedState], targets: &[ConservedState], grid: &GridSpec, dt: f64) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut total = 0.0;
    for (n, (s, d)) in levels.iter().zip(targets).enumerate() {
        let w = if n == 0 || n == levels.len() - 1 { 0.5 * dt } else { dt };
        let mut level = 0.0;
        for k in 0..3 {
            let f = s.channel(k);
            let v = |i: usize, j: usize| f.data[i + nx * j];
            for j in 0..ny {
                for i in 0..nx {
                    let gx = match i {
                        0 => (v(1, j) - v(0, j)) / grid.dx,
                        _ if i == nx - 1 => (v(i, j) - v(i - 1, j)) / grid.dx,
                        _ => (v(i + 1, j) - v(i - 1, j)) / (2.0 * grid.dx),
                    };
                    let gy = match j {
                        0 => (v(i, 1) - v(i, 0)) / grid.dy,
                        _ if j == ny - 1 => (v(i, j) - v(i, j - 1)) / grid.dy,
                        _ => (v(i, j + 1) - v(i, j - 1)) / (2.0 * grid.dy),
                    };
                    let e = v(i, j) - d.channel(k).data[i + nx * j];
                    level += (gx * gx + gy * gy + e * e) * grid.dx * grid.dy;
                }
            }
        }
        total += w * level;
    }
    total
}

#[test]
fn c9_objective_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (dx, dy, dt) = (rng.random_range(0.05..0.5), rng.random_range(0.05..0.5), rng.random_range(0.01..0.2));
        let grid = make_grid(8, 8, dx, dy, 4.0 * dt, dt, 9.81).unwrap();
        let random_state = |rng: &mut ChaCha8Rng| {
            let mut field = |lo: f64, hi: f64| Field { nx: 8, ny: 8, data: (0..64).map(|_| rng.random_range(lo..hi)).collect() };
            ConservedState { h: field(0.5, 2.0), q1: field(-1.0, 1.0), q2: field(-1.0, 1.0) }
        };
        let levels: Vec<ConservedState> = (0..5).map(|_| random_state(&mut rng)).collect();
        let targets: Vec<ConservedState> = (0..5).map(|_| random_state(&mut rng)).collect();
        let traj = Trajectory::from_levels(levels.clone(), grid.dt).unwrap();
        let j = evaluate_j(&traj, &TargetField::per_level(targets.clone()).unwrap(), &grid).unwrap().j_total;
        let reference = brute_force_j(&levels, &targets, &grid, grid.dt);
        worst = worst.max((j - reference).abs() / reference.abs());
    }
    report(9, "objective oracle", worst <= OBJECTIVE_TOL, format!("max relative difference {worst:.3e} <= {OBJECTIVE_TOL:e} over 10 random 8x8x5 trajectories"));
}
