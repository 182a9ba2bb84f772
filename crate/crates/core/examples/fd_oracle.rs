//! Finite-difference oracle: nucleate shrinking holes, compare the
//! extrapolated quotient with the analytic derivative.
//!
//! cargo run --release --example fd_oracle

use swetop::adjoint::{run_adjoint, AdjointMode};
use swetop::forward::{run_forward, StoragePolicy, SweModel};
use swetop::grid::{make_grid, Bathymetry, ConservedState, Field, TargetField, ViscosityParams};
use swetop::topo::TdContext;
use swetop::validation::{fd_td_oracle, BaseProblem, HoleModel};

fn main() -> swetop::Result<()> {
    let n = 32;
    let dx = 1.0 / n as f64;
    let grid = make_grid(n, n, dx, dx, 0.02, 0.05 * dx, 9.81)?;
    let init = ConservedState {
        h: Field::from_fn(&grid, |x, y| 1.0 + 0.1 * (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.02).exp()),
        q1: Field::zeros(n, n),
        q2: Field::zeros(n, n),
    };
    let model = SweModel::for_initial(grid.clone(), Bathymetry::flat(&grid), ViscosityParams::new(0.05, 0.05)?, &init)?;
    let base = BaseProblem { model: model.clone(), init: init.clone(), target: TargetField::uniform(&grid, [1.0, 0.0, 0.0]) };
    let traj = run_forward(&init, &model, StoragePolicy::every_step())?;
    let adj = run_adjoint(&traj, &base.target, &model, AdjointMode::Continuous)?;
    let ctx = TdContext::new(&traj, &adj, &model, &base.target)?;

    for x0 in [(0.4, 0.5), (0.6, 0.45), (0.38, 0.38)] {
        let analytic = ctx.evaluate(x0.0, x0.1)?.breakdown.total;
        let fd = fd_td_oracle(x0, &[6.0 * dx, 4.0 * dx, 3.0 * dx], &base, 1.0, HoleModel::Full)?;
        println!("x0 = {x0:?}");
        for e in &fd.entries {
            println!("  eps = {:.4}  cells = {:3}  quotient = {:+.6e}", e.epsilon, (e.area / grid.cell_area()).round(), e.quotient);
        }
        let a = fd.agreement(analytic);
        println!("  extrapolated {:+.6e}  analytic {:+.6e}  relative error {:.3}", a.extrapolated, a.analytic, a.relative_error);
    }
    Ok(())
}
