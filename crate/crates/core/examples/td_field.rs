//! Topological derivative over the interior of a damped-bump run, with the
//! per-term breakdown at the most negative point.
//!
//! cargo run --release --example td_field

use swetop::adjoint::{run_adjoint, AdjointMode};
use swetop::forward::{run_forward, StoragePolicy, SweModel};
use swetop::grid::{make_grid, Bathymetry, ConservedState, Field, TargetField, ViscosityParams};
use swetop::topo::{interior_sweep, TdContext};

fn main() -> swetop::Result<()> {
    let n = 32;
    let dx = 1.0 / n as f64;
    let grid = make_grid(n, n, dx, dx, 0.05, 0.05 * dx, 9.81)?;
    let init = ConservedState {
        h: Field::from_fn(&grid, |x, y| 1.0 + 0.1 * (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.02).exp()),
        q1: Field::zeros(n, n),
        q2: Field::zeros(n, n),
    };
    let model = SweModel::for_initial(grid.clone(), Bathymetry::flat(&grid), ViscosityParams::new(0.05, 0.05)?, &init)?;
    let target = TargetField::uniform(&grid, [1.0, 0.0, 0.0]);
    let traj = run_forward(&init, &model, StoragePolicy::every_step())?;
    let adj = run_adjoint(&traj, &target, &model, AdjointMode::Continuous)?;
    let ctx = TdContext::new(&traj, &adj, &model, &target)?;

    let samples: Vec<_> = ctx.field(&interior_sweep(&grid, 2)).into_iter().filter_map(|(_, _, r)| r.ok()).collect();
    let mut rows = vec![String::new(); n / 2];
    for s in &samples {
        let j = (s.y / (2.0 * dx)) as usize;
        rows[j].push(if s.breakdown.total < -0.02 { '#' } else if s.breakdown.total < -0.01 { '+' } else { '.' });
    }
    for r in rows.iter().rev().filter(|r| !r.is_empty()) {
        println!("{r}");
    }
    let best = samples.iter().min_by(|a, b| a.breakdown.total.total_cmp(&b.breakdown.total)).unwrap();
    println!("most negative at ({:.3}, {:.3}): {:#?}", best.x, best.y, best.breakdown);
    Ok(())
}
