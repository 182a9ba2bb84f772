//! Collapse of a Gaussian hump in a closed basin: mass ledger and wave speed.
//!
//! cargo run --release --example forward_bump

use swetop::forward::{run_forward, StoragePolicy, SweModel};
use swetop::grid::{make_grid, Bathymetry, ConservedState, Field, ViscosityParams};

fn main() -> swetop::Result<()> {
    let n = 64;
    let dx = 1.0 / n as f64;
    let grid = make_grid(n, n, dx, dx, 0.2, 0.05 * dx, 9.81)?;
    let init = ConservedState {
        h: Field::from_fn(&grid, |x, y| 1.0 + 0.1 * (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.02).exp()),
        q1: Field::zeros(n, n),
        q2: Field::zeros(n, n),
    };
    let model = SweModel::for_initial(grid.clone(), Bathymetry::flat(&grid), ViscosityParams::new(0.01, 0.01)?, &init)?;
    println!("dt = {:.3e}, steps = {}, max stable dt = {:.3e}", grid.dt, grid.n_steps, model.max_stable_dt(&init));

    let traj = run_forward(&init, &model, StoragePolicy::stride(32)?)?;
    for (k, s) in traj.levels.iter().enumerate() {
        println!("t = {:.4}  max h = {:.6}  energy = {:.10e}", traj.time(k), s.h.data.iter().cloned().fold(f64::MIN, f64::max), s.energy(&grid));
    }
    let d = &traj.diagnostics;
    println!("mass drift {:.3e}, clamp events {}", d.relative_mass_drift(), d.clamp_events);
    Ok(())
}
