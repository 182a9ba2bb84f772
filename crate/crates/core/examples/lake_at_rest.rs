//! Still water over sloping and bumpy bathymetry stays still.
//!
//! cargo run --release --example lake_at_rest

use swetop::forward::{run_forward, StoragePolicy, SweModel};
use swetop::grid::{make_grid, Bathymetry, ConservedState, Field, ViscosityParams};

fn main() -> swetop::Result<()> {
    let n = 32;
    let dx = 1.0 / n as f64;
    let grid = make_grid(n, n, dx, dx, 0.5, 0.05 * dx, 9.81)?;
    let bottom = |x: f64, y: f64| 0.2 * x + 0.1 * y + 0.3 * (-((x - 0.6).powi(2) + (y - 0.4).powi(2)) / 0.01).exp();
    let eta = 1.0;
    let init = ConservedState {
        h: Field::from_fn(&grid, |x, y| eta - bottom(x, y)),
        q1: Field::zeros(n, n),
        q2: Field::zeros(n, n),
    };
    let bathy = Bathymetry::new(&grid, Field::from_fn(&grid, bottom))?;
    let model = SweModel::for_initial(grid.clone(), bathy, ViscosityParams::new(0.01, 0.01)?, &init)?;
    let traj = run_forward(&init, &model, StoragePolicy::every_step())?;

    let worst = traj.levels.iter().map(|s| s.q1.max_abs().max(s.q2.max_abs())).fold(0.0, f64::max);
    let surface = traj.final_state().h.data.iter().zip(&model.bathy.psi.data).map(|(h, p)| (h + p - eta).abs()).fold(0.0, f64::max);
    println!("{} steps: max |q| = {worst:.3e}, max |h + psi - eta| = {surface:.3e}", grid.n_steps);
    Ok(())
}
