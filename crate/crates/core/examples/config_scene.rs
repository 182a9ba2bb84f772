//! Builds a run from the line-oriented config format and prints it back.
//!
//! cargo run --release --example config_scene

use swetop::config::{parse_config, print_config};
use swetop::forward::run_forward;

const TEXT: &str = "
grid.nx = 40
grid.ny = 20
grid.dx = 0.05
grid.dy = 0.05
grid.t_end = 0.1
grid.dt_hint = 0.01
physics.alpha1 = 0.02
physics.alpha2 = 0.02
physics.bathymetry = ramp(0, 0.1, 0)
physics.init_h = lake_at_rest(1)
physics.init_q1 = gaussian(0, 0.05, 1, 0.5, 0.15)
td.points = 1 0.5; 1.5 0.5
";

fn main() -> swetop::Result<()> {
    let cfg = parse_config(TEXT)?;
    let scene = cfg.scene()?;
    println!("dt hint {} capped to {:.4e}", cfg.grid.dt_hint, scene.model.grid.dt);
    let traj = run_forward(&scene.init, &scene.model, scene.storage)?;
    println!("{} levels, mass drift {:.2e}", traj.len(), traj.diagnostics.relative_mass_drift());
    print!("{}", print_config(&cfg));
    Ok(())
}
