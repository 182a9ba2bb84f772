//! Plain-text field tables, one row per cell (per stored level for
//! trajectories). Values use 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::adjoint::AdjointTrajectory;
use crate::error::Result;
use crate::forward::Trajectory;
use crate::grid::GridSpec;
use crate::topo::TdSample;

pub const FORWARD_HEADER: &str = "# x y t h q1 q2";
pub const ADJOINT_HEADER: &str = "# x y t p1 p2 p3";
pub const TD_HEADER: &str = "# x y td r1_a1 r2_a1 dl_a1 r2_a2 dl_a2 dl_j";

fn row(out: &mut String, values: &[f64]) {
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

fn levels_table<'a>(header: &str, grid: &GridSpec, levels: impl Iterator<Item = (f64, [&'a [f64]; 3])>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for (t, ch) in levels {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let k = grid.idx(i, j);
                row(&mut out, &[grid.x_center(i), grid.y_center(j), t, ch[0][k], ch[1][k], ch[2][k]]);
            }
        }
    }
    out
}

pub fn forward_table(traj: &Trajectory, grid: &GridSpec) -> String {
    let times = traj.times();
    levels_table(FORWARD_HEADER, grid, traj.levels.iter().zip(times).map(|(s, t)| (t, [&s.h.data[..], &s.q1.data[..], &s.q2.data[..]])))
}

/// Every adjoint level, at times `n·dt`.
pub fn adjoint_table(adj: &AdjointTrajectory, grid: &GridSpec) -> String {
    levels_table(
        ADJOINT_HEADER,
        grid,
        adj.levels.iter().enumerate().map(|(n, p)| (n as f64 * adj.dt, [&p.p1.data[..], &p.p2.data[..], &p.p3.data[..]])),
    )
}

pub fn td_table(samples: &[TdSample]) -> String {
    let mut out = String::from(TD_HEADER);
    out.push('\n');
    for s in samples {
        let b = &s.breakdown;
        row(&mut out, &[s.x, s.y, b.total, b.r1_a1, b.r2_a1, b.dl_a1, b.r2_a2, b.dl_a2, b.dl_j]);
    }
    out
}

pub fn write_table(path: &Path, table: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, table)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{run_forward, StoragePolicy, SweModel};
    use crate::grid::{make_grid, Bathymetry, ConservedState, Field, ViscosityParams};

    #[test]
    fn forward_table_shape_and_precision() {
        let grid = make_grid(4, 3, 0.25, 1.0 / 3.0, 0.02, 0.01, 9.81).unwrap();
        let init = ConservedState {
            h: Field::from_fn(&grid, |x, _| 1.0 + 0.1 * x),
            q1: Field::zeros(4, 3),
            q2: Field::zeros(4, 3),
        };
        let model = SweModel::for_initial(grid.clone(), Bathymetry::flat(&grid), ViscosityParams::inviscid(), &init).unwrap();
        let traj = run_forward(&init, &model, StoragePolicy::every_step()).unwrap();
        let table = forward_table(&traj, &grid);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], FORWARD_HEADER);
        assert_eq!(lines.len(), 1 + grid.len() * traj.len());
        assert!(lines[1..].iter().all(|l| l.split(' ').count() == 6));
        let h: f64 = lines[2].split(' ').nth(3).unwrap().parse().unwrap();
        assert_eq!(h, init.h.data[1]);
    }
}
