//! Cell-problem corrector on a square patch against the gradient-matching
//! closed form, for a few patch sizes. The closed form describes the gradient
//! inside the hole only; outside it the numeric field decays with distance.
//!
//! cargo run --release --example corrector_patch

use swetop::corrector::{closed_form_corrector, solve_corrector_numeric};
use swetop::grid::ViscosityParams;

fn main() -> swetop::Result<()> {
    let g = [[0.0, 0.0], [1.0, 0.5], [-0.3, 0.2]];
    let visc = ViscosityParams::new(0.05, 0.05)?;
    let closed = closed_form_corrector(&g, &visc, 1.0);
    let probes = [(0.0, 0.0), (0.5, 0.3), (-0.7, 0.1), (1.5, 0.0), (3.0, -2.0)];
    for (r, n) in [(3.0, 48), (5.0, 128), (10.0, 128)] {
        let num = solve_corrector_numeric(&g, &visc, 1.0, r, n, 0.0)?;
        let p = num.patch.as_ref().unwrap();
        println!("R = {r}, n = {n}, CG iterations {:?}, weak residual {:.1e}", p.iterations, p.residual.iter().cloned().fold(0.0, f64::max));
        for &(x, y) in &probes {
            let (a, b) = (num.grad_at(x, y), closed.grad_at(x, y));
            println!("  ({x:5.2}, {y:5.2})  numeric {:+.6} {:+.6}  closed {:+.6} {:+.6}", a[1][0], a[1][1], b[1][0], b[1][1]);
        }
    }
    Ok(())
}
