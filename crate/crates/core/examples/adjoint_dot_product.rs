//! Dot-product test of both adjoint modes, then the refinement study of the
//! continuous mode against the exact transpose.
//!
//! cargo run --release --example adjoint_dot_product

use swetop::adjoint::{continuous_propagate, discrete_transpose_propagate};
use swetop::forward::{run_forward, StoragePolicy};
use swetop::grid::AdjointState;
use swetop::validation::{adjoint_convergence_study, convergence_scene, dot_product_with, white_noise};

fn main() -> swetop::Result<()> {
    use rand::SeedableRng;
    let (model, init) = convergence_scene(16, 10.0 * 0.05 / 16.0, 0.01)?;
    let traj = run_forward(&init, &model, StoragePolicy::every_step())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let du0 = white_noise(&model.grid, &mut rng);
    let w: AdjointState = white_noise(&model.grid, &mut rng).into();

    let d = dot_product_with(&traj, &model, &du0, &w, discrete_transpose_propagate)?;
    println!("discrete:   <L du, W> = {:.15e}  <du, L*W> = {:.15e}  residual {:.2e}", d.lhs, d.rhs, d.residual);
    let c = dot_product_with(&traj, &model, &du0, &w, continuous_propagate)?;
    println!("continuous: <L du, W> = {:.15e}  <du, L*W> = {:.15e}  residual {:.2e}", c.lhs, c.rhs, c.residual);

    let study = adjoint_convergence_study(&[32, 64, 128], 0.025, 0.01, 7)?;
    for (n, e) in study.resolutions.iter().zip(&study.discrepancy) {
        println!("n = {n:4}  |L*_c W - L*_d W| / |L*_d W| = {e:.3e}");
    }
    println!("observed orders {:.3?}", study.orders);
    Ok(())
}
