//! Small PDHG runs: TV denoising of a noisy step signal, and a CTV
//! reconstruction of the cracked column from four views with the objective
//! logged every 50 iterations.
//!
//!     cargo run --release --example pdhg_denoise

use ctv::config::RunConfig;
use ctv::experiment::Scenario;
use ctv::geometry::{Volume, VoxelGrid};
use ctv::linop::Identity;
use ctv::regularizer::{Regularizer, TvWeights};
use ctv::solver::{solve, PdhgConfig};

fn main() -> ctv::error::Result<()> {
    let grid = VoxelGrid::centered(12, 1, 1, 1.0)?;
    let y = [0.1, -0.1, 0.05, 0.0, 1.1, 0.9, 1.05, 0.95, 0.0, 0.1, -0.05, 0.0];
    let reg = Regularizer::Tv(TvWeights::new(0.2, 0.0, 0.0)?);
    let cfg = PdhgConfig { max_iters: 3000, nonneg: false, ..Default::default() };
    let res = solve(&Identity(y.len()), &y, &reg, &cfg, &Volume::zeros(grid))?;
    let x: Vec<String> = res.volume.values().iter().map(|v| format!("{v:.3}")).collect();
    println!("denoised: [{}]", x.join(", "));

    let mut run = RunConfig::default();
    run.grid.nz = 8;
    let scenario = Scenario::from_config(&run)?;
    let solver = PdhgConfig { max_iters: 300, ..run.solver.clone() };
    let res = scenario.reconstruct(&run.regularizer(), &solver, None)?;
    println!("L = {:.3}, tau = sigma = {:.5}", res.op_norm, res.tau);
    for rec in res.history.iter().filter(|r| r.iteration % 50 == 0) {
        println!("{rec}");
    }
    println!("PSNR {:.3} dB", scenario.psnr(&res.volume)?);
    Ok(())
}
