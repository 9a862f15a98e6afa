//! Tunes TV and CTV weights on the desk-scale cracked column and compares
//! the best reconstructions.
//!
//!     cargo run --release --example tv_vs_ctv [iterations]

use std::time::Instant;

use ctv::config::RunConfig;
use ctv::experiment::{ctv_search_grid, grid_search, tv_search_grid, Scenario};
use ctv::metrics::{homogeneous_mask, mean_abs_angular_gradient};

fn main() -> ctv::error::Result<()> {
    let iters = std::env::args().nth(1).map_or(500, |s| s.parse().expect("iteration count"));
    let cfg = RunConfig::default();
    let scenario = Scenario::from_config(&cfg)?;
    let solver = ctv::solver::PdhgConfig { max_iters: iters, ..cfg.solver.clone() };
    println!(
        "grid {:?}, {} views x {} channels, noise sigma {:.4}",
        scenario.grid.dims(),
        scenario.geometry.num_views(),
        scenario.geometry.num_channels,
        scenario.noise_sigma
    );

    let start = Instant::now();
    let report = |reg: &ctv::regularizer::Regularizer, psnr: f64| {
        println!("  {reg:?}: {psnr:.3} dB ({:.0} s)", start.elapsed().as_secs_f64())
    };
    let tv = grid_search(&scenario, &tv_search_grid(), &solver, report)?;
    let ctv = grid_search(&scenario, &ctv_search_grid(), &solver, report)?;

    let mask = homogeneous_mask(&scenario.truth);
    for (name, best) in [("TV", &tv[0]), ("CTV", &ctv[0])] {
        println!(
            "best {name}: {:?}  PSNR {:.3} dB  mean |C_p x| in the column {:.4}",
            best.regularizer,
            best.psnr,
            mean_abs_angular_gradient(&best.volume, &mask)?
        );
    }
    println!("CTV - TV = {:+.3} dB", ctv[0].psnr - tv[0].psnr);
    Ok(())
}
