//! Splits the in-plane gradient of two test volumes into angular and radial
//! parts. A radially symmetric bump has almost no angular gradient; an
//! angular wedge pattern has almost no radial gradient.
//!
//!     cargo run --release --example cylindrical_gradients

use ctv::diffops::{build_local_frame, cartesian_gradient, cylindrical_project};
use ctv::geometry::{compute_angle_field, Volume, VoxelGrid};

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

fn main() -> ctv::error::Result<()> {
    let grid = VoxelGrid::centered(96, 96, 1, 0.05)?;
    let frame = build_local_frame(&compute_angle_field(&grid));

    let bump = Volume::from_fn(grid, |x, y, _| (-(x * x + y * y) / 2.0).exp());
    let wedge = Volume::from_fn(grid, |x, y, _| (3.0 * y.atan2(x)).cos() * (x * x + y * y).sqrt());

    for (name, vol) in [("radial bump", &bump), ("angular pattern", &wedge)] {
        let cyl = cylindrical_project(&cartesian_gradient(vol), &frame)?;
        let [dp, dr, _] = &cyl.components;
        println!("{name:>16}: mean |d/dp| {:.4}  mean |d/dr| {:.4}", mean_abs(dp), mean_abs(dr));
    }
    let (i, j) = (80, 48);
    println!("frame at ({i}, {j}): r = {:?}, p = {:?}", frame.r(i, j), frame.p(i, j));
    Ok(())
}
