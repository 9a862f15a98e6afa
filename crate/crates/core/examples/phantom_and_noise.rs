//! Builds the default cracked column, lists its cracks and checks the noise
//! level added to its sinogram.
//!
//!     cargo run --release --example phantom_and_noise [seed]

use ctv::geometry::VoxelGrid;
use ctv::phantom::{add_noise, default_column_radius, default_cracks, make_column_phantom, NoiseSpec};
use ctv::projector::project;
use ctv::projector::ScanGeometry;

fn main() -> ctv::error::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let grid = VoxelGrid::centered(64, 64, 32, 0.097)?;
    let radius = default_column_radius(&grid);
    let cracks = default_cracks(&grid, radius);
    for c in &cracks {
        println!("{c:?}");
    }
    let truth = make_column_phantom(&grid, radius, &cracks)?;
    let solid = truth.values().iter().filter(|&&v| v == 1.0).count();
    let cracked = truth.values().iter().filter(|&&v| v > 0.0 && v < 1.0).count();
    let empty = truth.values().iter().filter(|&&v| v == 0.0).count();
    println!("column radius {radius:.3} mm: {solid} solid, {cracked} partial, {empty} empty voxels");

    let geom = ScanGeometry::covering(&grid, vec![18.0, 162.0, 234.0, 306.0], 0.049)?;
    let clean = project(&truth, &geom)?;
    let noisy = add_noise(&clean, &NoiseSpec { relative_sigma: 0.02, seed })?;
    let (lo, hi) = clean.min_max();
    let n = clean.values().len() as f64;
    let diff: Vec<f64> = noisy.values().iter().zip(clean.values()).map(|(a, b)| a - b).collect();
    let mean = diff.iter().sum::<f64>() / n;
    let sd = (diff.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    println!("sinogram range [{lo:.3}, {hi:.3}]: target sigma {:.4}, measured {sd:.4}", 0.02 * (hi - lo));
    Ok(())
}
