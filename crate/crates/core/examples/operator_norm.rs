//! Power-iteration estimates of |A|, |C| and of the stacked operator the
//! solver uses, and the step sizes they imply.
//!
//!     cargo run --release --example operator_norm

use ctv::diffops::CylindricalOperators;
use ctv::geometry::VoxelGrid;
use ctv::linop::{operator_norm, LinearOperator, Stacked};
use ctv::projector::{ParallelBeamProjector, ScanGeometry};
use ctv::solver::PdhgConfig;

fn main() -> ctv::error::Result<()> {
    let grid = VoxelGrid::centered(64, 64, 32, 0.097)?;
    let geom = ScanGeometry::covering(&grid, vec![18.0, 162.0, 234.0, 306.0], 0.049)?;
    let a = ParallelBeamProjector::new(&grid, &geom)?;
    let c = CylindricalOperators::for_grid(grid);

    for iters in [5, 20, 50] {
        println!("|A| after {iters:>2} iterations: {:.6}", operator_norm(&a, iters, 0));
    }
    println!(
        "|C_p| {:.3}  |C_r| {:.3}  |C_z| {:.3}  (bound 2/h = {:.3})",
        operator_norm(&c.angular, 50, 0),
        operator_norm(&c.radial, 50, 0),
        operator_norm(&c.axial, 50, 0),
        2.0 / grid.spacing
    );

    let blocks: Vec<&dyn LinearOperator> = vec![&a, &c.angular, &c.radial, &c.axial];
    let k = Stacked::new(blocks);
    let l = operator_norm(&k, 50, 0);
    let (tau, sigma) = PdhgConfig::default().step_sizes(l)?;
    println!("|K| {l:.3} -> tau = sigma = {tau:.5} (tau*sigma*L^2 = {:.4})", tau * sigma * l * l);
    Ok(())
}
