//! Dot-product tests `<Ax, y> = <x, A^T y>` for the projector and the
//! cylindrical difference operators on a few grids.
//!
//!     cargo run --release --example adjoint_checks

use ctv::diffops::CylindricalOperators;
use ctv::geometry::VoxelGrid;
use ctv::linop::{adjoint_mismatch, LinearOperator};
use ctv::projector::{ParallelBeamProjector, ScanGeometry};

fn main() -> ctv::error::Result<()> {
    let grids = [
        VoxelGrid::centered(16, 16, 4, 0.097)?,
        VoxelGrid::new(33, 21, 5, 0.097, (2.0, -1.5))?,
        VoxelGrid::centered(64, 64, 8, 0.097)?,
    ];
    for grid in &grids {
        let geom = ScanGeometry::covering(grid, vec![18.0, 162.0, 234.0, 306.0], 0.049)?;
        let a = ParallelBeamProjector::new(grid, &geom)?;
        let c = CylindricalOperators::for_grid(*grid);
        let ops: [(&str, &dyn LinearOperator); 4] =
            [("A", &a), ("C_p", &c.angular), ("C_r", &c.radial), ("C_z", &c.axial)];
        print!("{:?}:", grid.dims());
        for (name, op) in ops {
            print!("  {name} {:.1e}", adjoint_mismatch(op, 1));
        }
        println!();
    }
    Ok(())
}
