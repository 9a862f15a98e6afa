//! Writes axial, coronal and sagittal cross sections of the phantom as PGM
//! images and reads one back.
//!
//!     cargo run --release --example export_slices [out_dir]

use std::path::PathBuf;

use ctv::geometry::VoxelGrid;
use ctv::io::{extract_slice, gray_to_values, read_pgm, window_to_gray, write_pgm, BitDepth, SliceAxis};
use ctv::phantom::{default_column_radius, default_cracks, make_column_phantom};

fn main() -> ctv::error::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "slices".into()));
    std::fs::create_dir_all(&out).map_err(|e| ctv::error::Error::Io { path: out.clone(), source: e })?;
    let grid = VoxelGrid::centered(64, 64, 32, 0.097)?;
    let radius = default_column_radius(&grid);
    let truth = make_column_phantom(&grid, radius, &default_cracks(&grid, radius))?;

    for (axis, index, name) in
        [(SliceAxis::Z, 16, "z16"), (SliceAxis::Z, 24, "z24"), (SliceAxis::Y, 32, "y32"), (SliceAxis::X, 32, "x32")]
    {
        let (w, h, values) = extract_slice(&truth, axis, index)?;
        let path = out.join(format!("phantom_{name}.pgm"));
        write_pgm(&path, &window_to_gray(&values, w, h, (0.0, 1.0), BitDepth::Sixteen))?;
        println!("{} ({w} x {h})", path.display());
    }

    let (w, h, values) = extract_slice(&truth, SliceAxis::Z, 16)?;
    let back = gray_to_values(&read_pgm(&out.join("phantom_z16.pgm"))?, (0.0, 1.0));
    let worst = back.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round trip of the {w} x {h} slice: max error {worst:.2e} (step {:.2e})", 1.0 / 65535.0);
    Ok(())
}
