//! Two-point finite differences and their projection onto the local
//! cylindrical frame.
//!
//! Differences are forward, divided by the voxel spacing, and exactly zero
//! on the last index along each axis. The angular and radial operators are
//! `C_p = p_x D_x + p_y D_y` and `C_r = r_x D_x + r_y D_y` with per-column
//! weights from [`LocalFrame`]; `C_z = D_z`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{AngleField, Volume, VoxelGrid};
use crate::linop::LinearOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Per-column orthonormal frame: radial `r = (cos t, sin t, 0)`, angular
/// `p = (-sin t, cos t, 0)`, axial `z = (0, 0, 1)`.
#[derive(Clone, Debug)]
pub struct LocalFrame {
    grid: VoxelGrid,
    p: Vec<[f64; 2]>,
    r: Vec<[f64; 2]>,
}

impl LocalFrame {
    pub fn new(angles: &AngleField) -> Self {
        let (p, r) = angles
            .values()
            .iter()
            .map(|t| {
                let (s, c) = t.sin_cos();
                ([-s, c], [c, s])
            })
            .unzip();
        Self { grid: *angles.grid(), p, r }
    }

    pub fn for_grid(grid: &VoxelGrid) -> Self {
        Self::new(&AngleField::new(grid))
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn p(&self, i: usize, j: usize) -> [f64; 3] {
        let [a, b] = self.p[i + self.grid.nx * j];
        [a, b, 0.0]
    }

    pub fn r(&self, i: usize, j: usize) -> [f64; 3] {
        let [a, b] = self.r[i + self.grid.nx * j];
        [a, b, 0.0]
    }

    pub fn z(&self) -> [f64; 3] {
        [0.0, 0.0, 1.0]
    }

    fn check(&self, grid: &VoxelGrid) -> Result<()> {
        if self.grid.nx != grid.nx || self.grid.ny != grid.ny {
            return Err(Error::mismatch(format!(
                "frame is {}x{} but the volume is {}x{}",
                self.grid.nx, self.grid.ny, grid.nx, grid.ny
            )));
        }
        Ok(())
    }
}

pub fn build_local_frame(angles: &AngleField) -> LocalFrame {
    LocalFrame::new(angles)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coordinates {
    /// Components are `(dx, dy, dz)`.
    Cartesian,
    /// Components are `(dp, dr, dz)`.
    Cylindrical,
}

#[derive(Clone, Debug)]
pub struct GradientField {
    pub grid: VoxelGrid,
    pub coordinates: Coordinates,
    pub components: [Vec<f64>; 3],
}

pub fn cartesian_gradient(vol: &Volume) -> GradientField {
    let grid = *vol.grid();
    let comp = |axis| AxisDifference::new(grid, axis).apply_vec(vol.values());
    GradientField {
        grid,
        coordinates: Coordinates::Cartesian,
        components: [comp(Axis::X), comp(Axis::Y), comp(Axis::Z)],
    }
}

/// Rotates each in-plane gradient vector into the local frame.
pub fn cylindrical_project(g: &GradientField, frame: &LocalFrame) -> Result<GradientField> {
    if g.coordinates != Coordinates::Cartesian {
        return Err(Error::invalid("cylindrical projection expects a Cartesian gradient"));
    }
    frame.check(&g.grid)?;
    let npix = g.grid.slice_len();
    let [dx, dy, dz] = &g.components;
    let mut dp = vec![0.0; dx.len()];
    let mut dr = vec![0.0; dx.len()];
    for idx in 0..dx.len() {
        let col = idx % npix;
        let (p, r) = (frame.p[col], frame.r[col]);
        dp[idx] = p[0] * dx[idx] + p[1] * dy[idx];
        dr[idx] = r[0] * dx[idx] + r[1] * dy[idx];
    }
    Ok(GradientField { grid: g.grid, coordinates: Coordinates::Cylindrical, components: [dp, dr, dz.clone()] })
}

/// Forward difference along one grid axis.
#[derive(Clone, Copy, Debug)]
pub struct AxisDifference {
    grid: VoxelGrid,
    axis: Axis,
}

impl AxisDifference {
    pub fn new(grid: VoxelGrid, axis: Axis) -> Self {
        Self { grid, axis }
    }

    fn stride_and_extent(&self) -> (usize, usize) {
        match self.axis {
            Axis::X => (1, self.grid.nx),
            Axis::Y => (self.grid.nx, self.grid.ny),
            Axis::Z => (self.grid.slice_len(), self.grid.nz),
        }
    }

    fn position(&self, idx: usize) -> usize {
        let (i, j, k) = self.grid.unravel(idx);
        match self.axis {
            Axis::X => i,
            Axis::Y => j,
            Axis::Z => k,
        }
    }
}

impl LinearOperator for AxisDifference {
    fn input_len(&self) -> usize {
        self.grid.len()
    }

    fn output_len(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (stride, n) = self.stride_and_extent();
        let inv_h = 1.0 / self.grid.spacing;
        out.par_iter_mut().enumerate().for_each(|(idx, o)| {
            *o = if self.position(idx) + 1 < n { (x[idx + stride] - x[idx]) * inv_h } else { 0.0 };
        });
    }

    fn apply_adjoint(&self, u: &[f64], out: &mut [f64]) {
        let (stride, n) = self.stride_and_extent();
        let inv_h = 1.0 / self.grid.spacing;
        out.par_iter_mut().enumerate().for_each(|(idx, o)| {
            let pos = self.position(idx);
            let mut v = 0.0;
            if pos >= 1 {
                v += u[idx - stride];
            }
            if pos + 1 < n {
                v -= u[idx];
            }
            *o = v * inv_h;
        });
    }
}

/// `w_x(i, j) D_x + w_y(i, j) D_y` with per-column weights.
#[derive(Clone, Debug)]
pub struct InPlaneDifference {
    grid: VoxelGrid,
    weights: Vec<[f64; 2]>,
}

impl InPlaneDifference {
    pub fn new(grid: VoxelGrid, weights: Vec<[f64; 2]>) -> Result<Self> {
        if weights.len() != grid.slice_len() {
            return Err(Error::mismatch("one in-plane weight pair per voxel column is required"));
        }
        Ok(Self { grid, weights })
    }

    /// Angular component `C_p`.
    pub fn angular(grid: VoxelGrid, frame: &LocalFrame) -> Result<Self> {
        frame.check(&grid)?;
        Self::new(grid, frame.p.clone())
    }

    /// Radial component `C_r`.
    pub fn radial(grid: VoxelGrid, frame: &LocalFrame) -> Result<Self> {
        frame.check(&grid)?;
        Self::new(grid, frame.r.clone())
    }
}

impl LinearOperator for InPlaneDifference {
    fn input_len(&self) -> usize {
        self.grid.len()
    }

    fn output_len(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let npix = self.grid.slice_len();
        let inv_h = 1.0 / self.grid.spacing;
        out.par_chunks_mut(npix).enumerate().for_each(|(k, slice)| {
            let xs = &x[k * npix..(k + 1) * npix];
            for j in 0..ny {
                for i in 0..nx {
                    let c = i + nx * j;
                    let dx = if i + 1 < nx { xs[c + 1] - xs[c] } else { 0.0 };
                    let dy = if j + 1 < ny { xs[c + nx] - xs[c] } else { 0.0 };
                    let [wx, wy] = self.weights[c];
                    slice[c] = (wx * dx + wy * dy) * inv_h;
                }
            }
        });
    }

    fn apply_adjoint(&self, u: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let npix = self.grid.slice_len();
        let inv_h = 1.0 / self.grid.spacing;
        let w = &self.weights;
        out.par_chunks_mut(npix).enumerate().for_each(|(k, slice)| {
            let us = &u[k * npix..(k + 1) * npix];
            for j in 0..ny {
                for i in 0..nx {
                    let c = i + nx * j;
                    let mut v = 0.0;
                    if i >= 1 {
                        v += w[c - 1][0] * us[c - 1];
                    }
                    if i + 1 < nx {
                        v -= w[c][0] * us[c];
                    }
                    if j >= 1 {
                        v += w[c - nx][1] * us[c - nx];
                    }
                    if j + 1 < ny {
                        v -= w[c][1] * us[c];
                    }
                    slice[c] = v * inv_h;
                }
            }
        });
    }
}

/// The three operators of the cylindrical TV functional for one grid.
#[derive(Clone, Debug)]
pub struct CylindricalOperators {
    pub angular: InPlaneDifference,
    pub radial: InPlaneDifference,
    pub axial: AxisDifference,
}

impl CylindricalOperators {
    pub fn new(grid: VoxelGrid, frame: &LocalFrame) -> Result<Self> {
        Ok(Self {
            angular: InPlaneDifference::angular(grid, frame)?,
            radial: InPlaneDifference::radial(grid, frame)?,
            axial: AxisDifference::new(grid, Axis::Z),
        })
    }

    pub fn for_grid(grid: VoxelGrid) -> Self {
        Self::new(grid, &LocalFrame::for_grid(&grid)).expect("frame built from the same grid")
    }
}

#[derive(Clone, Debug)]
pub struct CartesianOperators {
    pub x: AxisDifference,
    pub y: AxisDifference,
    pub z: AxisDifference,
}

impl CartesianOperators {
    pub fn new(grid: VoxelGrid) -> Self {
        Self {
            x: AxisDifference::new(grid, Axis::X),
            y: AxisDifference::new(grid, Axis::Y),
            z: AxisDifference::new(grid, Axis::Z),
        }
    }
}
