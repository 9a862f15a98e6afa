//! Parallel-beam forward projection and its exact transpose.
//!
//! The model is pixel driven. Each voxel is split into `m x m` in-plane
//! sub-samples, each sub-sample is projected onto the detector and its
//! share of the voxel mass is linearly split between the two nearest
//! channels. Dividing by the channel pitch turns deposited mass into a line
//! integral. The default `m = 2 * ceil(voxel_spacing / detector_spacing)`
//! keeps the projected sub-sample pitch well below the channel pitch, so
//! detectors finer than the voxel pitch neither leave empty channels nor
//! alias into periodic chord errors at oblique angles.
//!
//! A view at angle `phi` integrates along `(cos phi, sin phi)`. Channel `c`
//! sits at signed offset `(c - (num_channels - 1) / 2) * detector_spacing`
//! along `(-sin phi, cos phi)`. Detector rows coincide with z-slices.
//!
//! The weights depend only on the in-plane position, so they are tabulated
//! once per (view, column) and reused for every slice. `project` gathers
//! from the table and `backproject` scatters through the same entries, so
//! the two are transposes by construction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Volume, VoxelGrid};
use crate::linop::LinearOperator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    /// View angles in degrees, counterclockwise from +x.
    pub angles: Vec<f64>,
    pub num_channels: usize,
    pub num_rows: usize,
    /// Channel pitch in mm.
    pub detector_spacing: f64,
}

impl ScanGeometry {
    pub fn new(angles: Vec<f64>, num_channels: usize, num_rows: usize, detector_spacing: f64) -> Result<Self> {
        let geom = Self { angles, num_channels, num_rows, detector_spacing };
        geom.validate()?;
        Ok(geom)
    }

    /// Geometry for `grid` whose channel count is the smallest that covers
    /// the in-plane diagonal.
    pub fn covering(grid: &VoxelGrid, angles: Vec<f64>, detector_spacing: f64) -> Result<Self> {
        if !(detector_spacing > 0.0) {
            return Err(Error::invalid("detector spacing must be positive"));
        }
        Self::new(angles, default_channel_count(grid, detector_spacing), grid.nz, detector_spacing)
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.is_empty() {
            return Err(Error::invalid("scan geometry needs at least one view angle"));
        }
        if self.angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("view angles must be finite"));
        }
        if self.num_channels == 0 || self.num_rows == 0 {
            return Err(Error::invalid("detector needs at least one channel and one row"));
        }
        if !(self.detector_spacing > 0.0 && self.detector_spacing.is_finite()) {
            return Err(Error::invalid(format!("detector spacing must be positive, got {}", self.detector_spacing)));
        }
        Ok(())
    }

    pub fn num_views(&self) -> usize {
        self.angles.len()
    }

    pub fn len(&self) -> usize {
        self.num_views() * self.num_rows * self.num_channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, view: usize, row: usize, channel: usize) -> usize {
        (view * self.num_rows + row) * self.num_channels + channel
    }

    /// Signed detector offset of a channel center in mm.
    pub fn channel_offset(&self, channel: usize) -> f64 {
        (channel as f64 - (self.num_channels as f64 - 1.0) / 2.0) * self.detector_spacing
    }

    pub fn check_grid(&self, grid: &VoxelGrid) -> Result<()> {
        if self.num_rows != grid.nz {
            return Err(Error::mismatch(format!(
                "detector has {} rows but the volume has {} slices",
                self.num_rows, grid.nz
            )));
        }
        Ok(())
    }
}

/// Smallest channel count whose detector span covers the grid diagonal.
pub fn default_channel_count(grid: &VoxelGrid, detector_spacing: f64) -> usize {
    let w = grid.nx as f64 * grid.spacing;
    let h = grid.ny as f64 * grid.spacing;
    ((w.hypot(h) / detector_spacing).ceil() as usize).max(1)
}

/// Measured line integrals indexed `(view, row, channel)`, channel fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    geometry: ScanGeometry,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geometry: ScanGeometry) -> Self {
        Self { values: vec![0.0; geometry.len()], geometry }
    }

    pub fn from_vec(geometry: ScanGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::mismatch(format!(
                "sinogram has {} values, geometry needs {}",
                values.len(),
                geometry.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sinogram contains non-finite values"));
        }
        Ok(Self { geometry, values })
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, view: usize, row: usize, channel: usize) -> f64 {
        self.values[self.geometry.index(view, row, channel)]
    }

    /// Detector row `row` of view `view`.
    pub fn row(&self, view: usize, row: usize) -> &[f64] {
        let start = self.geometry.index(view, row, 0);
        &self.values[start..start + self.geometry.num_channels]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Tabulated pixel-driven projector for one grid and scan geometry.
#[derive(Clone, Debug)]
pub struct ParallelBeamProjector {
    grid: VoxelGrid,
    geometry: ScanGeometry,
    subsamples: usize,
    // entries for (view, column) live at offsets[v * slice_len + p]..offsets[.. + 1]
    offsets: Vec<usize>,
    channels: Vec<u32>,
    weights: Vec<f64>,
}

impl ParallelBeamProjector {
    pub fn new(grid: &VoxelGrid, geometry: &ScanGeometry) -> Result<Self> {
        let m = 2 * (grid.spacing / geometry.detector_spacing - 1e-9).ceil().max(1.0) as usize;
        Self::with_subsamples(grid, geometry, m)
    }

    pub fn with_subsamples(grid: &VoxelGrid, geometry: &ScanGeometry, subsamples: usize) -> Result<Self> {
        geometry.validate()?;
        geometry.check_grid(grid)?;
        if subsamples == 0 {
            return Err(Error::invalid("projector needs at least one sub-sample per voxel"));
        }
        let m = subsamples;
        let nc = geometry.num_channels;
        let ds = geometry.detector_spacing;
        let half = (nc as f64 - 1.0) / 2.0;
        let mass = grid.spacing * grid.spacing / (m * m) as f64 / ds;
        let sub: Vec<f64> = (0..m).map(|a| ((a as f64 + 0.5) / m as f64 - 0.5) * grid.spacing).collect();

        let mut offsets = Vec::with_capacity(geometry.num_views() * grid.slice_len() + 1);
        let mut channels = Vec::new();
        let mut weights = Vec::new();
        let mut scratch: Vec<(i64, f64)> = Vec::with_capacity(2 * m * m);
        offsets.push(0);
        for &deg in &geometry.angles {
            let (sin, cos) = deg.to_radians().sin_cos();
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    scratch.clear();
                    for &oy in &sub {
                        for &ox in &sub {
                            let x = grid.x(i) + ox;
                            let y = grid.y(j) + oy;
                            let c = (-x * sin + y * cos) / ds + half;
                            let c0 = c.floor();
                            let frac = c - c0;
                            scratch.push((c0 as i64, (1.0 - frac) * mass));
                            scratch.push((c0 as i64 + 1, frac * mass));
                        }
                    }
                    scratch.sort_by_key(|e| e.0);
                    let mut iter = scratch.iter().peekable();
                    while let Some(&(ch, mut w)) = iter.next() {
                        while let Some(&&(next, wn)) = iter.peek() {
                            if next != ch {
                                break;
                            }
                            w += wn;
                            iter.next();
                        }
                        if w != 0.0 && ch >= 0 && (ch as usize) < nc {
                            channels.push(ch as u32);
                            weights.push(w);
                        }
                    }
                    offsets.push(channels.len());
                }
            }
        }
        Ok(Self { grid: *grid, geometry: geometry.clone(), subsamples: m, offsets, channels, weights })
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn subsamples(&self) -> usize {
        self.subsamples
    }

    /// Detector footprint of column `pixel` (flat in-plane index) in `view`.
    pub fn footprint(&self, view: usize, pixel: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let e = view * self.grid.slice_len() + pixel;
        let range = self.offsets[e]..self.offsets[e + 1];
        self.channels[range.clone()].iter().map(|&c| c as usize).zip(self.weights[range].iter().copied())
    }

    pub fn project(&self, vol: &Volume) -> Result<Sinogram> {
        vol.ensure_same_grid(&self.grid, "project")?;
        let mut out = vec![0.0; self.geometry.len()];
        self.apply(vol.values(), &mut out);
        Ok(Sinogram { geometry: self.geometry.clone(), values: out })
    }

    pub fn backproject(&self, sino: &Sinogram) -> Result<Volume> {
        if sino.geometry() != &self.geometry {
            return Err(Error::mismatch("sinogram geometry differs from the projector's"));
        }
        let mut out = vec![0.0; self.grid.len()];
        self.apply_adjoint(sino.values(), &mut out);
        Volume::from_vec(self.grid, out)
    }
}

impl LinearOperator for ParallelBeamProjector {
    fn input_len(&self) -> usize {
        self.grid.len()
    }

    fn output_len(&self) -> usize {
        self.geometry.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let npix = self.grid.slice_len();
        let rows = self.geometry.num_rows;
        out.par_chunks_mut(self.geometry.num_channels).enumerate().for_each(|(vr, det)| {
            let (view, row) = (vr / rows, vr % rows);
            let slice = &x[row * npix..(row + 1) * npix];
            let base = view * npix;
            det.fill(0.0);
            for (p, &v) in slice.iter().enumerate() {
                for e in self.offsets[base + p]..self.offsets[base + p + 1] {
                    det[self.channels[e] as usize] += self.weights[e] * v;
                }
            }
        });
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let npix = self.grid.slice_len();
        let nc = self.geometry.num_channels;
        let rows = self.geometry.num_rows;
        let views = self.geometry.num_views();
        out.par_chunks_mut(npix).enumerate().for_each(|(row, slice)| {
            for (p, o) in slice.iter_mut().enumerate() {
                let mut acc = 0.0;
                for view in 0..views {
                    let det = &y[(view * rows + row) * nc..(view * rows + row + 1) * nc];
                    let e0 = view * npix + p;
                    for e in self.offsets[e0]..self.offsets[e0 + 1] {
                        acc += self.weights[e] * det[self.channels[e] as usize];
                    }
                }
                *o = acc;
            }
        });
    }
}

pub fn project(vol: &Volume, geom: &ScanGeometry) -> Result<Sinogram> {
    geom.check_grid(vol.grid())?;
    ParallelBeamProjector::new(vol.grid(), geom)?.project(vol)
}

pub fn backproject(sino: &Sinogram, grid: &VoxelGrid) -> Result<Volume> {
    sino.geometry().check_grid(grid)?;
    ParallelBeamProjector::new(grid, sino.geometry())?.backproject(sino)
}
