//! Cracked-column phantom and the sinogram noise model.
//!
//! The column is a unit-attenuation cylinder along z, centered on the grid's
//! polar origin. Cracks lower the attenuation inside a thin region by their
//! `contrast`; a voxel belongs to a region when its center does, so the
//! phantom is piecewise constant with exactly the levels `1`, `1 - contrast`
//! and `0`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Volume, VoxelGrid};
use crate::projector::Sinogram;

/// Lengths are in mm, angles in degrees; `z` is measured from the grid
/// center. `contrast` is the attenuation drop, in `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CrackSpec {
    /// Planar slab through the axis direction `angle`, spanning radii
    /// `inner..outer`.
    Radial {
        angle: f64,
        inner: f64,
        outer: f64,
        width: f64,
        contrast: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z_min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z_max: Option<f64>,
    },
    /// Slab across the column centered at height `z`, its normal tilted
    /// by `tilt` from the z axis towards +y.
    Transverse { z: f64, tilt: f64, width: f64, contrast: f64 },
    /// Annulus of mean radius `radius`.
    Concentric {
        radius: f64,
        width: f64,
        contrast: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z_min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z_max: Option<f64>,
    },
}

impl CrackSpec {
    fn width_and_contrast(&self) -> (f64, f64) {
        match *self {
            CrackSpec::Radial { width, contrast, .. }
            | CrackSpec::Transverse { width, contrast, .. }
            | CrackSpec::Concentric { width, contrast, .. } => (width, contrast),
        }
    }

    fn validate(&self, grid: &VoxelGrid, column_radius: f64) -> Result<()> {
        let (width, contrast) = self.width_and_contrast();
        if !(width >= grid.spacing * (1.0 - 1e-9)) {
            return Err(Error::invalid(format!("crack width {width} mm is below one voxel ({} mm)", grid.spacing)));
        }
        if !(contrast > 0.0 && contrast <= 1.0) {
            return Err(Error::invalid(format!("crack contrast must lie in (0, 1], got {contrast}")));
        }
        let half_height = grid.nz as f64 * grid.spacing / 2.0;
        let check_z = |z_min: Option<f64>, z_max: Option<f64>| -> Result<()> {
            let lo = z_min.unwrap_or(-half_height);
            let hi = z_max.unwrap_or(half_height);
            if !(lo < hi) || lo < -half_height - 1e-9 || hi > half_height + 1e-9 {
                return Err(Error::invalid(format!("crack z-range [{lo}, {hi}] leaves the grid")));
            }
            Ok(())
        };
        match *self {
            CrackSpec::Radial { angle, inner, outer, z_min, z_max, .. } => {
                if !angle.is_finite() || !(0.0 <= inner && inner < outer && outer <= column_radius + 1e-9) {
                    return Err(Error::invalid(format!(
                        "radial crack [{inner}, {outer}] mm must lie inside the column of radius {column_radius} mm"
                    )));
                }
                check_z(z_min, z_max)
            }
            CrackSpec::Transverse { z, tilt, .. } => {
                if !(z.abs() <= half_height) || !(tilt.abs() < 90.0) {
                    return Err(Error::invalid(format!(
                        "transverse crack at z={z} mm, tilt={tilt} deg leaves the grid"
                    )));
                }
                Ok(())
            }
            CrackSpec::Concentric { radius, z_min, z_max, .. } => {
                if !(radius - width / 2.0 >= 0.0 && radius + width / 2.0 <= column_radius + 1e-9) {
                    return Err(Error::invalid(format!(
                        "concentric crack at radius {radius} mm (width {width}) must lie inside the column"
                    )));
                }
                check_z(z_min, z_max)
            }
        }
    }

    /// Whether a point given relative to the column axis lies in the crack.
    fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let in_z = |lo: Option<f64>, hi: Option<f64>| lo.is_none_or(|l| z >= l) && hi.is_none_or(|h| z <= h);
        match *self {
            CrackSpec::Radial { angle, inner, outer, width, z_min, z_max, .. } => {
                let (s, c) = angle.to_radians().sin_cos();
                let along = x * c + y * s;
                let across = -x * s + y * c;
                in_z(z_min, z_max) && along >= inner && along <= outer && across.abs() <= width / 2.0
            }
            CrackSpec::Transverse { z: z0, tilt, width, .. } => {
                (z - z0 - tilt.to_radians().tan() * y).abs() <= width / 2.0
            }
            CrackSpec::Concentric { radius, width, z_min, z_max, .. } => {
                in_z(z_min, z_max) && (x.hypot(y) - radius).abs() <= width / 2.0
            }
        }
    }
}

/// Default column radius: 80% of the inscribed in-plane radius.
pub fn default_column_radius(grid: &VoxelGrid) -> f64 {
    0.8 * grid.nx.min(grid.ny) as f64 * grid.spacing / 2.0
}

/// Crack set scaled to the column: two radial cracks along and across the
/// first standard view (18 deg), a tilted transverse crack and one annulus.
pub fn default_cracks(grid: &VoxelGrid, column_radius: f64) -> Vec<CrackSpec> {
    let h = grid.spacing;
    let width = 2.0 * h;
    let height = grid.nz as f64 * h;
    vec![
        CrackSpec::Radial {
            angle: 18.0,
            inner: 0.3 * column_radius,
            outer: column_radius,
            width,
            contrast: 1.0,
            z_min: None,
            z_max: None,
        },
        CrackSpec::Radial {
            angle: 108.0,
            inner: 0.45 * column_radius,
            outer: column_radius,
            width,
            contrast: 1.0,
            z_min: Some(-0.35 * height),
            z_max: Some(0.35 * height),
        },
        CrackSpec::Transverse { z: 0.25 * height, tilt: 8.0, width, contrast: 1.0 },
        CrackSpec::Concentric { radius: 0.6 * column_radius, width, contrast: 1.0, z_min: None, z_max: None },
    ]
}

/// Cylinder of unit attenuation with `cracks` carved out.
pub fn make_column_phantom(grid: &VoxelGrid, column_radius: f64, cracks: &[CrackSpec]) -> Result<Volume> {
    let (xc, yc) = grid.polar_origin();
    let half_x = grid.nx as f64 * grid.spacing / 2.0;
    let half_y = grid.ny as f64 * grid.spacing / 2.0;
    let fits =
        column_radius > 0.0 && xc.abs() + column_radius <= half_x + 1e-9 && yc.abs() + column_radius <= half_y + 1e-9;
    if !fits {
        return Err(Error::invalid(format!(
            "column of radius {column_radius} mm centered at ({xc}, {yc}) does not fit the grid"
        )));
    }
    for c in cracks {
        c.validate(grid, column_radius)?;
    }
    Ok(Volume::from_fn(*grid, |x, y, z| {
        let (x, y) = (x - xc, y - yc);
        if x.hypot(y) > column_radius {
            return 0.0;
        }
        let drop = cracks.iter().filter(|c| c.contains(x, y, z)).map(|c| c.width_and_contrast().1).fold(0.0, f64::max);
        1.0 - drop
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Standard deviation as a fraction of the clean sinogram's range.
    pub relative_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { relative_sigma: 0.02, seed: 0 }
    }
}

/// Adds i.i.d. Gaussian noise with `sigma = relative_sigma * (max - min)`.
///
/// Each detector row draws from its own ChaCha stream, so the result does
/// not depend on how rows are distributed over threads.
pub fn add_noise(sino: &Sinogram, spec: &NoiseSpec) -> Result<Sinogram> {
    if !(spec.relative_sigma >= 0.0 && spec.relative_sigma.is_finite()) {
        return Err(Error::invalid(format!("relative_sigma must be nonnegative, got {}", spec.relative_sigma)));
    }
    let (lo, hi) = sino.min_max();
    let sigma = spec.relative_sigma * (hi - lo);
    let mut out = sino.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let nc = sino.geometry().num_channels;
    out.values_mut().par_chunks_mut(nc).enumerate().for_each(|(row, det)| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(row as u64);
        for v in det {
            *v += normal.sample(&mut rng);
        }
    });
    Ok(out)
}

/// Noise standard deviation that [`add_noise`] would use.
pub fn noise_sigma(sino: &Sinogram, spec: &NoiseSpec) -> f64 {
    let (lo, hi) = sino.min_max();
    spec.relative_sigma * (hi - lo)
}
