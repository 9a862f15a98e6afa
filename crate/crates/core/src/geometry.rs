//! Voxel lattice, volumes and the per-column polar angle field.
//!
//! Voxel `(i, j, k)` sits at physical position
//! `((i - (nx-1)/2)·h, (j - (ny-1)/2)·h, (k - (nz-1)/2)·h)` where `h` is the
//! isotropic voxel spacing, so the geometric grid center is the physical
//! origin and also the rotation axis of the scanner. The polar origin used
//! by the cylindrical frame may be shifted from it by `center`, given in
//! voxel units.
//!
//! Flat storage is `i` fastest, then `j`, then `k`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Isotropic voxel pitch in mm.
    pub spacing: f64,
    /// Polar-origin offset from the grid center, in voxel units.
    pub center: (f64, f64),
}

impl VoxelGrid {
    pub fn new(nx: usize, ny: usize, nz: usize, spacing: f64, center: (f64, f64)) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid(format!("grid dimensions must be positive, got {nx}x{ny}x{nz}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid(format!("voxel spacing must be positive, got {spacing}")));
        }
        if !(center.0.is_finite() && center.1.is_finite()) {
            return Err(Error::invalid("polar center offset must be finite"));
        }
        Ok(Self { nx, ny, nz, spacing, center })
    }

    /// Grid with the polar origin on the geometric center.
    pub fn centered(nx: usize, ny: usize, nz: usize, spacing: f64) -> Result<Self> {
        Self::new(nx, ny, nz, spacing, (0.0, 0.0))
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of voxels in one z-slice.
    pub fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / self.slice_len();
        (i, j, k)
    }

    #[inline]
    fn axis_coord(index: usize, n: usize, spacing: f64) -> f64 {
        (index as f64 - (n as f64 - 1.0) / 2.0) * spacing
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        Self::axis_coord(i, self.nx, self.spacing)
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        Self::axis_coord(j, self.ny, self.spacing)
    }

    #[inline]
    pub fn z(&self, k: usize) -> f64 {
        Self::axis_coord(k, self.nz, self.spacing)
    }

    /// Physical position of a voxel center in mm.
    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [self.x(i), self.y(j), self.z(k)]
    }

    /// Inverse of [`position`](Self::position), rounding to the nearest voxel.
    /// Returns `None` outside the grid.
    pub fn nearest_index(&self, pos: [f64; 3]) -> Option<(usize, usize, usize)> {
        let to_index = |p: f64, n: usize| {
            let f = p / self.spacing + (n as f64 - 1.0) / 2.0;
            let r = f.round();
            (r >= 0.0 && r < n as f64).then_some(r as usize)
        };
        Some((to_index(pos[0], self.nx)?, to_index(pos[1], self.ny)?, to_index(pos[2], self.nz)?))
    }

    /// Physical position of the polar origin in the x-y plane.
    pub fn polar_origin(&self) -> (f64, f64) {
        (self.center.0 * self.spacing, self.center.1 * self.spacing)
    }

    /// Same lattice, different slice count.
    pub fn with_nz(&self, nz: usize) -> Result<Self> {
        Self::new(self.nx, self.ny, nz, self.spacing, self.center)
    }
}

/// Attenuation values on a [`VoxelGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    grid: VoxelGrid,
    values: Vec<f64>,
}

impl Volume {
    pub fn zeros(grid: VoxelGrid) -> Self {
        Self { values: vec![0.0; grid.len()], grid }
    }

    pub fn filled(grid: VoxelGrid, value: f64) -> Self {
        Self { values: vec![value; grid.len()], grid }
    }

    pub fn from_vec(grid: VoxelGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::mismatch(format!(
                "volume has {} values but grid {}x{}x{} needs {}",
                values.len(),
                grid.nx,
                grid.ny,
                grid.nz,
                grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("volume value at flat index {pos} is not finite")));
        }
        Ok(Self { grid, values })
    }

    /// Evaluates `f` at every voxel center (physical mm coordinates).
    pub fn from_fn(grid: VoxelGrid, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    values.push(f(grid.x(i), grid.y(j), grid.z(k)));
                }
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
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

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.grid.index(i, j, k);
        self.values[idx] = v;
    }

    /// Values of slice `k` as an `nx * ny` block.
    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.slice_len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub(crate) fn ensure_same_grid(&self, other: &VoxelGrid, what: &str) -> Result<()> {
        if self.grid.dims() != other.dims() {
            return Err(Error::mismatch(format!(
                "{what}: grid {:?} does not match {:?}",
                self.grid.dims(),
                other.dims()
            )));
        }
        Ok(())
    }
}

/// Polar angle of every voxel column about the grid's polar origin.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleField {
    grid: VoxelGrid,
    theta: Vec<f64>,
}

impl AngleField {
    /// `theta(i, j) = atan2(y - yc, x - xc)` in `(-pi, pi]`; a column sitting
    /// exactly on the polar origin gets 0.
    pub fn new(grid: &VoxelGrid) -> Self {
        let (xc, yc) = grid.polar_origin();
        let mut theta = Vec::with_capacity(grid.slice_len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let dx = grid.x(i) - xc;
                let dy = grid.y(j) - yc;
                let t = if dx == 0.0 && dy == 0.0 {
                    0.0
                } else {
                    // atan2 maps (-x, -0.0) to -pi
                    let t = dy.atan2(dx);
                    if t <= -PI {
                        t + 2.0 * PI
                    } else {
                        t
                    }
                };
                theta.push(t);
            }
        }
        Self { grid: *grid, theta }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn theta(&self, i: usize, j: usize) -> f64 {
        self.theta[i + self.grid.nx * j]
    }

    /// Angles for every column, `i` fastest.
    pub fn values(&self) -> &[f64] {
        &self.theta
    }
}

pub fn make_grid(nx: usize, ny: usize, nz: usize, spacing: f64, center: (f64, f64)) -> Result<VoxelGrid> {
    VoxelGrid::new(nx, ny, nz, spacing, center)
}

pub fn compute_angle_field(grid: &VoxelGrid) -> AngleField {
    AngleField::new(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn rejects_bad_dimensions() {
        assert!(VoxelGrid::centered(0, 1, 1, 1.0).is_err());
        assert!(VoxelGrid::centered(1, 1, 0, 1.0).is_err());
        assert!(VoxelGrid::centered(1, 1, 1, 0.0).is_err());
        assert!(VoxelGrid::centered(1, 1, 1, -0.5).is_err());
        assert!(VoxelGrid::centered(1, 1, 1, f64::NAN).is_err());
    }

    #[test]
    fn full_grid() {
        let g = make_grid(121, 121, 100, 0.097, (0.0, 0.0)).unwrap();
        assert_eq!(g.len(), 121 * 121 * 100);
        assert_eq!(g.x(60), 0.0);
        assert_eq!(g.y(60), 0.0);
    }

    #[test]
    fn single_voxel_sits_at_origin() {
        let g = make_grid(1, 1, 1, 1.0, (0.0, 0.0)).unwrap();
        assert_eq!(g.position(0, 0, 0), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn affine_index_map() {
        let g = make_grid(3, 3, 1, 2.0, (0.0, 0.0)).unwrap();
        let p = g.position(0, 0, 0);
        assert_eq!((p[0], p[1]), (-2.0, -2.0));
        assert_eq!(g.position(2, 1, 0)[..2], [2.0, 0.0]);
    }

    #[test]
    fn axis_angles_on_3x3() {
        let g = VoxelGrid::centered(3, 3, 1, 1.0).unwrap();
        let a = AngleField::new(&g);
        assert_eq!(a.theta(1, 1), 0.0);
        assert_abs_diff_eq!(a.theta(2, 1), 0.0);
        assert_abs_diff_eq!(a.theta(1, 2), FRAC_PI_2);
        assert_abs_diff_eq!(a.theta(2, 2), FRAC_PI_4);
        assert_abs_diff_eq!(a.theta(0, 1), PI);
        assert_abs_diff_eq!(a.theta(1, 0), -FRAC_PI_2);
    }

    #[test]
    fn shifted_polar_origin() {
        let g = VoxelGrid::new(5, 5, 1, 0.5, (1.0, 0.0)).unwrap();
        let a = AngleField::new(&g);
        // column (3, 2) is now the origin
        assert_eq!(a.theta(3, 2), 0.0);
        assert_abs_diff_eq!(a.theta(4, 2), 0.0);
        assert_abs_diff_eq!(a.theta(2, 2), PI);
        assert_abs_diff_eq!(a.theta(3, 4), FRAC_PI_2);
    }

    #[test]
    fn mirror_rows_negate_angle_on_full_grid() {
        let g = VoxelGrid::centered(121, 121, 1, 0.097).unwrap();
        let a = AngleField::new(&g);
        for j in 0..121 {
            let jm = 120 - j;
            for i in 0..121 {
                let (t, tm) = (a.theta(i, j), a.theta(i, jm));
                assert!(t > -PI && t <= PI);
                if j == 60 {
                    // center row: either 0 (x >= 0) or on the branch cut
                    assert!(t == 0.0 || t == PI, "theta({i},{j}) = {t}");
                } else {
                    assert_eq!(t, -tm, "theta({i},{j})");
                }
            }
        }
    }

    #[test]
    fn angle_field_has_no_z_dependence() {
        let g = VoxelGrid::new(6, 5, 4, 0.3, (0.5, -1.0)).unwrap();
        let a = AngleField::new(&g);
        assert_eq!(a.values().len(), 30);
        let g1 = g.with_nz(1).unwrap();
        assert_eq!(AngleField::new(&g1).values(), a.values());
    }

    #[test]
    fn from_vec_validates() {
        let g = VoxelGrid::centered(2, 2, 1, 1.0).unwrap();
        assert!(Volume::from_vec(g, vec![0.0; 3]).is_err());
        assert!(Volume::from_vec(g, vec![0.0, 1.0, f64::NAN, 0.0]).is_err());
        assert!(Volume::from_vec(g, vec![0.0; 4]).is_ok());
    }

    proptest! {
        #[test]
        fn index_physical_round_trip(nx in 1usize..9, ny in 1usize..9, nz in 1usize..9, h in 0.01f64..3.0) {
            let g = VoxelGrid::centered(nx, ny, nz, h).unwrap();
            for idx in 0..g.len() {
                let (i, j, k) = g.unravel(idx);
                prop_assert_eq!(g.index(i, j, k), idx);
                prop_assert_eq!(g.nearest_index(g.position(i, j, k)), Some((i, j, k)));
            }
        }

        #[test]
        fn reflection_about_x_axis_negates_theta(nx in 1usize..12, ny in 1usize..12) {
            let g = VoxelGrid::centered(nx, ny, 1, 1.0).unwrap();
            let a = AngleField::new(&g);
            for j in 0..ny {
                for i in 0..nx {
                    let t = a.theta(i, j);
                    let tm = a.theta(i, ny - 1 - j);
                    if t == PI {
                        prop_assert_eq!(tm, PI);
                    } else {
                        prop_assert_eq!(t, -tm);
                    }
                }
            }
        }
    }
}
