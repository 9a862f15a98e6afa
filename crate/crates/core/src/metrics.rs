//! Reconstruction quality measures.

use crate::diffops::{InPlaneDifference, LocalFrame};
use crate::error::{Error, Result};
use crate::geometry::Volume;
use crate::linop::LinearOperator;

pub fn mse(recon: &Volume, reference: &Volume) -> Result<f64> {
    recon.ensure_same_grid(reference.grid(), "mse")?;
    let n = recon.values().len() as f64;
    Ok(recon.values().iter().zip(reference.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// `10 log10(peak^2 / MSE)` with `peak = max(reference)`; `+inf` for an
/// exact match.
pub fn psnr(recon: &Volume, reference: &Volume) -> Result<f64> {
    let err = mse(recon, reference)?;
    let peak = reference.min_max().1;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    if !(peak > 0.0) {
        return Err(Error::invalid("PSNR needs a reference with a positive maximum"));
    }
    Ok(10.0 * (peak * peak / err).log10())
}

/// Voxels at the reference maximum whose six face neighbours are too, i.e.
/// the interior of the homogeneous material.
pub fn homogeneous_mask(reference: &Volume) -> Vec<bool> {
    let g = *reference.grid();
    let peak = reference.min_max().1;
    let v = reference.values();
    (0..g.len())
        .map(|idx| {
            let (i, j, k) = g.unravel(idx);
            if v[idx] != peak || i == 0 || j == 0 || k == 0 || i + 1 == g.nx || j + 1 == g.ny || k + 1 == g.nz {
                return false;
            }
            [
                g.index(i - 1, j, k),
                g.index(i + 1, j, k),
                g.index(i, j - 1, k),
                g.index(i, j + 1, k),
                g.index(i, j, k - 1),
                g.index(i, j, k + 1),
            ]
            .iter()
            .all(|&n| v[n] == peak)
        })
        .collect()
}

/// Mean of `|C_p x|` over the masked voxels.
pub fn mean_abs_angular_gradient(vol: &Volume, mask: &[bool]) -> Result<f64> {
    if mask.len() != vol.values().len() {
        return Err(Error::mismatch("mask and volume sizes differ"));
    }
    let grid = *vol.grid();
    let cp = InPlaneDifference::angular(grid, &LocalFrame::for_grid(&grid))?.apply_vec(vol.values());
    let (sum, count) =
        cp.iter().zip(mask).filter(|(_, &m)| m).fold((0.0, 0usize), |(s, c), (v, _)| (s + v.abs(), c + 1));
    if count == 0 {
        return Err(Error::invalid("mask selects no voxels"));
    }
    Ok(sum / count as f64)
}
