//! Cylindrical and Cartesian anisotropic TV, and the conjugate proximal
//! maps the primal-dual solver needs for its dual blocks.

use serde::{Deserialize, Serialize};

use crate::diffops::{CartesianOperators, CylindricalOperators, LocalFrame};
use crate::error::{Error, Result};
use crate::geometry::{Volume, VoxelGrid};
use crate::linop::LinearOperator;

/// Weights of the angular, radial and axial terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtvWeights {
    pub lambda_p: f64,
    pub lambda_r: f64,
    pub lambda_z: f64,
}

impl CtvWeights {
    pub fn new(lambda_p: f64, lambda_r: f64, lambda_z: f64) -> Result<Self> {
        let w = Self { lambda_p, lambda_r, lambda_z };
        check_weights(&w.as_array(), "CTV")?;
        Ok(w)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.lambda_p, self.lambda_r, self.lambda_z]
    }
}

/// Per-axis weights of the Cartesian anisotropic TV baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvWeights {
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub lambda_z: f64,
}

impl TvWeights {
    pub fn new(lambda_x: f64, lambda_y: f64, lambda_z: f64) -> Result<Self> {
        let w = Self { lambda_x, lambda_y, lambda_z };
        check_weights(&w.as_array(), "TV")?;
        Ok(w)
    }

    pub fn uniform(lambda: f64) -> Result<Self> {
        Self::new(lambda, lambda, lambda)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.lambda_x, self.lambda_y, self.lambda_z]
    }
}

fn check_weights(w: &[f64; 3], what: &str) -> Result<()> {
    if w.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::invalid(format!("{what} weights must be finite and nonnegative, got {w:?}")));
    }
    Ok(())
}

fn weighted_l1(ops: [&dyn LinearOperator; 3], weights: [f64; 3], x: &[f64]) -> f64 {
    let mut buf = vec![0.0; x.len()];
    let mut total = 0.0;
    for (op, w) in ops.into_iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        op.apply(x, &mut buf);
        total += w * buf.iter().map(|v| v.abs()).sum::<f64>();
    }
    total
}

/// `lambda_p |C_p x|_1 + lambda_r |C_r x|_1 + lambda_z |C_z x|_1`
pub fn ctv_value(vol: &Volume, w: &CtvWeights, frame: &LocalFrame) -> Result<f64> {
    check_weights(&w.as_array(), "CTV")?;
    let ops = CylindricalOperators::new(*vol.grid(), frame)?;
    Ok(weighted_l1([&ops.angular, &ops.radial, &ops.axial], w.as_array(), vol.values()))
}

/// Anisotropic Cartesian TV with per-axis weights.
pub fn tv_value(vol: &Volume, w: &TvWeights) -> Result<f64> {
    check_weights(&w.as_array(), "TV")?;
    let ops = CartesianOperators::new(*vol.grid());
    Ok(weighted_l1([&ops.x, &ops.y, &ops.z], w.as_array(), vol.values()))
}

/// Projection onto the box `[-lambda, lambda]`, which is the proximal map of
/// the conjugate of `lambda |.|_1` for any step size.
pub fn prox_l1_conjugate_in_place(u: &mut [f64], lambda: f64) {
    for v in u {
        *v = v.clamp(-lambda, lambda);
    }
}

pub fn prox_l1_conjugate(u: &[f64], lambda: f64) -> Vec<f64> {
    let mut out = u.to_vec();
    prox_l1_conjugate_in_place(&mut out, lambda);
    out
}

/// Proximal map of `sigma f*` for `f(u) = 1/2 |u - y|^2`: `(v - sigma y) / (1 + sigma)`.
pub fn prox_datafit_conjugate_in_place(v: &mut [f64], y: &[f64], sigma: f64) {
    let scale = 1.0 / (1.0 + sigma);
    for (vi, &yi) in v.iter_mut().zip(y) {
        *vi = (*vi - sigma * yi) * scale;
    }
}

pub fn prox_datafit_conjugate(v: &[f64], y: &[f64], sigma: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    prox_datafit_conjugate_in_place(&mut out, y, sigma);
    out
}

/// One weighted `l1` term `weight * |op x|_1` of a regularizer.
pub struct RegTerm {
    pub label: &'static str,
    pub weight: f64,
    pub op: Box<dyn LinearOperator + Send>,
}

/// Regularizer choice for a reconstruction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regularizer {
    None,
    Tv(TvWeights),
    Ctv(CtvWeights),
}

impl Regularizer {
    /// Nonzero-weight terms for `grid`. Zero-weight terms are left out since
    /// their dual variable is pinned at zero.
    pub fn terms(&self, grid: &VoxelGrid) -> Result<Vec<RegTerm>> {
        let mut terms = Vec::new();
        match *self {
            Regularizer::None => {}
            Regularizer::Tv(w) => {
                check_weights(&w.as_array(), "TV")?;
                let ops = CartesianOperators::new(*grid);
                for (label, weight, op) in
                    [("tv_x", w.lambda_x, ops.x), ("tv_y", w.lambda_y, ops.y), ("tv_z", w.lambda_z, ops.z)]
                {
                    if weight > 0.0 {
                        terms.push(RegTerm { label, weight, op: Box::new(op) });
                    }
                }
            }
            Regularizer::Ctv(w) => {
                check_weights(&w.as_array(), "CTV")?;
                let ops = CylindricalOperators::new(*grid, &LocalFrame::for_grid(grid))?;
                if w.lambda_p > 0.0 {
                    terms.push(RegTerm { label: "ctv_p", weight: w.lambda_p, op: Box::new(ops.angular) });
                }
                if w.lambda_r > 0.0 {
                    terms.push(RegTerm { label: "ctv_r", weight: w.lambda_r, op: Box::new(ops.radial) });
                }
                if w.lambda_z > 0.0 {
                    terms.push(RegTerm { label: "ctv_z", weight: w.lambda_z, op: Box::new(ops.axial) });
                }
            }
        }
        Ok(terms)
    }

    pub fn value(&self, vol: &Volume) -> Result<f64> {
        match self {
            Regularizer::None => Ok(0.0),
            Regularizer::Tv(w) => tv_value(vol, w),
            Regularizer::Ctv(w) => ctv_value(vol, w, &LocalFrame::for_grid(vol.grid())),
        }
    }

    /// Same regularizer with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            Regularizer::None => Regularizer::None,
            Regularizer::Tv(w) => Regularizer::Tv(TvWeights {
                lambda_x: w.lambda_x * factor,
                lambda_y: w.lambda_y * factor,
                lambda_z: w.lambda_z * factor,
            }),
            Regularizer::Ctv(w) => Regularizer::Ctv(CtvWeights {
                lambda_p: w.lambda_p * factor,
                lambda_r: w.lambda_r * factor,
                lambda_z: w.lambda_z * factor,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::DenseMatrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(grid: VoxelGrid, seed: u64) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume::from_fn(grid, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    /// Forward-difference matrices assembled from index arithmetic.
    fn explicit_differences(grid: &VoxelGrid) -> [DenseMatrix; 3] {
        let n = grid.len();
        let mut out = [DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n), DenseMatrix::zeros(n, n)];
        for idx in 0..n {
            let (i, j, k) = grid.unravel(idx);
            let nbrs = [
                (i + 1 < grid.nx).then(|| grid.index(i + 1, j, k)),
                (j + 1 < grid.ny).then(|| grid.index(i, j + 1, k)),
                (k + 1 < grid.nz).then(|| grid.index(i, j, k + 1)),
            ];
            for (m, nb) in out.iter_mut().zip(nbrs) {
                if let Some(nb) = nb {
                    m.set(idx, nb, 1.0 / grid.spacing);
                    m.set(idx, idx, -1.0 / grid.spacing);
                }
            }
        }
        out
    }

    fn l1(v: &[f64]) -> f64 {
        v.iter().map(|x| x.abs()).sum()
    }

    #[test]
    fn constant_volume_costs_nothing() {
        let grid = VoxelGrid::new(6, 5, 4, 0.3, (0.7, 0.2)).unwrap();
        let vol = Volume::filled(grid, 2.0);
        let frame = LocalFrame::for_grid(&grid);
        let ctv = ctv_value(&vol, &CtvWeights::new(1.0, 2.0, 3.0).unwrap(), &frame).unwrap();
        assert!(ctv.abs() < 1e-12);
        assert_eq!(tv_value(&vol, &TvWeights::uniform(1.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn negative_weights_are_rejected() {
        let grid = VoxelGrid::centered(3, 3, 1, 1.0).unwrap();
        let vol = Volume::zeros(grid);
        let bad = CtvWeights { lambda_p: -1.0, lambda_r: 0.0, lambda_z: 0.0 };
        assert!(matches!(ctv_value(&vol, &bad, &LocalFrame::for_grid(&grid)), Err(Error::InvalidArgument(_))));
        assert!(CtvWeights::new(0.0, -0.1, 0.0).is_err());
        assert!(TvWeights::new(0.0, 0.0, f64::NAN).is_err());
        assert!(Regularizer::Tv(TvWeights { lambda_x: -1.0, lambda_y: 0.0, lambda_z: 0.0 }).terms(&grid).is_err());
    }

    #[test]
    fn ramp_tv_matches_closed_form() {
        let n = 5;
        let h = 0.2;
        let grid = VoxelGrid::centered(n, n, n, h).unwrap();
        let mut vol = Volume::zeros(grid);
        for idx in 0..grid.len() {
            vol.values_mut()[idx] = grid.unravel(idx).0 as f64;
        }
        let tv = tv_value(&vol, &TvWeights::uniform(1.0).unwrap()).unwrap();
        assert_relative_eq!(tv, ((n - 1) * n * n) as f64 / h, max_relative = 1e-12);
    }

    #[test]
    fn tv_and_ctv_match_explicit_matrix_sums() {
        let grid = VoxelGrid::centered(4, 4, 1, 0.5).unwrap();
        let vol = random_volume(grid, 12);
        let [dx, dy, dz] = explicit_differences(&grid);
        let (gx, gy, gz) = (dx.apply_vec(vol.values()), dy.apply_vec(vol.values()), dz.apply_vec(vol.values()));

        let tw = TvWeights::new(0.5, 2.0, 1.5).unwrap();
        let expect = 0.5 * l1(&gx) + 2.0 * l1(&gy) + 1.5 * l1(&gz);
        assert_relative_eq!(tv_value(&vol, &tw).unwrap(), expect, max_relative = 1e-12);

        let frame = LocalFrame::for_grid(&grid);
        let (mut cp, mut cr) = (0.0, 0.0);
        for idx in 0..grid.len() {
            let (i, j, _) = grid.unravel(idx);
            let (p, r) = (frame.p(i, j), frame.r(i, j));
            cp += (p[0] * gx[idx] + p[1] * gy[idx]).abs();
            cr += (r[0] * gx[idx] + r[1] * gy[idx]).abs();
        }
        let cw = CtvWeights::new(3.0, 0.25, 1.0).unwrap();
        let expect = 3.0 * cp + 0.25 * cr + l1(&gz);
        assert_relative_eq!(ctv_value(&vol, &cw, &frame).unwrap(), expect, max_relative = 1e-12);
    }

    #[test]
    fn isotropic_grouping_equals_isotropic_cartesian_tv() {
        let grid = VoxelGrid::new(9, 8, 5, 0.1, (0.3, -1.2)).unwrap();
        let vol = random_volume(grid, 99);
        let cyl = CylindricalOperators::for_grid(grid);
        let cart = CartesianOperators::new(grid);
        let x = vol.values();
        let (cp, cr, cz) = (cyl.angular.apply_vec(x), cyl.radial.apply_vec(x), cyl.axial.apply_vec(x));
        let (dx, dy, dz) = (cart.x.apply_vec(x), cart.y.apply_vec(x), cart.z.apply_vec(x));
        let iso_cyl: f64 = (0..x.len()).map(|i| (cp[i] * cp[i] + cr[i] * cr[i] + cz[i] * cz[i]).sqrt()).sum();
        let iso_cart: f64 = (0..x.len()).map(|i| (dx[i] * dx[i] + dy[i] * dy[i] + dz[i] * dz[i]).sqrt()).sum();
        assert_relative_eq!(iso_cyl, iso_cart, max_relative = 1e-12);

        let ones = CtvWeights::new(1.0, 1.0, 1.0).unwrap();
        let aniso_cyl = ctv_value(&vol, &ones, &LocalFrame::for_grid(&grid)).unwrap();
        let aniso_cart = tv_value(&vol, &TvWeights::uniform(1.0).unwrap()).unwrap();
        assert!((aniso_cyl - aniso_cart).abs() > 1e-6 * aniso_cart);
    }

    #[test]
    fn radial_structure_is_cheaper_than_angular_under_strong_lambda_p() {
        let n = 32;
        let grid = VoxelGrid::centered(n, n, 1, 1.0).unwrap();
        let radial = Volume::from_fn(grid, |x, y, _| (x.hypot(y) / 3.0).sin());
        let angular = Volume::from_fn(grid, |x, y, _| {
            let r = x.hypot(y);
            (2.0 * y.atan2(x)).sin() * (r / 4.0).min(1.0)
        });
        let unit = TvWeights::uniform(1.0).unwrap();
        // rescale so both have the same Cartesian TV
        let alpha = tv_value(&radial, &unit).unwrap() / tv_value(&angular, &unit).unwrap();
        let angular = Volume::from_vec(grid, angular.values().iter().map(|v| v * alpha).collect()).unwrap();
        assert_relative_eq!(
            tv_value(&angular, &unit).unwrap(),
            tv_value(&radial, &unit).unwrap(),
            max_relative = 1e-12
        );

        let w = CtvWeights::new(10.0, 1.0, 1.0).unwrap();
        let frame = LocalFrame::for_grid(&grid);
        let (a, b) = (ctv_value(&radial, &w, &frame).unwrap(), ctv_value(&angular, &w, &frame).unwrap());
        assert!(a < b, "{a} vs {b}");
    }

    #[test]
    fn clamp_prox_examples() {
        assert_eq!(prox_l1_conjugate(&[0.0, 0.0], 3.0), vec![0.0, 0.0]);
        assert_eq!(prox_l1_conjugate(&[4.0, -7.0, 0.5], 0.0), vec![0.0, 0.0, 0.0]);
        assert_eq!(prox_l1_conjugate(&[5.0, -3.0, 1.0], 2.0), vec![2.0, -2.0, 1.0]);
    }

    #[test]
    fn datafit_prox_examples() {
        let y = [1.0, -2.0, 0.5];
        let sigma = 0.7;
        let v: Vec<f64> = y.iter().map(|v| v * sigma).collect();
        assert!(prox_datafit_conjugate(&v, &y, sigma).iter().all(|&x| x.abs() < 1e-15));
        assert_eq!(prox_datafit_conjugate(&[2.0], &[0.0], 1.0), vec![1.0]);
    }

    #[test]
    fn moreau_identity_for_datafit() {
        // prox_{s f*}(v) + s prox_{f/s}(v/s) = v, where
        // prox_{f/s}(w) = argmin_u 1/2|u - y|^2 / s + 1/2|u - w|^2 = (y + s w) / (1 + s)
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let s: f64 = rng.gen_range(0.01..10.0);
            let v: Vec<f64> = (0..16).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..16).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let dual = prox_datafit_conjugate(&v, &y, s);
            for i in 0..16 {
                let primal = (y[i] + s * (v[i] / s)) / (1.0 + s);
                assert_relative_eq!(dual[i] + s * primal, v[i], epsilon = 1e-12, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn zero_weight_terms_are_dropped() {
        let grid = VoxelGrid::centered(4, 4, 2, 1.0).unwrap();
        let r = Regularizer::Ctv(CtvWeights::new(1.0, 0.0, 2.0).unwrap());
        let labels: Vec<_> = r.terms(&grid).unwrap().iter().map(|t| t.label).collect();
        assert_eq!(labels, ["ctv_p", "ctv_z"]);
        assert!(Regularizer::None.terms(&grid).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn functionals_are_nonnegative_and_one_homogeneous(seed in 0u64..500, alpha in -4.0f64..4.0) {
            let grid = VoxelGrid::new(5, 4, 3, 0.25, (0.5, 0.5)).unwrap();
            let vol = random_volume(grid, seed);
            let scaled = Volume::from_vec(grid, vol.values().iter().map(|v| alpha * v).collect()).unwrap();
            let frame = LocalFrame::for_grid(&grid);
            let cw = CtvWeights::new(2.0, 0.5, 1.0).unwrap();
            let tw = TvWeights::new(1.0, 0.3, 0.0).unwrap();
            let (c, cs) = (ctv_value(&vol, &cw, &frame).unwrap(), ctv_value(&scaled, &cw, &frame).unwrap());
            let (t, ts) = (tv_value(&vol, &tw).unwrap(), tv_value(&scaled, &tw).unwrap());
            prop_assert!(c >= 0.0 && t >= 0.0);
            prop_assert!((cs - alpha.abs() * c).abs() <= 1e-10 * (1.0 + c));
            prop_assert!((ts - alpha.abs() * t).abs() <= 1e-10 * (1.0 + t));
        }

        #[test]
        fn clamp_is_nonexpansive(seed in 0u64..1000, lambda in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..32).map(|_| rng.gen_range(-6.0..6.0)).collect();
            let v: Vec<f64> = (0..32).map(|_| rng.gen_range(-6.0..6.0)).collect();
            let (pu, pv) = (prox_l1_conjugate(&u, lambda), prox_l1_conjugate(&v, lambda));
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d(&pu, &pv) <= d(&u, &v) + 1e-12);
        }
    }
}
