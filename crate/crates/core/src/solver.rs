//! Primal-dual hybrid gradient for
//!
//! ```text
//! min_x  1/2 |A x - y|^2 + sum_i lambda_i |C_i x|_1  (+ indicator of x >= 0)
//! ```
//!
//! with the stacked operator `K = [A; C_1; ...; C_n]`, one dual block per
//! row block. The data block uses the conjugate prox of the quadratic, the
//! regularization blocks project onto `[-lambda_i, lambda_i]`.
//!
//! Each iteration applies `K` once and `K^T` once. `K x` is kept for the
//! current iterate, so `K x_bar` is formed by linear combination and the
//! objective is available every iteration without extra operator calls.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Volume;
use crate::linop::{axpy, norm2, operator_norm, LinearOperator, Stacked};
use crate::regularizer::{prox_datafit_conjugate_in_place, prox_l1_conjugate_in_place, RegTerm, Regularizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdhgConfig {
    pub max_iters: usize,
    /// Primal step. Derived from the operator norm when unset.
    pub tau: Option<f64>,
    /// Dual step. Derived from the operator norm when unset.
    pub sigma: Option<f64>,
    /// Over-relaxation of the primal iterate, in `[0, 1]`.
    pub extrapolation: f64,
    pub nonneg: bool,
    /// Power iterations used to estimate `|K|`.
    pub norm_iters: usize,
    pub seed: u64,
    /// Stop once `|x_k - x_{k-1}| / |x_k|` drops below this.
    pub tol: Option<f64>,
    pub verbose: bool,
}

impl Default for PdhgConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tau: None,
            sigma: None,
            extrapolation: 1.0,
            nonneg: true,
            norm_iters: 50,
            seed: 0,
            tol: None,
            verbose: false,
        }
    }
}

/// Safety factor applied to `1 / |K|` for the default balanced steps.
const STEP_FACTOR: f64 = 0.99;

impl PdhgConfig {
    /// Resolves `(tau, sigma)` for an operator of norm `op_norm` and checks
    /// `tau * sigma * L^2 <= 1`.
    pub fn step_sizes(&self, op_norm: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&self.extrapolation) {
            return Err(Error::Config(format!("extrapolation must lie in [0, 1], got {}", self.extrapolation)));
        }
        let l = op_norm.max(f64::MIN_POSITIVE);
        let (tau, sigma) = match (self.tau, self.sigma) {
            (None, None) => (STEP_FACTOR / l, STEP_FACTOR / l),
            (Some(t), None) => (t, STEP_FACTOR * STEP_FACTOR / (t * l * l)),
            (None, Some(s)) => (STEP_FACTOR * STEP_FACTOR / (s * l * l), s),
            (Some(t), Some(s)) => (t, s),
        };
        if !(tau > 0.0 && sigma > 0.0 && tau.is_finite() && sigma.is_finite()) {
            return Err(Error::Config(format!("step sizes must be positive, got tau={tau}, sigma={sigma}")));
        }
        let product = tau * sigma * op_norm * op_norm;
        if product > 1.0 {
            return Err(Error::Config(format!(
                "step sizes violate tau*sigma*L^2 <= 1 (tau={tau}, sigma={sigma}, L={op_norm}, product={product})"
            )));
        }
        Ok((tau, sigma))
    }
}

/// Diagnostics for the iterate produced by one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub data_fit: f64,
    pub regularization: f64,
    /// `|x_k - x_{k-1}| / |x_k|`
    pub relative_change: f64,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} objective={:.9e} data_fit={:.9e} regularizer={:.9e} rel_change={:.3e}",
            self.iteration, self.objective, self.data_fit, self.regularization, self.relative_change
        )
    }
}

#[derive(Clone, Debug)]
pub struct ReconResult {
    pub volume: Volume,
    pub history: Vec<IterationRecord>,
    pub initial_objective: f64,
    pub iterations: usize,
    pub tau: f64,
    pub sigma: f64,
    pub op_norm: f64,
}

impl ReconResult {
    pub fn final_objective(&self) -> f64 {
        self.history.last().map_or(self.initial_objective, |r| r.objective)
    }
}

/// Solver state. `step` advances one iteration.
pub struct Pdhg<'a> {
    forward: &'a dyn LinearOperator,
    data: &'a [f64],
    terms: Vec<RegTerm>,
    tau: f64,
    sigma: f64,
    theta: f64,
    nonneg: bool,
    op_norm: f64,
    iteration: usize,
    x: Vec<f64>,
    x_prev: Vec<f64>,
    /// `K x` for the current and previous iterate, one vector per block.
    kx: Vec<Vec<f64>>,
    kx_prev: Vec<Vec<f64>>,
    duals: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

impl<'a> Pdhg<'a> {
    pub fn new(
        forward: &'a dyn LinearOperator,
        data: &'a [f64],
        terms: Vec<RegTerm>,
        cfg: &PdhgConfig,
        init: &[f64],
    ) -> Result<Self> {
        let n = forward.input_len();
        if data.len() != forward.output_len() {
            return Err(Error::mismatch(format!(
                "data has {} entries, forward operator produces {}",
                data.len(),
                forward.output_len()
            )));
        }
        if init.len() != n {
            return Err(Error::mismatch(format!("initial volume has {} voxels, operator expects {n}", init.len())));
        }
        if let Some(t) = terms.iter().find(|t| t.op.input_len() != n) {
            return Err(Error::mismatch(format!("regularizer term {} has the wrong domain", t.label)));
        }
        if cfg.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }

        let op_norm = {
            let mut blocks: Vec<&dyn LinearOperator> = vec![forward];
            blocks.extend(terms.iter().map(|t| t.op.as_ref() as &dyn LinearOperator));
            operator_norm(&Stacked::new(blocks), cfg.norm_iters, cfg.seed)
        };
        let (tau, sigma) = cfg.step_sizes(op_norm)?;

        let mut x = init.to_vec();
        if cfg.nonneg {
            x.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let mut kx = Vec::with_capacity(terms.len() + 1);
        kx.push(forward.apply_vec(&x));
        for t in &terms {
            kx.push(t.op.apply_vec(&x));
        }
        let duals = kx.iter().map(|b| vec![0.0; b.len()]).collect();
        Ok(Self {
            forward,
            data,
            terms,
            tau,
            sigma,
            theta: cfg.extrapolation,
            nonneg: cfg.nonneg,
            op_norm,
            iteration: 0,
            x_prev: x.clone(),
            x,
            kx_prev: kx.clone(),
            kx,
            duals,
            scratch: vec![0.0; n],
        })
    }

    /// Replaces the dual variables, data block first.
    pub fn set_duals(&mut self, duals: Vec<Vec<f64>>) -> Result<()> {
        if duals.len() != self.duals.len() || duals.iter().zip(&self.duals).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::mismatch("dual blocks do not match the operator stack"));
        }
        self.duals = duals;
        Ok(())
    }

    pub fn primal(&self) -> &[f64] {
        &self.x
    }

    pub fn duals(&self) -> &[Vec<f64>] {
        &self.duals
    }

    pub fn step_sizes(&self) -> (f64, f64) {
        (self.tau, self.sigma)
    }

    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn data_fit_of(&self, ax: &[f64]) -> f64 {
        0.5 * ax.iter().zip(self.data).map(|(a, y)| (a - y) * (a - y)).sum::<f64>()
    }

    fn regularization_of(&self, kx: &[Vec<f64>]) -> f64 {
        self.terms.iter().zip(&kx[1..]).map(|(t, b)| t.weight * b.iter().map(|v| v.abs()).sum::<f64>()).sum()
    }

    /// Objective at the current iterate.
    pub fn objective(&self) -> f64 {
        self.data_fit_of(&self.kx[0]) + self.regularization_of(&self.kx)
    }

    pub fn step(&mut self) -> Result<IterationRecord> {
        let (tau, sigma, theta) = (self.tau, self.sigma, self.theta);

        // dual ascent at K x_bar = K x + theta (K x - K x_prev)
        for (b, z) in self.duals.iter_mut().enumerate() {
            let (kx, kxp) = (&self.kx[b], &self.kx_prev[b]);
            for ((zi, &a), &ap) in z.iter_mut().zip(kx).zip(kxp) {
                *zi += sigma * (a + theta * (a - ap));
            }
            if b == 0 {
                prox_datafit_conjugate_in_place(z, self.data, sigma);
            } else {
                prox_l1_conjugate_in_place(z, self.terms[b - 1].weight);
            }
        }

        // primal descent along -K^T z
        std::mem::swap(&mut self.x_prev, &mut self.x);
        self.x.copy_from_slice(&self.x_prev);
        self.forward.apply_adjoint(&self.duals[0], &mut self.scratch);
        axpy(-tau, &self.scratch, &mut self.x);
        for (t, z) in self.terms.iter().zip(&self.duals[1..]) {
            t.op.apply_adjoint(z, &mut self.scratch);
            axpy(-tau, &self.scratch, &mut self.x);
        }
        if self.nonneg {
            self.x.iter_mut().for_each(|v| *v = v.max(0.0));
        }

        std::mem::swap(&mut self.kx_prev, &mut self.kx);
        self.forward.apply(&self.x, &mut self.kx[0]);
        for (t, out) in self.terms.iter().zip(self.kx[1..].iter_mut()) {
            t.op.apply(&self.x, out);
        }
        self.iteration += 1;

        let data_fit = self.data_fit_of(&self.kx[0]);
        let regularization = self.regularization_of(&self.kx);
        let objective = data_fit + regularization;
        if !objective.is_finite() {
            return Err(Error::Divergence { iteration: self.iteration, what: "objective" });
        }
        let change: f64 = self.x.iter().zip(&self.x_prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let xn = norm2(&self.x);
        let relative_change = if xn > 0.0 { change / xn } else { change };
        Ok(IterationRecord { iteration: self.iteration, objective, data_fit, regularization, relative_change })
    }

    pub fn into_primal(self) -> Vec<f64> {
        self.x
    }
}

/// Runs PDHG from `init` for `cfg.max_iters` iterations, or until the
/// optional relative-change tolerance is met.
pub fn solve(
    forward: &dyn LinearOperator,
    y: &[f64],
    reg: &Regularizer,
    cfg: &PdhgConfig,
    init: &Volume,
) -> Result<ReconResult> {
    let grid = *init.grid();
    let terms = reg.terms(&grid)?;
    let mut pdhg = Pdhg::new(forward, y, terms, cfg, init.values())?;
    let initial_objective = pdhg.objective();
    let mut history = Vec::with_capacity(cfg.max_iters);
    for _ in 0..cfg.max_iters {
        let rec = pdhg.step()?;
        if cfg.verbose {
            eprintln!("{rec}");
        }
        history.push(rec);
        if cfg.tol.is_some_and(|tol| rec.relative_change < tol) {
            break;
        }
    }
    let (tau, sigma) = pdhg.step_sizes();
    let op_norm = pdhg.op_norm();
    let iterations = pdhg.iteration();
    let volume = Volume::from_vec(grid, pdhg.into_primal())?;
    Ok(ReconResult { volume, history, initial_objective, iterations, tau, sigma, op_norm })
}

/// `1/2 |A x - y|^2 + R(x)`
pub fn objective(x: &Volume, forward: &dyn LinearOperator, y: &[f64], reg: &Regularizer) -> Result<f64> {
    if y.len() != forward.output_len() || x.values().len() != forward.input_len() {
        return Err(Error::mismatch("objective: operator, volume and data sizes disagree"));
    }
    let ax = forward.apply_vec(x.values());
    let fit = 0.5 * ax.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    Ok(fit + reg.value(x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VoxelGrid;
    use crate::linop::{DenseMatrix, Identity};
    use crate::regularizer::{CtvWeights, TvWeights};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn step_size_condition_is_enforced() {
        let cfg = PdhgConfig { tau: Some(1.0), sigma: Some(1.0), ..Default::default() };
        assert!(matches!(cfg.step_sizes(2.0), Err(Error::Config(_))));
        assert!(cfg.step_sizes(1.0).is_ok());
        let (t, s) = PdhgConfig::default().step_sizes(4.0).unwrap();
        assert_eq!((t, s), (0.99 / 4.0, 0.99 / 4.0));
        let (t, s) = PdhgConfig { tau: Some(0.1), ..Default::default() }.step_sizes(4.0).unwrap();
        assert!(t * s * 16.0 <= 1.0 && t == 0.1);
        let bad = PdhgConfig { extrapolation: 1.5, ..Default::default() };
        assert!(bad.step_sizes(1.0).is_err());
    }

    #[test]
    fn violating_steps_fail_at_construction() {
        let grid = VoxelGrid::centered(4, 1, 1, 1.0).unwrap();
        let a = Identity(4);
        let y = [1.0; 4];
        let cfg = PdhgConfig { tau: Some(2.0), sigma: Some(2.0), ..Default::default() };
        let r = solve(&a, &y, &Regularizer::None, &cfg, &Volume::zeros(grid));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let grid = VoxelGrid::centered(4, 1, 1, 1.0).unwrap();
        let r = solve(&Identity(4), &[0.0; 3], &Regularizer::None, &PdhgConfig::default(), &Volume::zeros(grid));
        assert!(matches!(r, Err(Error::GeometryMismatch(_))));
    }

    #[test]
    fn divergence_reports_iteration() {
        struct Nan;
        impl LinearOperator for Nan {
            fn input_len(&self) -> usize {
                2
            }
            fn output_len(&self) -> usize {
                2
            }
            fn apply(&self, x: &[f64], out: &mut [f64]) {
                out.copy_from_slice(x);
                if x.iter().any(|&v| v != 0.0) {
                    out[0] = f64::NAN;
                }
            }
            fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
                out.copy_from_slice(y);
            }
        }
        let grid = VoxelGrid::centered(2, 1, 1, 1.0).unwrap();
        let cfg = PdhgConfig { nonneg: false, tau: Some(0.5), sigma: Some(0.5), ..Default::default() };
        let err = solve(&Nan, &[1.0, 1.0], &Regularizer::None, &cfg, &Volume::zeros(grid)).unwrap_err();
        assert!(matches!(err, Error::Divergence { iteration: 1, .. }), "{err}");
        assert!(err.is_numerical());
    }

    #[test]
    fn consistent_system_is_fit() {
        let grid = VoxelGrid::centered(8, 8, 4, 1.0).unwrap();
        let a = random_matrix(400, grid.len(), 21);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y = a.apply_vec(&truth);
        let cfg = PdhgConfig { nonneg: false, ..Default::default() };
        let res = solve(&a, &y, &Regularizer::None, &cfg, &Volume::zeros(grid)).unwrap();
        let r: Vec<f64> = a.apply_vec(res.volume.values()).iter().zip(&y).map(|(u, v)| u - v).collect();
        assert!(norm2(&r) / norm2(&y) <= 1e-3, "{}", norm2(&r) / norm2(&y));
        assert_eq!(res.history.len(), 500);
        assert!(res.final_objective() <= res.initial_objective);
    }

    #[test]
    fn zero_data_gives_zero_volume() {
        let grid = VoxelGrid::centered(6, 6, 3, 0.5).unwrap();
        let a = random_matrix(50, grid.len(), 2);
        let y = vec![0.0; 50];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = Volume::from_fn(grid, |_, _, _| rng.gen_range(0.0..1.0));
        for reg in [
            Regularizer::Tv(TvWeights::uniform(0.1).unwrap()),
            Regularizer::Ctv(CtvWeights::new(0.5, 0.1, 0.1).unwrap()),
        ] {
            let cfg = PdhgConfig { max_iters: 3000, ..Default::default() };
            let res = solve(&a, &y, &reg, &cfg, &init).unwrap();
            let m = res.volume.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(m < 1e-3, "{m}");
            assert!(res.final_objective() <= res.initial_objective);
        }
    }

    #[test]
    fn objective_examples() {
        let grid = VoxelGrid::centered(3, 1, 1, 1.0).unwrap();
        let zero = Volume::zeros(grid);
        let reg = Regularizer::Tv(TvWeights::uniform(2.0).unwrap());
        assert_eq!(objective(&zero, &Identity(3), &[0.0; 3], &reg).unwrap(), 0.0);
        assert_eq!(objective(&zero, &Identity(3), &[1.0, -2.0, 2.0], &reg).unwrap(), 4.5);
    }

    #[test]
    fn objective_matches_explicit_recomputation() {
        let grid = VoxelGrid::centered(3, 3, 2, 0.5).unwrap();
        let a = random_matrix(10, grid.len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Volume::from_fn(grid, |_, _, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = TvWeights::new(0.3, 0.0, 1.2).unwrap();
        // explicit: residual from dense rows, TV from neighbour differences
        let mut fit = 0.0;
        for (r, yr) in y.iter().enumerate() {
            let ax: f64 = (0..grid.len()).map(|c| a.get(r, c) * x.values()[c]).sum();
            fit += 0.5 * (ax - yr).powi(2);
        }
        let mut tv = 0.0;
        for k in 0..2 {
            for j in 0..3 {
                for i in 0..3 {
                    if i + 1 < 3 {
                        tv += 0.3 * ((x.get(i + 1, j, k) - x.get(i, j, k)) / 0.5).abs();
                    }
                    if k + 1 < 2 {
                        tv += 1.2 * ((x.get(i, j, k + 1) - x.get(i, j, k)) / 0.5).abs();
                    }
                }
            }
        }
        let got = objective(&x, &a, &y, &Regularizer::Tv(w)).unwrap();
        assert!((got - (fit + tv)).abs() <= 1e-12 * (fit + tv));
    }

    #[test]
    fn fixed_point_is_stationary() {
        // x* constant, so C x* = 0 and any |z_reg| < lambda is optimal for
        // the regularization block. With A = I the data dual is A x* - y,
        // and choosing y so that z_data = -C^T z_reg zeroes K^T z.
        let grid = VoxelGrid::centered(4, 3, 2, 0.5).unwrap();
        let n = grid.len();
        let reg = Regularizer::Ctv(CtvWeights::new(0.7, 0.4, 0.9).unwrap());
        let terms = reg.terms(&grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let z_reg: Vec<Vec<f64>> =
            terms.iter().map(|t| (0..n).map(|_| rng.gen_range(-0.9..0.9) * t.weight).collect()).collect();
        let mut ct_z = vec![0.0; n];
        for (t, z) in terms.iter().zip(&z_reg) {
            axpy(1.0, &t.op.apply_adjoint_vec(z), &mut ct_z);
        }
        let x_star = vec![1.3; n];
        let z_data: Vec<f64> = ct_z.iter().map(|v| -v).collect();
        let y: Vec<f64> = x_star.iter().zip(&z_data).map(|(x, z)| x - z).collect();

        let a = Identity(n);
        let cfg = PdhgConfig { nonneg: false, ..Default::default() };
        let mut pdhg = Pdhg::new(&a, &y, terms, &cfg, &x_star).unwrap();
        let mut duals = vec![z_data.clone()];
        duals.extend(z_reg.iter().cloned());
        pdhg.set_duals(duals.clone()).unwrap();
        pdhg.step().unwrap();
        for (u, v) in pdhg.primal().iter().zip(&x_star) {
            assert!((u - v).abs() <= 1e-12);
        }
        for (got, want) in pdhg.duals().iter().zip(&duals) {
            for (u, v) in got.iter().zip(want) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }
}
