//! Independent reference solutions shared by the integration tests.
#![allow(dead_code)]

use ctv::linop::DenseMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Well-conditioned tall system: identity block on top of a random block.
pub fn least_squares_instance(n: usize, extra: usize, seed: u64) -> (DenseMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = n + extra;
    let mut a = DenseMatrix::zeros(rows, n);
    for c in 0..n {
        a.set(c, c, 1.0);
    }
    for r in n..rows {
        for c in 0..n {
            a.set(r, c, rng.gen_range(-1.0..1.0) / (n as f64).sqrt());
        }
    }
    let y: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (a, y)
}

/// Normal-equation solution via Cholesky.
pub fn least_squares_oracle(a: &DenseMatrix, y: &[f64]) -> Vec<f64> {
    let m = DMatrix::from_row_slice(a.rows(), a.cols(), a.data());
    let rhs = m.transpose() * DVector::from_column_slice(y);
    let chol = (m.transpose() * &m).cholesky().expect("full column rank");
    chol.solve(&rhs).iter().copied().collect()
}

/// Exact 1D TV denoising `min 1/2|x - y|^2 + lambda sum |x_{i+1} - x_i|`
/// through its dual `min 1/2|y - D^T u|^2, |u_i| <= lambda`, solved by
/// enumerating every active set of the box constraints.
pub fn tv1d_oracle(y: &[f64], lambda: f64) -> Vec<f64> {
    let n = y.len();
    let m = n - 1;
    // D is m x n, (D x)_i = x_{i+1} - x_i
    let mut d = DMatrix::<f64>::zeros(m, n);
    for i in 0..m {
        d[(i, i)] = -1.0;
        d[(i, i + 1)] = 1.0;
    }
    let q = &d * d.transpose();
    let yv = DVector::from_column_slice(y);
    let b = &d * &yv;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for code in 0..3usize.pow(m as u32) {
        // state per coordinate: 0 free, 1 at -lambda, 2 at +lambda
        let mut state = vec![0; m];
        let mut c = code;
        for s in state.iter_mut() {
            *s = c % 3;
            c /= 3;
        }
        let free: Vec<usize> = (0..m).filter(|&i| state[i] == 0).collect();
        let mut u = DVector::<f64>::zeros(m);
        for i in 0..m {
            u[i] = match state[i] {
                1 => -lambda,
                2 => lambda,
                _ => 0.0,
            };
        }
        if !free.is_empty() {
            // Q_ff u_f = b_f - Q_fa u_a
            let k = free.len();
            let mut qff = DMatrix::<f64>::zeros(k, k);
            let mut rhs = DVector::<f64>::zeros(k);
            for (a, &fa) in free.iter().enumerate() {
                rhs[a] = b[fa];
                for j in 0..m {
                    if state[j] != 0 {
                        rhs[a] -= q[(fa, j)] * u[j];
                    }
                }
                for (bb, &fb) in free.iter().enumerate() {
                    qff[(a, bb)] = q[(fa, fb)];
                }
            }
            let sol = match qff.lu().solve(&rhs) {
                Some(s) => s,
                None => continue,
            };
            for (a, &fa) in free.iter().enumerate() {
                u[fa] = sol[a];
            }
        }
        if u.iter().any(|v| v.abs() > lambda + 1e-12) {
            continue;
        }
        let r = &yv - d.transpose() * &u;
        let val = 0.5 * r.norm_squared();
        if best.as_ref().is_none_or(|(bv, _)| val < *bv) {
            best = Some((val, u));
        }
    }
    let u = best.expect("feasible active set").1;
    (yv - d.transpose() * u).iter().copied().collect()
}
