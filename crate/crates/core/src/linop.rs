//! Matrix-free linear operators, stacking, and the two numerical checks every
//! operator in this crate has to pass: the dot-product adjoint test and the
//! power-iteration norm estimate used for step sizing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A real linear map `R^n -> R^m` with an exact transpose.
///
/// `apply` and `apply_adjoint` overwrite `out` completely.
pub trait LinearOperator: Sync {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_len()];
        self.apply(x, &mut out);
        out
    }

    fn apply_adjoint_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.input_len()];
        self.apply_adjoint(y, &mut out);
        out
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn input_len(&self) -> usize {
        (**self).input_len()
    }
    fn output_len(&self) -> usize {
        (**self).output_len()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply(x, out)
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        (**self).apply_adjoint(y, out)
    }
}

impl<T: LinearOperator + ?Sized + Send> LinearOperator for Box<T> {
    fn input_len(&self) -> usize {
        (**self).input_len()
    }
    fn output_len(&self) -> usize {
        (**self).output_len()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply(x, out)
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        (**self).apply_adjoint(y, out)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn input_len(&self) -> usize {
        self.0
    }
    fn output_len(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
    }
}

/// Elementwise scaling by a fixed vector.
#[derive(Clone, Debug)]
pub struct Diagonal(pub Vec<f64>);

impl LinearOperator for Diagonal {
    fn input_len(&self) -> usize {
        self.0.len()
    }
    fn output_len(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &d), &v) in out.iter_mut().zip(&self.0).zip(x) {
            *o = d * v;
        }
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.apply(y, out)
    }
}

/// Row-major dense matrix. Used for small explicit instances and for
/// assembling operators column by column in tests.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "dense matrix data length");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    /// Materializes `op` by applying it to every unit vector.
    pub fn assemble(op: &dyn LinearOperator) -> Self {
        let (rows, cols) = (op.output_len(), op.input_len());
        let mut m = Self::zeros(rows, cols);
        let mut e = vec![0.0; cols];
        let mut col = vec![0.0; rows];
        for c in 0..cols {
            e[c] = 1.0;
            op.apply(&e, &mut col);
            e[c] = 0.0;
            for (r, &v) in col.iter().enumerate() {
                m.data[r * cols + c] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl LinearOperator for DenseMatrix {
    fn input_len(&self) -> usize {
        self.cols
    }
    fn output_len(&self) -> usize {
        self.rows
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(&self.data[r * self.cols..(r + 1) * self.cols], x);
        }
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (r, &yr) in y.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(&self.data[r * self.cols..(r + 1) * self.cols]) {
                *o += a * yr;
            }
        }
    }
}

/// Vertical concatenation `[K_1; K_2; ...]` of operators sharing a domain.
pub struct Stacked<'a> {
    blocks: Vec<&'a dyn LinearOperator>,
}

impl<'a> Stacked<'a> {
    pub fn new(blocks: Vec<&'a dyn LinearOperator>) -> Self {
        assert!(!blocks.is_empty(), "stack needs at least one block");
        let n = blocks[0].input_len();
        assert!(blocks.iter().all(|b| b.input_len() == n), "stacked blocks must share a domain");
        Self { blocks }
    }
}

impl LinearOperator for Stacked<'_> {
    fn input_len(&self) -> usize {
        self.blocks[0].input_len()
    }
    fn output_len(&self) -> usize {
        self.blocks.iter().map(|b| b.output_len()).sum()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut offset = 0;
        for b in &self.blocks {
            let m = b.output_len();
            b.apply(x, &mut out[offset..offset + m]);
            offset += m;
        }
    }
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut tmp = vec![0.0; out.len()];
        let mut offset = 0;
        for b in &self.blocks {
            let m = b.output_len();
            b.apply_adjoint(&y[offset..offset + m], &mut tmp);
            axpy(1.0, &tmp, out);
            offset += m;
        }
    }
}

/// Sequential dot product; the summation order is fixed so results do not
/// depend on the thread pool.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn random_vector(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Relative mismatch `|<Ax, y> - <x, A^T y>| / max(|<Ax, y>|, |<x, A^T y>|)`
/// for uniform random `x`, `y` drawn from `seed`.
pub fn adjoint_mismatch(op: &dyn LinearOperator, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_vector(op.input_len(), &mut rng);
    let y = random_vector(op.output_len(), &mut rng);
    let lhs = dot(&op.apply_vec(&x), &y);
    let rhs = dot(&x, &op.apply_adjoint_vec(&y));
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Largest singular value of `op` by power iteration on `A^T A`.
///
/// Returns `||A v||` for the normalized iterate after `iters` steps, which
/// is a Rayleigh-quotient estimate and so never exceeds the true norm. For a
/// PSD iteration the sequence of estimates is nondecreasing in `iters`.
pub fn operator_norm(op: &dyn LinearOperator, iters: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = random_vector(op.input_len(), &mut rng);
    let mut av = vec![0.0; op.output_len()];
    let n = norm2(&v);
    if n == 0.0 {
        return 0.0;
    }
    v.iter_mut().for_each(|x| *x /= n);
    for _ in 0..iters.max(1) {
        op.apply(&v, &mut av);
        op.apply_adjoint(&av, &mut v);
        let n = norm2(&v);
        if n == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= n);
    }
    op.apply(&v, &mut av);
    norm2(&av)
}
