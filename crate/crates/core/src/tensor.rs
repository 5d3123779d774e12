//! Dense row-major 2-D `f64` tensors and labelled, seeded random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: {op} got {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("tensor dimensions must be nonzero, got {rows}x{cols}")]
    ZeroDimension { rows: usize, cols: usize },
    #[error("data length {len} does not match {rows}x{cols}")]
    LengthMismatch { rows: usize, cols: usize, len: usize },
    #[error("bad sampling range: {0}")]
    BadRange(String),
}

/// Batch x features matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Binary elementwise operators supported by [`Tensor2::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

impl ElemOp {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ElemOp::Add => a + b,
            ElemOp::Sub => a - b,
            ElemOp::Mul => a * b,
            ElemOp::Div => a / b,
            ElemOp::Min => a.min(b),
            ElemOp::Max => a.max(b),
        }
    }
}

/// Right-hand operand of an elementwise op.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor2),
    Scalar(f64),
}

impl Tensor2 {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if rows == 0 || cols == 0 {
            return Err(TensorError::ZeroDimension { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(TensorError::LengthMismatch {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self, TensorError> {
        Self::from_vec(rows, cols, vec![value; rows * cols])
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self, TensorError> {
        Self::filled(rows, cols, 0.0)
    }

    pub fn identity(n: usize) -> Result<Self, TensorError> {
        let mut t = Self::zeros(n, n)?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    /// Single-column tensor from a slice.
    pub fn column(values: &[f64]) -> Result<Self, TensorError> {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same shape, new data. Caller guarantees the length.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matmul(&self, b: &Tensor2) -> Result<Tensor2, TensorError> {
        if self.cols != b.rows {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: b.shape(),
            });
        }
        Ok(gemm(
            (self.rows, self.cols, b.cols),
            (&self.data, self.cols as isize, 1),
            (&b.data, b.cols as isize, 1),
        ))
    }

    /// `selfᵀ · b` without materializing the transpose.
    pub fn t_matmul(&self, b: &Tensor2) -> Result<Tensor2, TensorError> {
        if self.rows != b.rows {
            return Err(TensorError::ShapeMismatch {
                op: "t_matmul",
                left: self.shape(),
                right: b.shape(),
            });
        }
        Ok(gemm(
            (self.cols, self.rows, b.cols),
            (&self.data, 1, self.cols as isize),
            (&b.data, b.cols as isize, 1),
        ))
    }

    /// `self · bᵀ` without materializing the transpose.
    pub fn matmul_t(&self, b: &Tensor2) -> Result<Tensor2, TensorError> {
        if self.cols != b.cols {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_t",
                left: self.shape(),
                right: b.shape(),
            });
        }
        Ok(gemm(
            (self.rows, self.cols, b.rows),
            (&self.data, self.cols as isize, 1),
            (&b.data, 1, b.cols as isize),
        ))
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Tensor2 {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn elementwise(&self, rhs: Operand<'_>, op: ElemOp) -> Result<Tensor2, TensorError> {
        let data = match rhs {
            Operand::Scalar(s) => self.data.iter().map(|&a| op.apply(a, s)).collect(),
            Operand::Tensor(b) => {
                if b.shape() != self.shape() {
                    return Err(TensorError::ShapeMismatch {
                        op: "elementwise",
                        left: self.shape(),
                        right: b.shape(),
                    });
                }
                self.data
                    .iter()
                    .zip(&b.data)
                    .map(|(&a, &b)| op.apply(a, b))
                    .collect()
            }
        };
        Ok(self.with_data(data))
    }

    pub fn add_row_bias(&self, bias: &Tensor2) -> Result<Tensor2, TensorError> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(TensorError::ShapeMismatch {
                op: "add_row_bias",
                left: self.shape(),
                right: bias.shape(),
            });
        }
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.cols) {
            for (v, b) in row.iter_mut().zip(&bias.data) {
                *v += b;
            }
        }
        Ok(self.with_data(data))
    }

    /// Column sums as a `1 x cols` tensor.
    pub fn sum_rows(&self) -> Tensor2 {
        let mut out = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Tensor2 {
            rows: 1,
            cols: self.cols,
            data: out,
        }
    }

    /// Rows gathered by index, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Tensor2, TensorError> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor2::from_vec(indices.len(), self.cols, data)
    }

    pub fn reduce_mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population standard deviation over all elements.
    pub fn reduce_std(&self) -> f64 {
        let mean = self.reduce_mean();
        let var = self
            .data
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.data.len() as f64;
        var.sqrt()
    }

    pub fn rand_uniform(
        rng: &mut SeededRng,
        rows: usize,
        cols: usize,
        lo: f64,
        hi: f64,
    ) -> Result<Tensor2, TensorError> {
        let data = (0..rows * cols)
            .map(|_| rng.uniform(lo, hi))
            .collect::<Result<Vec<_>, _>>()?;
        Tensor2::from_vec(rows, cols, data)
    }

    pub fn rand_normal(
        rng: &mut SeededRng,
        rows: usize,
        cols: usize,
        mean: f64,
        sd: f64,
    ) -> Result<Tensor2, TensorError> {
        if !(sd >= 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(TensorError::BadRange(format!("normal(mean={mean}, sd={sd})")));
        }
        let dist = Normal::new(mean, sd).map_err(|e| TensorError::BadRange(e.to_string()))?;
        let data = (0..rows * cols).map(|_| dist.sample(&mut rng.inner)).collect();
        Tensor2::from_vec(rows, cols, data)
    }
}

/// `(m x k) · (k x n)` where each operand is a slice plus (row, col) strides.
fn gemm(
    (m, k, n): (usize, usize, usize),
    (a, rsa, csa): (&[f64], isize, isize),
    (b, rsb, csb): (&[f64], isize, isize),
) -> Tensor2 {
    debug_assert!(a.len() >= m * k && b.len() >= k * n);
    let mut out = vec![0.0; m * n];
    // SAFETY: strides describe in-bounds views of `a` (m x k) and `b`
    // (k x n), checked by the callers' shape tests; `out` is m x n row-major.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Tensor2 {
        rows: m,
        cols: n,
        data: out,
    }
}

/// Deterministic random stream. Substreams are keyed by a text label, so
/// the values a consumer sees do not depend on draws made elsewhere.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(splitmix64(seed)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this stream's seed and `label`.
    pub fn substream(&self, label: &str) -> SeededRng {
        SeededRng::new(splitmix64(self.seed ^ fnv1a(label)))
    }

    /// Uniform draw in the half-open interval `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64, TensorError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(TensorError::BadRange(format!("uniform[{lo}, {hi})")));
        }
        let u: f64 = self.inner.random();
        let v = lo + (hi - lo) * u;
        // rounding can land exactly on hi
        Ok(if v >= hi { hi.next_down().max(lo) } else { v })
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        Normal::new(mean, sd)
            .map(|d| d.sample(&mut self.inner))
            .unwrap_or(mean)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn unit(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Index drawn proportionally to the nonnegative `weights`.
    pub fn weighted_index(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return self.below(weights.len());
        }
        let mut target = self.unit() * total;
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                return i;
            }
            target -= w;
        }
        weights.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &Tensor2, b: &Tensor2) -> Vec<f64> {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out[i * b.cols() + j] = s;
            }
        }
        out
    }

    #[test]
    fn scalar_matmul() {
        let a = Tensor2::from_vec(1, 1, vec![2.0]).unwrap();
        let b = Tensor2::from_vec(1, 1, vec![3.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[6.0]);
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = SeededRng::new(3);
        let a = Tensor2::rand_normal(&mut rng, 5, 4, 0.0, 1.0).unwrap();
        assert_eq!(a.matmul(&Tensor2::identity(4).unwrap()).unwrap(), a);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = SeededRng::new(11);
        for (n, k, m) in [(3, 2, 4), (1, 7, 3), (6, 6, 1), (4, 5, 9)] {
            let a = Tensor2::rand_normal(&mut rng, n, k, 0.0, 1.0).unwrap();
            let b = Tensor2::rand_normal(&mut rng, k, m, 0.0, 1.0).unwrap();
            let got = a.matmul(&b).unwrap();
            for (g, e) in got.data().iter().zip(naive_matmul(&a, &b)) {
                assert!((g - e).abs() < 1e-12);
            }
            let bt = b.transpose();
            let via_t = a.matmul_t(&bt).unwrap();
            let at = a.transpose();
            let via_tm = at.t_matmul(&b).unwrap();
            for ((g, x), y) in got.data().iter().zip(via_t.data()).zip(via_tm.data()) {
                assert!((g - x).abs() < 1e-12 && (g - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let a = Tensor2::zeros(2, 3).unwrap();
        assert!(matches!(
            a.matmul(&a),
            Err(TensorError::ShapeMismatch { .. })
        ));
        let b = Tensor2::zeros(3, 2).unwrap();
        assert!(a.elementwise(Operand::Tensor(&b), ElemOp::Add).is_err());
        assert!(a.add_row_bias(&Tensor2::zeros(1, 2).unwrap()).is_err());
        assert!(Tensor2::zeros(0, 3).is_err());
        assert!(Tensor2::from_vec(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn reductions() {
        let t = Tensor2::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.reduce_mean(), 2.5);
        assert_eq!(Tensor2::filled(3, 3, 7.5).unwrap().reduce_std(), 0.0);
        assert_eq!(Tensor2::from_vec(1, 2, vec![0.0, 2.0]).unwrap().reduce_std(), 1.0);
    }

    #[test]
    fn elementwise_and_bias() {
        let t = Tensor2::from_vec(2, 2, vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        let s = t.elementwise(Operand::Scalar(2.0), ElemOp::Mul).unwrap();
        assert_eq!(s.data(), &[2.0, -4.0, 6.0, 8.0]);
        let m = t.elementwise(Operand::Tensor(&s), ElemOp::Max).unwrap();
        assert_eq!(m.data(), &[2.0, -2.0, 6.0, 8.0]);
        let bias = Tensor2::from_vec(1, 2, vec![10.0, 20.0]).unwrap();
        let b = t.add_row_bias(&bias).unwrap();
        assert_eq!(b.data(), &[11.0, 18.0, 13.0, 24.0]);
        assert_eq!(b.sum_rows().data(), &[24.0, 42.0]);
    }

    #[test]
    fn same_seed_same_stream() {
        let a = Tensor2::rand_uniform(&mut SeededRng::new(42), 8, 8, -1.0, 1.0).unwrap();
        let b = Tensor2::rand_uniform(&mut SeededRng::new(42), 8, 8, -1.0, 1.0).unwrap();
        assert_eq!(a, b);
        let root = SeededRng::new(42);
        let mut s1 = root.substream("inputs");
        let mut s2 = root.substream("target");
        assert_ne!(s1.next_u64(), s2.next_u64());
        // substream independent of prior draws on the parent
        let mut drained = SeededRng::new(42);
        for _ in 0..100 {
            drained.next_u64();
        }
        assert_eq!(
            drained.substream("inputs").next_u64(),
            root.substream("inputs").next_u64()
        );
    }

    #[test]
    fn uniform_mean_and_half_open() {
        // 6 sigma of the mean of 1e5 U(0,1) draws: 6 * sqrt(1/12) / sqrt(1e5) ~ 0.0055
        let mut rng = SeededRng::new(7);
        let t = Tensor2::rand_uniform(&mut rng, 1000, 100, 0.0, 1.0).unwrap();
        assert!((t.reduce_mean() - 0.5).abs() < 0.01);
        let h = Tensor2::rand_uniform(&mut rng, 1000, 100, 0.0, 0.5).unwrap();
        assert!(h.data().iter().all(|&v| (0.0..0.5).contains(&v)));
        assert!(matches!(
            Tensor2::rand_uniform(&mut rng, 2, 2, 1.0, 1.0),
            Err(TensorError::BadRange(_))
        ));
        assert!(Tensor2::rand_normal(&mut rng, 2, 2, 0.0, -1.0).is_err());
    }
}
