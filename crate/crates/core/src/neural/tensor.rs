use rand::Rng as _;

use crate::rng::Rng;
use crate::{Error, Result};

/// Row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Tensor2 { rows, cols, data })
    }

    /// Uniform in ±√(6 / (rows + cols)).
    pub fn xavier(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
        Tensor2 { rows, cols, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out += self · x`. Rows go four at a time so their sums run
    /// independently; each row's summation order matches `dot`.
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!((x.len(), out.len()), (self.cols, self.rows));
        dispatch!(matvec_kernel(&self.data, self.cols, x, out));
    }

    /// `out += selfᵀ · y`
    pub fn matvec_t_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!((y.len(), out.len()), (self.rows, self.cols));
        dispatch!(matvec_t_kernel(&self.data, self.cols, y, out));
    }

    /// `self += a · bᵀ`
    pub fn outer_add(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!((a.len(), b.len()), (self.rows, self.cols));
        dispatch!(outer_kernel(&mut self.data, a, b));
    }

    pub fn transposed(&self) -> Tensor2 {
        let mut data = vec![0.0; self.data.len()];
        for (i, row) in self.data.chunks_exact(self.cols).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[j * self.rows + i] = v;
            }
        }
        Tensor2 { rows: self.cols, cols: self.rows, data }
    }
}

/// Calls `kernel`, through an AVX2 build of it when the CPU has AVX2. Both
/// builds perform the same operations in the same order (no FMA), so results
/// are bit-identical.
macro_rules! dispatch {
    ($kernel:ident($($arg:expr),*)) => {{
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                #[target_feature(enable = "avx2")]
                unsafe fn avx2(w: impl FnOnce()) {
                    w()
                }
                // SAFETY: AVX2 support was just checked.
                return unsafe { avx2(|| $kernel($($arg),*)) };
            }
        }
        $kernel($($arg),*)
    }};
}
use dispatch;

#[inline(always)]
fn matvec_kernel(w: &[f64], c: usize, x: &[f64], out: &mut [f64]) {
    let mut blocks = w.chunks_exact(4 * c);
    let mut outs = out.chunks_exact_mut(4);
    for (block, o) in (&mut blocks).zip(&mut outs) {
        let rows = [&block[..c], &block[c..2 * c], &block[2 * c..3 * c], &block[3 * c..]];
        let sums = dot4(rows, x);
        for k in 0..4 {
            o[k] += sums[k];
        }
    }
    for (o, row) in outs.into_remainder().iter_mut().zip(blocks.remainder().chunks_exact(c)) {
        *o += dot(row, x);
    }
}

#[inline(always)]
fn matvec_t_kernel(w: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    let mut blocks = w.chunks_exact(4 * cols);
    let mut ys = y.chunks_exact(4);
    for (block, g) in (&mut blocks).zip(&mut ys) {
        let (r0, rest) = block.split_at(cols);
        let (r1, rest) = rest.split_at(cols);
        let (r2, r3) = rest.split_at(cols);
        for ((((o, a), b), c), d) in out.iter_mut().zip(r0).zip(r1).zip(r2).zip(r3) {
            *o += (g[0] * a + g[1] * b) + (g[2] * c + g[3] * d);
        }
    }
    for (&g, row) in ys.remainder().iter().zip(blocks.remainder().chunks_exact(cols)) {
        axpy(g, row, out);
    }
}

#[inline(always)]
fn outer_kernel(w: &mut [f64], a: &[f64], b: &[f64]) {
    for (&g, row) in a.iter().zip(w.chunks_exact_mut(b.len())) {
        if g != 0.0 {
            axpy(g, b, row);
        }
    }
}

/// Four interleaved partial sums, so the loop vectorizes. The summation order
/// is fixed, so results do not depend on the target.
#[inline(always)]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `dot` of four rows against the same vector.
#[inline(always)]
fn dot4(rows: [&[f64]; 4], x: &[f64]) -> [f64; 4] {
    let n = x.len();
    let mut acc = [[0.0; 4]; 4];
    let full = n - n % 4;
    for i in (0..full).step_by(4) {
        let xs = &x[i..i + 4];
        for (r, row) in rows.iter().enumerate() {
            let rs = &row[i..i + 4];
            for k in 0..4 {
                acc[r][k] += rs[k] * xs[k];
            }
        }
    }
    let mut out = [0.0; 4];
    for (r, row) in rows.iter().enumerate() {
        let tail: f64 = row[full..].iter().zip(&x[full..]).map(|(a, b)| a * b).sum();
        out[r] = (acc[r][0] + acc[r][1]) + (acc[r][2] + acc[r][3]) + tail;
    }
    out
}

/// `y += a · x`
#[inline(always)]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    crate::linear_models::sigmoid(z)
}
