//! Dense double-precision arrays with exact multiply-accumulate counting.
//!
//! Everything the reasoning model needs and nothing more: matmul, row
//! softmax, elementwise add/scale, row mean, convolutions (`conv`), and a
//! tape-based reverse mode (`autodiff`). FLOPs are counted as MACs only;
//! additions, exponentials, and divisions are free. Counters are passed
//! per evaluation context so concurrent evaluations never share state.

pub mod autodiff;
pub mod conv;

use crate::error::{Error, Result};

/// Monotone multiply-accumulate counter, one per evaluation context.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopCounter {
    total: u64,
}

impl FlopCounter {
    pub fn new() -> Self {
        FlopCounter::default()
    }

    pub fn add(&mut self, macs: u64) {
        self.total += macs;
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Row-major n-dimensional array. `requires_grad` marks tensors whose
/// gradients a trainer intends to consume; the engine itself computes
/// gradients for every node regardless.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.is_empty() || shape.iter().any(|d| *d == 0) {
            return Err(Error::shape(format!("empty tensor shape {shape:?}")));
        }
        if data.len() != numel {
            return Err(Error::shape(format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                numel
            )));
        }
        let t = Tensor {
            shape,
            data,
            requires_grad: false,
        };
        t.debug_check_finite("from_vec");
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; numel])
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rank-2 dimensions, or a shape error.
    pub fn as_mat(&self) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::shape(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    #[inline]
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[r * self.shape[1] + c]
    }

    #[inline]
    pub fn set2(&mut self, r: usize, c: usize, v: f64) {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[r * self.shape[1] + c] = v;
    }

    /// Debug-mode guard for the all-finite invariant.
    pub fn debug_check_finite(&self, op: &str) {
        if cfg!(debug_assertions) {
            if let Some(v) = self.data.iter().find(|v| !v.is_finite()) {
                panic!("non-finite value {v} after {op} on shape {:?}", self.shape);
            }
        }
    }
}

/// `a[m x k] * b[k x n]`, adding `m*n*k` MACs.
pub fn matmul(a: &Tensor, b: &Tensor, flops: &mut FlopCounter) -> Result<Tensor> {
    let (m, k) = a.as_mat()?;
    let (k2, n) = b.as_mat()?;
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul inner dims {k} vs {k2} (shapes {:?} x {:?})",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    flops.add((m * n * k) as u64);
    let t = Tensor::from_vec(vec![m, n], out)?;
    t.debug_check_finite("matmul");
    Ok(t)
}

/// `a[m x k] * b[n x k]^T -> [m x n]`, adding `m*n*k` MACs.
pub fn matmul_nt(a: &Tensor, b: &Tensor, flops: &mut FlopCounter) -> Result<Tensor> {
    let (m, k) = a.as_mat()?;
    let (n, k2) = b.as_mat()?;
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul_nt inner dims {k} vs {k2} (shapes {:?} x {:?})",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
    flops.add((m * n * k) as u64);
    let t = Tensor::from_vec(vec![m, n], out)?;
    t.debug_check_finite("matmul_nt");
    Ok(t)
}

/// `a^T` for matrices.
pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.as_mat()?;
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data[i * n + j];
        }
    }
    Tensor::from_vec(vec![n, m], out)
}

/// Max-subtracted row softmax; rows sum to 1 within 1e-12. No MACs.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (r, c) = x.as_mat()?;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &x.data[i * c..(i + 1) * c];
        let max = row.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        let orow = &mut out[i * c..(i + 1) * c];
        let mut sum = 0.0;
        for (o, v) in orow.iter_mut().zip(row) {
            *o = (v - max).exp();
            sum += *o;
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
    let t = Tensor::from_vec(vec![r, c], out)?;
    t.debug_check_finite("softmax_rows");
    Ok(t)
}

/// Elementwise sum; shapes must match. No MACs.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape != b.shape {
        return Err(Error::shape(format!(
            "add shape mismatch {:?} vs {:?}",
            a.shape, b.shape
        )));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    let t = Tensor::from_vec(a.shape.clone(), data)?;
    t.debug_check_finite("add");
    Ok(t)
}

/// Scalar multiply; one MAC per element.
pub fn scale(x: &Tensor, s: f64, flops: &mut FlopCounter) -> Tensor {
    flops.add(x.numel() as u64);
    let t = Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|v| v * s).collect(),
        requires_grad: false,
    };
    t.debug_check_finite("scale");
    t
}

/// Column means over rows: `[r x c] -> [1 x c]`. Sums are free; the final
/// division is not counted.
pub fn mean_rows(x: &Tensor) -> Result<Tensor> {
    let (r, c) = x.as_mat()?;
    let mut out = vec![0.0; c];
    for i in 0..r {
        for j in 0..c {
            out[j] += x.data[i * c + j];
        }
    }
    for o in out.iter_mut() {
        *o /= r as f64;
    }
    Tensor::from_vec(vec![1, c], out)
}
