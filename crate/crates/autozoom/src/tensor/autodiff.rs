//! Tape-based reverse-mode differentiation for the ops `reason` uses.
//!
//! A `Tape` records each forward op in topological order; `backward` walks
//! the records in reverse once and then consumes the tape (further ops or
//! a second backward fail with `GraphConsumed`). Forward ops feed the
//! tape's FLOP counter; the backward pass is not counted, since the
//! complexity claims under test are about inference cost.

use crate::error::{Error, Result};
use crate::tensor::{
    add, matmul, matmul_nt, mean_rows, scale, softmax_rows, transpose, FlopCounter, Tensor,
};

/// Index of a node on its tape.
pub type Var = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    MatmulNT(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    SoftmaxRows(Var),
    MeanRows(Var),
    Sum(Var),
    CrossEntropy { logits: Var, target: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    pub flops: FlopCounter,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn ensure_live(&self) -> Result<()> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.ensure_live()?;
        Ok(self.push(value, Op::Leaf))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ensure_live()?;
        let out = matmul(&self.nodes[a].value, &self.nodes[b].value, &mut self.flops)?;
        Ok(self.push(out, Op::Matmul(a, b)))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ensure_live()?;
        let out = matmul_nt(&self.nodes[a].value, &self.nodes[b].value, &mut self.flops)?;
        Ok(self.push(out, Op::MatmulNT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ensure_live()?;
        let out = add(&self.nodes[a].value, &self.nodes[b].value)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.ensure_live()?;
        let out = scale(&self.nodes[a].value, s, &mut self.flops);
        Ok(self.push(out, Op::Scale(a, s)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.ensure_live()?;
        let out = softmax_rows(&self.nodes[a].value)?;
        Ok(self.push(out, Op::SoftmaxRows(a)))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        self.ensure_live()?;
        let out = mean_rows(&self.nodes[a].value)?;
        Ok(self.push(out, Op::MeanRows(a)))
    }

    /// Sum of all elements, as a 1x1 tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.ensure_live()?;
        let s: f64 = self.nodes[a].value.data.iter().sum();
        let out = Tensor::from_vec(vec![1, 1], vec![s])?;
        Ok(self.push(out, Op::Sum(a)))
    }

    /// Softmax cross-entropy of a single-row logit tensor against a class
    /// index, as a 1x1 tensor. Computed in log-sum-exp form for
    /// stability.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        self.ensure_live()?;
        let t = &self.nodes[logits].value;
        let (r, c) = t.as_mat()?;
        if r != 1 {
            return Err(Error::shape(format!(
                "cross_entropy expects a single logit row, got {r} rows"
            )));
        }
        if target >= c {
            return Err(Error::invalid(format!(
                "target class {target} out of range for {c} classes"
            )));
        }
        let max = t.data.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        let lse = max + t.data.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let out = Tensor::from_vec(vec![1, 1], vec![lse - t.data[target]])?;
        Ok(self.push(out, Op::CrossEntropy { logits, target }))
    }

    fn accumulate(&mut self, v: Var, g: Tensor) -> Result<()> {
        self.grads[v] = Some(match self.grads[v].take() {
            Some(existing) => add(&existing, &g)?,
            None => g,
        });
        Ok(())
    }

    /// Reverse pass from a scalar root. Consumes the tape.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        self.ensure_live()?;
        self.consumed = true;
        if self.nodes[root].value.shape != [1, 1] {
            return Err(Error::shape(format!(
                "backward root must be 1x1, got {:?}",
                self.nodes[root].value.shape
            )));
        }
        let mut scratch = FlopCounter::new();
        self.grads[root] = Some(Tensor::from_vec(vec![1, 1], vec![1.0])?);
        for i in (0..=root).rev() {
            let Some(g) = self.grads[i].clone() else {
                continue;
            };
            match self.nodes[i].op.clone() {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let da = matmul_nt(&g, &self.nodes[b].value, &mut scratch)?;
                    let db = matmul(
                        &transpose(&self.nodes[a].value)?,
                        &g,
                        &mut scratch,
                    )?;
                    self.accumulate(a, da)?;
                    self.accumulate(b, db)?;
                }
                Op::MatmulNT(a, b) => {
                    let da = matmul(&g, &self.nodes[b].value, &mut scratch)?;
                    let db = matmul(&transpose(&g)?, &self.nodes[a].value, &mut scratch)?;
                    self.accumulate(a, da)?;
                    self.accumulate(b, db)?;
                }
                Op::Add(a, b) => {
                    self.accumulate(a, g.clone())?;
                    self.accumulate(b, g)?;
                }
                Op::Scale(a, s) => {
                    let da = scale(&g, s, &mut scratch);
                    self.accumulate(a, da)?;
                }
                Op::SoftmaxRows(a) => {
                    // dx = y * (dy - rowdot(dy, y))
                    let y = &self.nodes[i].value;
                    let (r, c) = y.as_mat()?;
                    let mut dx = vec![0.0; r * c];
                    for ri in 0..r {
                        let yr = &y.data[ri * c..(ri + 1) * c];
                        let gr = &g.data[ri * c..(ri + 1) * c];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ci in 0..c {
                            dx[ri * c + ci] = yr[ci] * (gr[ci] - dot);
                        }
                    }
                    self.accumulate(a, Tensor::from_vec(vec![r, c], dx)?)?;
                }
                Op::MeanRows(a) => {
                    let (r, c) = self.nodes[a].value.as_mat()?;
                    let mut dx = vec![0.0; r * c];
                    for ri in 0..r {
                        for ci in 0..c {
                            dx[ri * c + ci] = g.data[ci] / r as f64;
                        }
                    }
                    self.accumulate(a, Tensor::from_vec(vec![r, c], dx)?)?;
                }
                Op::Sum(a) => {
                    let shape = self.nodes[a].value.shape.clone();
                    let n = self.nodes[a].value.numel();
                    self.accumulate(a, Tensor::from_vec(shape, vec![g.data[0]; n])?)?;
                }
                Op::CrossEntropy { logits, target } => {
                    let soft = softmax_rows(&self.nodes[logits].value)?;
                    let mut dx = soft.data;
                    dx[target] -= 1.0;
                    for v in dx.iter_mut() {
                        *v *= g.data[0];
                    }
                    let shape = self.nodes[logits].value.shape.clone();
                    self.accumulate(logits, Tensor::from_vec(shape, dx)?)?;
                }
            }
        }
        Ok(())
    }

    /// Gradient of the backward root with respect to node `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v].as_ref()
    }
}

/// Max over coordinates of the relative error between `analytic` and a
/// central finite-difference estimate of `f`'s gradient at `x`:
/// `|a - n| / max(1e-6, |a| + |n|)`. The denominator floor keeps the
/// metric meaningful where the true gradient is tiny: central
/// differences on an O(1) objective carry ~1e-11 of roundoff, so below
/// the floor the comparison is effectively an absolute one.
pub fn finite_diff_check<F>(mut f: F, x: &Tensor, analytic: &Tensor, eps: f64) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if analytic.shape != x.shape {
        return Err(Error::shape(format!(
            "analytic gradient shape {:?} does not match input {:?}",
            analytic.shape, x.shape
        )));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!("finite-difference step {eps} must be > 0")));
    }
    let mut max_rel: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let fp = f(&probe)?;
        probe.data[i] = orig - eps;
        let fm = f(&probe)?;
        probe.data[i] = orig;
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic.data[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
