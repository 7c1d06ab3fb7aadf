//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] is an append-only record of operations. Every operation
//! computes its value eagerly, checks it is finite, and pushes a node that
//! remembers its inputs. [`Tape::backward`] walks the nodes once in reverse
//! and returns a [`Gradients`] map holding `∂loss/∂node` for every node the
//! loss depends on.
//!
//! Named probes capture intermediate activations: after the backward pass both
//! the probed value and its gradient are available by name. A probe may also
//! carry an [`Intervention`] (an additive offset or a per-column multiplier)
//! that is applied before downstream operations see the value; this is how
//! finite-difference checks and neuron zeroing are injected without touching
//! model code.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::tensor::{axis_split, matmul_into, matmul_nt_into, matmul_tn_into, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MulConstRow(Var, Vec<f64>),
    Relu(Var),
    Exp(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    /// Saved: reciprocal RMS per row.
    RmsNorm(Var, Vec<f64>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Gather(Var, Vec<usize>),
    Pick(Var, Vec<(usize, usize)>),
    Sum(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add_const",
            Op::MulConstRow(..) => "mul_const_row",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::RmsNorm(..) => "rms_norm",
            Op::SliceCols(..) => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::Gather(..) => "gather",
            Op::Pick(..) => "pick",
            Op::Sum(..) => "sum",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Modification applied to a probed activation before it is used downstream.
#[derive(Debug, Clone, PartialEq)]
pub enum Intervention {
    /// Add a constant tensor of the activation's shape.
    Offset(Tensor),
    /// Multiply every row element-wise by a constant vector (length = columns).
    ScaleColumns(Vec<f64>),
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    probes: BTreeMap<String, Var>,
    interventions: HashMap<String, Intervention>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name()));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A differentiable input (parameter or activation source).
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Constant)
    }

    // ---- probes -------------------------------------------------------

    /// Register an intervention for the probe called `name`. It stays active
    /// across passes until removed.
    pub fn set_intervention(&mut self, name: impl Into<String>, iv: Intervention) {
        self.interventions.insert(name.into(), iv);
    }

    pub fn clear_interventions(&mut self) {
        self.interventions.clear();
    }

    /// Start a new forward pass on this record: forget previous probe names.
    pub fn begin_pass(&mut self) {
        self.probes.clear();
    }

    /// Capture `x` under `name`. Returns the node downstream code should use,
    /// which differs from `x` only when an intervention is registered.
    pub fn probe(&mut self, name: &str, x: Var) -> Result<Var> {
        if self.probes.contains_key(name) {
            return Err(Error::contract(format!("duplicate probe name `{name}`")));
        }
        let out = match self.interventions.get(name).cloned() {
            Some(Intervention::Offset(t)) => self.add_const(x, &t)?,
            Some(Intervention::ScaleColumns(s)) => self.mul_const_row(x, &s)?,
            None => x,
        };
        self.probes.insert(name.to_string(), out);
        Ok(out)
    }

    pub fn probe_var(&self, name: &str) -> Option<Var> {
        self.probes.get(name).copied()
    }

    pub fn probe_value(&self, name: &str) -> Option<&Tensor> {
        self.probe_var(name).map(|v| self.value(v))
    }

    pub fn probe_names(&self) -> impl Iterator<Item = &str> {
        self.probes.keys().map(String::as_str)
    }

    // ---- operations ---------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        self.push(v, Op::MatMulNt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push(v, Op::Mul(a, b))
    }

    /// `a[.., j] + b[j]`
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = row_broadcast(self.value(a), self.value(b), |x, y| x + y)?;
        self.push(v, Op::AddRow(a, b))
    }

    /// `a[.., j] * b[j]`
    pub fn mul_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = row_broadcast(self.value(a), self.value(b), |x, y| x * y)?;
        self.push(v, Op::MulRow(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Result<Var> {
        let v = self.value(a).zip_map(c, |x, y| x + y)?;
        self.push(v, Op::AddConst(a))
    }

    pub fn mul_const_row(&mut self, a: Var, c: &[f64]) -> Result<Var> {
        let v = row_broadcast(self.value(a), &Tensor::vector(c.to_vec()), |x, y| x * y)?;
        self.push(v, Op::MulConstRow(a, c.to_vec()))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = self.value(a).softmax(axis)?;
        self.push(v, Op::Softmax(a, axis))
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = self.value(a).log_softmax(axis)?;
        self.push(v, Op::LogSoftmax(a, axis))
    }

    /// Row-wise `x / sqrt(mean(x²) + eps)` over the last axis (no gain).
    pub fn rms_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let x = self.value(a);
        let n = x.cols();
        let rows = x.len() / n.max(1);
        let mut inv = Vec::with_capacity(rows);
        let mut out = x.data().to_vec();
        for r in 0..rows {
            let row = &mut out[r * n..(r + 1) * n];
            let ms = row.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let s = 1.0 / (ms + eps).sqrt();
            row.iter_mut().for_each(|v| *v *= s);
            inv.push(s);
        }
        let v = Tensor::new(x.shape().to_vec(), out)?;
        self.push(v, Op::RmsNorm(a, inv))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.dims2()?;
        if start + width > c {
            return Err(Error::shape(format!(
                "slice {start}..{} of {c} columns",
                start + width
            )));
        }
        let mut out = Vec::with_capacity(r * width);
        for i in 0..r {
            out.extend_from_slice(&x.row(i)[start..start + width]);
        }
        let v = Tensor::matrix(r, width, out)?;
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat of nothing"))?;
        let rows = self.value(*first).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(Error::shape("concat_cols row mismatch"));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let v = Tensor::matrix(rows, total, out)?;
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Rows of `table` at `ids` (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let v = self.value(table).select_rows(ids)?;
        self.push(v, Op::Gather(table, ids.to_vec()))
    }

    /// Vector of `a[r, c]` for each `(r, c)`.
    pub fn pick(&mut self, a: Var, at: &[(usize, usize)]) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.dims2()?;
        if let Some(bad) = at.iter().find(|(i, j)| *i >= r || *j >= c) {
            return Err(Error::shape(format!("pick {bad:?} out of {r}x{c}")));
        }
        let v = Tensor::vector(at.iter().map(|&(i, j)| x.get2(i, j)).collect());
        self.push(v, Op::Pick(a, at.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    // ---- backward -----------------------------------------------------

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward from non-scalar node of shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).dims2()?;
                let n = val(*b).dims2()?.1;
                let mut ga = vec![0.0; m * k];
                matmul_nt_into(g.data(), val(*b).data(), &mut ga, m, n, k);
                let mut gb = vec![0.0; k * n];
                matmul_tn_into(val(*a).data(), g.data(), &mut gb, m, k, n);
                accumulate(grads, *a, Tensor::matrix(m, k, ga)?)?;
                accumulate(grads, *b, Tensor::matrix(k, n, gb)?)?;
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = val(*a).dims2()?;
                let n = val(*b).dims2()?.0;
                let mut ga = vec![0.0; m * k];
                matmul_into(g.data(), val(*b).data(), &mut ga, m, n, k);
                let mut gb = vec![0.0; n * k];
                matmul_tn_into(g.data(), val(*a).data(), &mut gb, m, n, k);
                accumulate(grads, *a, Tensor::matrix(m, k, ga)?)?;
                accumulate(grads, *b, Tensor::matrix(n, k, gb)?)?;
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y)?)?;
                accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y)?)?;
            }
            Op::AddRow(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, column_sums(g))?;
            }
            Op::MulRow(a, b) => {
                accumulate(grads, *a, row_broadcast(g, val(*b), |x, y| x * y)?)?;
                let prod = g.zip_map(val(*a), |x, y| x * y)?;
                accumulate(grads, *b, column_sums(&prod))?;
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.scale(*c))?,
            Op::AddConst(a) => accumulate(grads, *a, g.clone())?,
            Op::MulConstRow(a, c) => {
                let c = Tensor::vector(c.clone());
                accumulate(grads, *a, row_broadcast(g, &c, |x, y| x * y)?)?;
            }
            Op::Relu(a) => {
                let ga = g.zip_map(val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                accumulate(grads, *a, ga)?;
            }
            Op::Exp(a) => accumulate(grads, *a, g.zip_map(&node.value, |x, y| x * y)?)?,
            Op::Softmax(a, axis) => {
                let y = &node.value;
                let (outer, n, inner) = axis_split(y.shape(), *axis)?;
                let mut ga = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let dotp: f64 = (0..n).map(|j| g.data()[idx(j)] * y.data()[idx(j)]).sum();
                        for j in 0..n {
                            ga[idx(j)] = y.data()[idx(j)] * (g.data()[idx(j)] - dotp);
                        }
                    }
                }
                accumulate(grads, *a, Tensor::new(y.shape().to_vec(), ga)?)?;
            }
            Op::LogSoftmax(a, axis) => {
                let y = &node.value;
                let (outer, n, inner) = axis_split(y.shape(), *axis)?;
                let mut ga = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let gsum: f64 = (0..n).map(|j| g.data()[idx(j)]).sum();
                        for j in 0..n {
                            ga[idx(j)] = g.data()[idx(j)] - y.data()[idx(j)].exp() * gsum;
                        }
                    }
                }
                accumulate(grads, *a, Tensor::new(y.shape().to_vec(), ga)?)?;
            }
            Op::RmsNorm(a, inv) => {
                let x = val(*a);
                let n = x.cols();
                let mut ga = vec![0.0; x.len()];
                for (r, &s) in inv.iter().enumerate() {
                    let xr = &x.data()[r * n..(r + 1) * n];
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let gx: f64 = xr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    let k = s * s * s * gx / n as f64;
                    for j in 0..n {
                        ga[r * n + j] = s * gr[j] - k * xr[j];
                    }
                }
                accumulate(grads, *a, Tensor::new(x.shape().to_vec(), ga)?)?;
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).dims2()?;
                let w = g.cols();
                let mut ga = Tensor::zeros(&[r, c]);
                for i in 0..r {
                    ga.data_mut()[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                }
                accumulate(grads, *a, ga)?;
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut gp = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        gp.extend_from_slice(&g.row(i)[offset..offset + w]);
                    }
                    accumulate(grads, p, Tensor::matrix(rows, w, gp)?)?;
                    offset += w;
                }
            }
            Op::Gather(table, ids) => {
                let (r, c) = val(*table).dims2()?;
                let mut gt = Tensor::zeros(&[r, c]);
                for (i, &id) in ids.iter().enumerate() {
                    for (dst, src) in gt.data_mut()[id * c..(id + 1) * c].iter_mut().zip(g.row(i)) {
                        *dst += src;
                    }
                }
                accumulate(grads, *table, gt)?;
            }
            Op::Pick(a, at) => {
                let (r, c) = val(*a).dims2()?;
                let mut ga = Tensor::zeros(&[r, c]);
                for (k, &(i, j)) in at.iter().enumerate() {
                    ga.data_mut()[i * c + j] += g.data()[k];
                }
                accumulate(grads, *a, ga)?;
            }
            Op::Sum(a) => {
                let gv = g.data()[0];
                accumulate(grads, *a, Tensor::filled(val(*a).shape(), gv))?;
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn row_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let n = a.cols();
    if b.rank() != 1 || b.len() != n {
        return Err(Error::shape(format!(
            "row broadcast of {:?} against {:?}",
            b.shape(),
            a.shape()
        )));
    }
    let mut out = a.data().to_vec();
    if n > 0 {
        for row in out.chunks_mut(n) {
            for (x, &y) in row.iter_mut().zip(b.data()) {
                *x = f(*x, y);
            }
        }
    }
    Tensor::new(a.shape().to_vec(), out)
}

fn column_sums(g: &Tensor) -> Tensor {
    let n = g.cols();
    let mut out = vec![0.0; n];
    if n > 0 {
        for row in g.data().chunks(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
    }
    Tensor::vector(out)
}

/// `∂loss/∂node` for every node reached by a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the loss does not depend on `v`.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of its shape for a dead branch.
    pub fn get_or_zeros(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }

    pub fn probe(&self, tape: &Tape, name: &str) -> Option<Tensor> {
        tape.probe_var(name).map(|v| self.get_or_zeros(tape, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0)).unwrap();
        let y = t.leaf(Tensor::scalar(-2.0)).unwrap();
        let z = t.mul(x, y).unwrap();
        let g = t.backward(z).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[-2.0]);
        assert_eq!(g.get(y).unwrap().data(), &[3.0]);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_target() {
        let mut t = Tape::new();
        let z = t
            .leaf(Tensor::from_rows(&[vec![0.3, -1.2, 2.0, 0.0]]).unwrap())
            .unwrap();
        let lp = t.log_softmax(z, 1).unwrap();
        let picked = t.pick(lp, &[(0, 2)]).unwrap();
        let s = t.sum(picked).unwrap();
        let loss = t.scale(s, -1.0).unwrap();
        let g = t.backward(loss).unwrap();
        let sm = t.value(z).softmax(1).unwrap();
        for j in 0..4 {
            let target = if j == 2 { 1.0 } else { 0.0 };
            let want = sm.data()[j] - target;
            assert!((g.get(z).unwrap().data()[j] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn duplicate_probe_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(1.0)).unwrap();
        t.probe("h", x).unwrap();
        assert!(t.probe("h", x).is_err());
        t.begin_pass();
        assert!(t.probe("h", x).is_ok());
    }

    #[test]
    fn dead_probe_has_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let dead = t.scale(x, 3.0).unwrap();
        t.probe("dead", dead).unwrap();
        let live = t.sum(x).unwrap();
        let g = t.backward(live).unwrap();
        assert_eq!(g.probe(&t, "dead").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn probe_passes_value_through() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, -2.0])).unwrap();
        let h = t.probe("h", x).unwrap();
        let y = t.relu(h).unwrap();
        assert_eq!(t.probe_value("h").unwrap(), t.value(x));
        assert_eq!(t.value(y).data(), &[1.0, 0.0]);
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(1000.0)).unwrap();
        assert!(matches!(t.exp(x), Err(Error::NonFinite("exp"))));
    }

    #[test]
    fn scale_columns_intervention_zeroes() {
        let mut t = Tape::new();
        t.set_intervention("h", Intervention::ScaleColumns(vec![1.0, 0.0]));
        let x = t.leaf(Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap()).unwrap();
        let h = t.probe("h", x).unwrap();
        assert_eq!(t.value(h).data(), &[3.0, 0.0]);
    }
}
