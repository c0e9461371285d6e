//! Reverse-mode differentiation over a linear tape.
//!
//! A [`Tape`] records every primitive applied during a forward pass. Calling
//! [`Tape::backward`] on a scalar replays the records in reverse and returns a
//! [`Gradients`] value holding adjoints for every reachable parameter and
//! differentiable input. Parameters live in a [`ParamStore`] that the tape
//! borrows read-only, so several tapes over the same store can run at once
//! and their gradients be summed afterwards.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A named trainable tensor with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }
}

/// Ordered collection of parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique within a store.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Total number of scalar elements across all parameters.
    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        zero_grads(self.params.iter_mut());
    }
}

/// Resets every gradient to zero.
pub fn zero_grads<'a>(params: impl IntoIterator<Item = &'a mut Parameter>) {
    for p in params {
        p.grad.fill(0.0);
    }
}

/// Window reduction used by [`Tape::subsample`].
#[derive(Clone, Debug)]
pub enum Reducer {
    /// Fixed three-tap kernel.
    Kernel([f64; 3]),
    /// Trainable three-tap kernel held in a recorded value.
    Learned(Var),
    /// Window maximum, lowest index on ties.
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatVec {
        w: Var,
        x: Var,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Slice {
        src: Var,
        start: usize,
    },
    Sum(Var),
    Row {
        table: Var,
        index: usize,
    },
    Subsample {
        x: Var,
        taps: SavedTaps,
    },
    Nll {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
enum SavedTaps {
    Kernel([f64; 3]),
    Learned(Var),
    Argmax(Vec<usize>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Option<Tensor>,
    requires_grad: bool,
}

/// Records a forward computation for later differentiation.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    /// Forgets all recorded operations, keeping allocations.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.param_vars.iter_mut().for_each(|v| *v = None);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(id), _) => self.params.value(*id),
            (_, Some(t)) => t,
            (_, None) => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A value that gradients do not flow into.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// A differentiable input; its adjoint is reported by [`Gradients::wrt`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// The recorded handle for a parameter. Repeated calls return the same handle.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Matrix `[m x n]` times vector `[n]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let wt = self.value(w);
        let (m, n) = wt.dims2()?;
        let xt = self.value(x);
        if xt.rank() != 1 || xt.len() != n {
            return Err(Error::shape(format!(
                "matvec of [{m} x {n}] with vector of shape {:?}",
                xt.shape()
            )));
        }
        let (wd, xd) = (wt.data(), xt.data());
        let out: Vec<f64> = wd
            .chunks_exact(n)
            .map(|row| row.iter().zip(xd).fold(0.0, |acc, (a, b)| acc + a * b))
            .collect();
        let rg = self.needs(w) || self.needs(x);
        Ok(self.push(Op::MatVec { w, x }, Tensor::vector(out), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(format!("{what} of {sa:?} and {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), value, rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|v| v * factor);
        let rg = self.needs(a);
        self.push(Op::Scale(a, factor), value, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.needs(a);
        self.push(Op::Sigmoid(a), value, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.needs(a);
        self.push(Op::Tanh(a), value, rg)
    }

    /// Concatenates rank-1 values end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat of nothing"));
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 1 {
                return Err(Error::shape(format!("concat of shape {:?}", t.shape())));
            }
            data.extend_from_slice(t.data());
        }
        let rg = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::vector(data), rg))
    }

    /// Elements `[start, start + len)` of a rank-1 value.
    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(src);
        if t.rank() != 1 || len == 0 || start + len > t.len() {
            return Err(Error::shape(format!(
                "slice [{start}, {}) of shape {:?}",
                start + len,
                t.shape()
            )));
        }
        if start == 0 && len == t.len() {
            return Ok(src);
        }
        let data = t.data()[start..start + len].to_vec();
        let rg = self.needs(src);
        Ok(self.push(Op::Slice { src, start }, Tensor::vector(data), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.needs(a);
        self.push(Op::Sum(a), Tensor::scalar(s), rg)
    }

    /// Row `index` of a matrix, as a vector.
    pub fn row(&mut self, table: Var, index: usize) -> Result<Var> {
        let t = self.value(table);
        let (rows, _) = t.dims2()?;
        if index >= rows {
            return Err(Error::Vocabulary {
                id: index,
                size: rows,
            });
        }
        let data = t.row(index).to_vec();
        let rg = self.needs(table);
        Ok(self.push(Op::Row { table, index }, Tensor::vector(data), rg))
    }

    /// Stride-2, width-3 window reduction with edge-replicate padding.
    ///
    /// Output element `i` reduces `x[2i-1], x[2i], x[2i+1]`, indices clamped
    /// into range. The input length must be even.
    pub fn subsample(&mut self, x: Var, reducer: &Reducer) -> Result<Var> {
        let xt = self.value(x);
        let n = xt.len();
        if xt.rank() != 1 || n < 2 || !n.is_multiple_of(2) {
            return Err(Error::shape(format!(
                "subsample needs an even-length vector, got shape {:?}",
                xt.shape()
            )));
        }
        let xd = xt.data();
        let window = |i: usize| window_indices(i, n);
        let weighted = |k: &[f64]| -> Vec<f64> {
            (0..n / 2)
                .map(|i| {
                    let w = window(i);
                    k[0] * xd[w[0]] + k[1] * xd[w[1]] + k[2] * xd[w[2]]
                })
                .collect()
        };
        let (out, taps, rg) = match reducer {
            Reducer::Kernel(k) => (weighted(k), SavedTaps::Kernel(*k), self.needs(x)),
            Reducer::Learned(kv) => {
                let kt = self.value(*kv);
                if kt.len() != 3 {
                    return Err(Error::shape("learned kernel must have three taps"));
                }
                (
                    weighted(kt.data()),
                    SavedTaps::Learned(*kv),
                    self.needs(x) || self.needs(*kv),
                )
            }
            Reducer::Max => {
                let mut arg = Vec::with_capacity(n / 2);
                let out = (0..n / 2)
                    .map(|i| {
                        let w = window(i);
                        let mut best = w[0];
                        for &j in &w[1..] {
                            if xd[j] > xd[best] {
                                best = j;
                            }
                        }
                        arg.push(best);
                        xd[best]
                    })
                    .collect();
                (out, SavedTaps::Argmax(arg), self.needs(x))
            }
        };
        Ok(self.push(Op::Subsample { x, taps }, Tensor::vector(out), rg))
    }

    /// Negative log-likelihood of `target` under `softmax(logits)`.
    ///
    /// The log-sum-exp is taken after subtracting the maximum logit.
    pub fn nll(&mut self, logits: Var, target: usize) -> Result<Var> {
        let lt = self.value(logits);
        if lt.rank() != 1 {
            return Err(Error::shape("logits must be a vector"));
        }
        if target >= lt.len() {
            return Err(Error::Vocabulary {
                id: target,
                size: lt.len(),
            });
        }
        let log_probs = log_softmax(lt.data());
        let loss = -log_probs[target];
        let probs = log_probs.iter().map(|lp| lp.exp()).collect();
        let rg = self.needs(logits);
        Ok(self.push(
            Op::Nll {
                logits,
                target,
                probs,
            },
            Tensor::scalar(loss),
            rg,
        ))
    }

    /// Replays the tape backwards from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        let mut grads = Gradients::empty(self.params.len());

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads.inputs.push((Var(idx), g));
                }
                Op::Param(id) => {
                    let shape = self.params.value(*id).shape().to_vec();
                    grads.params[id.0] = Some(Tensor::new(shape, g)?);
                }
                Op::MatVec { w, x } => {
                    let wt = self.value(*w);
                    let (m, n) = wt.dims2()?;
                    if self.needs(*w) {
                        let xd = self.value(*x).data();
                        let dw = slot(&mut adj, *w, m * n);
                        for (row, gi) in dw.chunks_exact_mut(n).zip(&g) {
                            for (d, xj) in row.iter_mut().zip(xd) {
                                *d += gi * xj;
                            }
                        }
                    }
                    if self.needs(*x) {
                        let dx = slot(&mut adj, *x, n);
                        for (row, gi) in wt.data().chunks_exact(n).zip(&g) {
                            for (d, wij) in dx.iter_mut().zip(row) {
                                *d += wij * gi;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.needs(v) {
                            axpy(slot(&mut adj, v, g.len()), 1.0, &g);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let bd = self.value(*b).data();
                        let da = slot(&mut adj, *a, g.len());
                        for ((d, gi), bi) in da.iter_mut().zip(&g).zip(bd) {
                            *d += gi * bi;
                        }
                    }
                    if self.needs(*b) {
                        let ad = self.value(*a).data();
                        let db = slot(&mut adj, *b, g.len());
                        for ((d, gi), ai) in db.iter_mut().zip(&g).zip(ad) {
                            *d += gi * ai;
                        }
                    }
                }
                Op::Scale(a, f) => {
                    axpy(slot(&mut adj, *a, g.len()), *f, &g);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("sigmoid value").data();
                    let da = slot(&mut adj, *a, g.len());
                    for ((d, gi), yi) in da.iter_mut().zip(&g).zip(y) {
                        *d += gi * yi * (1.0 - yi);
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().expect("tanh value").data();
                    let da = slot(&mut adj, *a, g.len());
                    for ((d, gi), yi) in da.iter_mut().zip(&g).zip(y) {
                        *d += gi * (1.0 - yi * yi);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        if self.needs(p) {
                            axpy(slot(&mut adj, p, len), 1.0, &g[offset..offset + len]);
                        }
                        offset += len;
                    }
                }
                Op::Slice { src, start } => {
                    let len = self.value(*src).len();
                    let ds = slot(&mut adj, *src, len);
                    axpy(&mut ds[*start..*start + g.len()], 1.0, &g);
                }
                Op::Sum(a) => {
                    let len = self.value(*a).len();
                    let da = slot(&mut adj, *a, len);
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
                Op::Row { table, index } => {
                    let (rows, cols) = self.value(*table).dims2()?;
                    let dt = slot(&mut adj, *table, rows * cols);
                    axpy(&mut dt[index * cols..(index + 1) * cols], 1.0, &g);
                }
                Op::Subsample { x, taps } => {
                    let n = self.value(*x).len();
                    match taps {
                        SavedTaps::Argmax(arg) => {
                            let dx = slot(&mut adj, *x, n);
                            for (gi, &j) in g.iter().zip(arg) {
                                dx[j] += gi;
                            }
                        }
                        SavedTaps::Kernel(k) => {
                            let dx = slot(&mut adj, *x, n);
                            scatter_kernel(dx, k, &g, n);
                        }
                        SavedTaps::Learned(kv) => {
                            if self.needs(*x) {
                                let k = self.value(*kv).data();
                                let k = [k[0], k[1], k[2]];
                                let dx = slot(&mut adj, *x, n);
                                scatter_kernel(dx, &k, &g, n);
                            }
                            if self.needs(*kv) {
                                let xd = self.value(*x).data();
                                let dk = slot(&mut adj, *kv, 3);
                                for (i, gi) in g.iter().enumerate() {
                                    let w = window_indices(i, n);
                                    for t in 0..3 {
                                        dk[t] += gi * xd[w[t]];
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Nll {
                    logits,
                    target,
                    probs,
                } => {
                    let dl = slot(&mut adj, *logits, probs.len());
                    for (d, p) in dl.iter_mut().zip(probs) {
                        *d += g[0] * p;
                    }
                    dl[*target] -= g[0];
                }
            }
        }
        grads.inputs.sort_by_key(|(v, _)| v.0);
        Ok(grads)
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    adj[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

fn scatter_kernel(dx: &mut [f64], k: &[f64; 3], g: &[f64], n: usize) {
    for (i, gi) in g.iter().enumerate() {
        let w = window_indices(i, n);
        for t in 0..3 {
            dx[w[t]] += gi * k[t];
        }
    }
}

/// Indices of the window centred on `2i`, clamped to `[0, n)`.
pub(crate) fn window_indices(i: usize, n: usize) -> [usize; 3] {
    let c = 2 * i;
    [c.saturating_sub(1), c, (c + 1).min(n - 1)]
}

/// Logistic function `1 / (1 + e^-x)`.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + sum.ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    params: Vec<Option<Tensor>>,
    inputs: Vec<(Var, Vec<f64>)>,
}

impl Gradients {
    fn empty(num_params: usize) -> Self {
        Gradients {
            params: vec![None; num_params],
            inputs: Vec::new(),
        }
    }

    /// Gradient for a parameter, `None` when the loss does not reach it.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params[id.0].as_ref()
    }

    /// Gradient for a differentiable input created with [`Tape::input`].
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.inputs
            .binary_search_by_key(&v.0, |(w, _)| w.0)
            .ok()
            .map(|i| self.inputs[i].1.as_slice())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.params.iter_mut().flatten() {
            t.scale(factor);
        }
        for (_, g) in &mut self.inputs {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Adds another set of parameter gradients into this one.
    pub fn merge(&mut self, other: &Gradients) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::shape("gradients from different parameter stores"));
        }
        for (mine, theirs) in self.params.iter_mut().zip(&other.params) {
            match (mine.as_mut(), theirs) {
                (Some(m), Some(t)) => m.add_assign(t)?,
                (None, Some(t)) => *mine = Some(t.clone()),
                _ => {}
            }
        }
        Ok(())
    }

    /// Adds the parameter gradients into `store`'s `grad` fields.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(Error::shape("gradients from a different parameter store"));
        }
        for (p, g) in store.iter_mut().zip(&self.params) {
            if let Some(g) = g {
                p.grad.add_assign(g)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: Vec<f64>) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(values));
        (store, id)
    }

    #[test]
    fn dot_product_gradient() {
        let (store, w) = store_with(vec![1.0, 2.0]);
        let mut tape = Tape::new(&store);
        let wv = tape.param(w);
        let x = tape.constant(Tensor::vector(vec![3.0, 4.0]));
        let prod = tape.mul(wv, x).unwrap();
        let loss = tape.sum(prod);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.param(w).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn sum_gives_ones_and_zero_scale_gives_zeros() {
        let (store, w) = store_with(vec![0.3, -7.0, 2.5]);
        let mut tape = Tape::new(&store);
        let wv = tape.param(w);
        let s = tape.sum(wv);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.param(w).unwrap().data(), &[1.0, 1.0, 1.0]);

        let z = tape.scale(s, 0.0);
        let grads = tape.backward(z).unwrap();
        assert_eq!(grads.param(w).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let (store, w) = store_with(vec![1.0, 2.0]);
        let mut tape = Tape::new(&store);
        let wv = tape.param(w);
        assert!(matches!(tape.backward(wv), Err(Error::Contract(_))));
    }

    #[test]
    fn unreachable_params_are_untouched() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::vector(vec![1.0]));
        let b = store.add("b", Tensor::vector(vec![2.0]));
        store.get_mut(b).grad = Tensor::vector(vec![9.0]);
        let grads = {
            let mut tape = Tape::new(&store);
            let av = tape.param(a);
            let s = tape.sum(av);
            tape.backward(s).unwrap()
        };
        assert!(grads.param(b).is_none());
        grads.accumulate_into(&mut store).unwrap();
        assert_eq!(store.get(a).grad.data(), &[1.0]);
        assert_eq!(store.get(b).grad.data(), &[9.0]);
    }

    #[test]
    fn zero_grads_cases() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::vector(vec![0.0, 0.0]));
        store.iter_mut().next().unwrap().grad = Tensor::vector(vec![1.0, 2.0]);
        store.zero_grads();
        assert_eq!(store.iter().next().unwrap().grad.data(), &[0.0, 0.0]);
        store.zero_grads();
        assert_eq!(store.iter().next().unwrap().grad.data(), &[0.0, 0.0]);

        let mut empty: Vec<Parameter> = Vec::new();
        zero_grads(empty.iter_mut());
    }

    #[test]
    fn param_handle_is_shared() {
        let (store, w) = store_with(vec![2.0]);
        let mut tape = Tape::new(&store);
        let a = tape.param(w);
        let b = tape.param(w);
        assert_eq!(a, b);
        // d(w*w)/dw = 2w
        let sq = tape.mul(a, b).unwrap();
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.param(w).unwrap().data(), &[4.0]);
    }

    #[test]
    fn subsample_examples() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]));
        let third = 1.0 / 3.0;
        let avg = tape.subsample(x, &Reducer::Kernel([third; 3])).unwrap();
        let v = tape.value(avg).data().to_vec();
        assert!((v[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((v[1] - 3.0).abs() < 1e-15);
        let skip = tape
            .subsample(x, &Reducer::Kernel([0.0, 1.0, 0.0]))
            .unwrap();
        assert_eq!(tape.value(skip).data(), &[1.0, 3.0]);
        let max = tape.subsample(x, &Reducer::Max).unwrap();
        assert_eq!(tape.value(max).data(), &[2.0, 4.0]);

        let odd = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(
            tape.subsample(odd, &Reducer::Max),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn max_subsample_routes_to_first_maximum() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::vector(vec![5.0, 5.0, 1.0, 1.0]));
        let m = tape.subsample(x, &Reducer::Max).unwrap();
        let s = tape.sum(m);
        let grads = tape.backward(s).unwrap();
        // window 0 = {x0, x0, x1}; window 1 = {x1, x2, x3}: x1 wins both
        assert_eq!(grads.wrt(x).unwrap(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn nll_matches_hand_softmax() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let l = tape.constant(Tensor::vector(vec![0.0, 3f64.ln()]));
        let loss = tape.nll(l, 1).unwrap();
        assert!((tape.value(loss).data()[0] - (4.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.constant(Tensor::vector(vec![1.0]));
        assert!(tape.add(a, b).is_err());
        assert!(tape.mul(a, b).is_err());
        let w = tape.constant(Tensor::identity(3));
        assert!(tape.matvec(w, a).is_err());
        assert!(tape.slice(a, 1, 2).is_err());
    }
}
