//! Tape-based reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation in creation order; [`Graph::backward`]
//! walks the tape in reverse and accumulates gradients into every node that
//! depends on a parameter. Parameter values are borrowed, not copied, so
//! building a forward pass over a large network costs only its activations.

use std::borrow::Cow;

use super::Tensor;
use crate::par;
use crate::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `a · bᵀ` for `a: [m,k]`, `b: [n,k]`.
    MatMulNt(Var, Var),
    /// `a: [m,n]` plus a row vector `b: [n]`.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Square(Var),
    Clamp(Var, f64, f64),
    /// Last-axis concatenation of two `[m, _]` tensors.
    Concat(Var, Var),
    Reshape(Var),
    /// `[b, d] → [b·n, d]`, each row repeated `n` times consecutively.
    RepeatRows(Var, usize),
    /// `[n] → [m, n]`.
    BroadcastRows(Var),
    /// Softmax over the last axis of `[m, n]` restricted to `mask`;
    /// fully masked rows give zeros.
    MaskedSoftmax(Var, Vec<bool>),
    /// `out[b] = Σ_j w[b,j] · v[b·n + j]` for `w: [b,n]`, `v: [b·n, d]`.
    WeightedRowSum(Var, Var),
    Sum(Var),
    Mean(Var),
    /// `[m, n] → [m]`.
    SumLast(Var),
}

struct Node<'p> {
    value: Cow<'p, [f64]>,
    shape: Vec<usize>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (1, *n),
        _ => {
            let c = *shape.last().unwrap();
            (numel(shape) / c.max(1), c)
        }
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'p, [f64]>, shape: Vec<usize>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), numel(&shape), "{op:?}");
        self.nodes.push(Node {
            value,
            shape,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op, parents: &[Var]) -> Var {
        let rg = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(Cow::Owned(value), shape, op, rg)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<Var> {
        check_len(data.len(), shape)?;
        Ok(self.push(Cow::Owned(data), shape.to_vec(), Op::Leaf, false))
    }

    /// Trainable leaf borrowing `t`'s storage.
    pub fn param(&mut self, t: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(&t.data), t.shape.clone(), Op::Leaf, true)
    }

    /// Trainable leaf owning its data (used by gradient checks).
    pub fn param_owned(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t.data), t.shape, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor {
            shape: self.shape(v).to_vec(),
            data: self.value(v).to_vec(),
        }
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    // ---- forward ops ----

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::Shape(format!("matmul_nt {sa:?} x {sb:?}ᵀ")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        par::for_rows(&mut out, n, |i, row| {
            let ai = &av[i * k..(i + 1) * k];
            for (j, o) in row.iter_mut().enumerate() {
                *o = dot(ai, &bv[j * k..(j + 1) * k]);
            }
        });
        Ok(self.derived(out, vec![m, n], Op::MatMulNt(a, b), &[a, b]))
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = rows_cols(self.shape(a));
        if numel(self.shape(b)) != n {
            return Err(Error::Shape(format!(
                "add_row {:?} + {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let bv = self.value(b);
        let mut out = self.value(a).to_vec();
        for r in 0..m {
            for (o, x) in out[r * n..(r + 1) * n].iter_mut().zip(bv) {
                *o += x;
            }
        }
        let shape = self.shape(a).to_vec();
        Ok(self.derived(out, shape, Op::AddRow(a, b), &[a, b]))
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{op:?}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.derived(out, shape, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Min(a, b), f64::min)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.derived(out, shape, op, &[a])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a, slope), |x| super::leaky_relu(x, slope))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, pa) = rows_cols(self.shape(a));
        let (mb, pb) = rows_cols(self.shape(b));
        if ma != mb {
            return Err(Error::Shape(format!(
                "concat {:?} ‖ {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(ma * (pa + pb));
        for r in 0..ma {
            out.extend_from_slice(&av[r * pa..(r + 1) * pa]);
            out.extend_from_slice(&bv[r * pb..(r + 1) * pb]);
        }
        Ok(self.derived(out, vec![ma, pa + pb], Op::Concat(a, b), &[a, b]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        check_len(self.value(a).len(), shape)?;
        let out = self.value(a).to_vec();
        Ok(self.derived(out, shape.to_vec(), Op::Reshape(a), &[a]))
    }

    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Var {
        let (m, d) = rows_cols(self.shape(a));
        let av = self.value(a);
        let mut out = Vec::with_capacity(m * n * d);
        for r in 0..m {
            for _ in 0..n {
                out.extend_from_slice(&av[r * d..(r + 1) * d]);
            }
        }
        self.derived(out, vec![m * n, d], Op::RepeatRows(a, n), &[a])
    }

    pub fn broadcast_rows(&mut self, a: Var, m: usize) -> Var {
        let n = self.value(a).len();
        let out = self.value(a).repeat(m);
        self.derived(out, vec![m, n], Op::BroadcastRows(a), &[a])
    }

    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let (m, n) = rows_cols(self.shape(a));
        if mask.len() != m * n {
            return Err(Error::Shape(format!(
                "mask of {} for logits {:?}",
                mask.len(),
                self.shape(a)
            )));
        }
        let out = masked_softmax_rows(self.value(a), mask, n);
        let shape = self.shape(a).to_vec();
        Ok(self.derived(out, shape, Op::MaskedSoftmax(a, mask.to_vec()), &[a]))
    }

    pub fn weighted_row_sum(&mut self, w: Var, v: Var) -> Result<Var> {
        let (b, n) = rows_cols(self.shape(w));
        let (rows, d) = rows_cols(self.shape(v));
        if rows != b * n {
            return Err(Error::Shape(format!(
                "weighted_row_sum {:?} over {:?}",
                self.shape(w),
                self.shape(v)
            )));
        }
        let (wv, vv) = (self.value(w), self.value(v));
        let mut out = vec![0.0; b * d];
        for bi in 0..b {
            let o = &mut out[bi * d..(bi + 1) * d];
            for j in 0..n {
                let wj = wv[bi * n + j];
                let row = &vv[(bi * n + j) * d..(bi * n + j + 1) * d];
                for (x, y) in o.iter_mut().zip(row) {
                    *x += wj * y;
                }
            }
        }
        Ok(self.derived(out, vec![b, d], Op::WeightedRowSum(w, v), &[w, v]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.derived(vec![s], vec![1], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.derived(vec![s], vec![1], Op::Mean(a), &[a])
    }

    pub fn sum_last(&mut self, a: Var) -> Var {
        let (m, n) = rows_cols(self.shape(a));
        let v = self.value(a);
        let out = (0..m).map(|r| v[r * n..(r + 1) * n].iter().sum()).collect();
        self.derived(out, vec![m], Op::SumLast(a), &[a])
    }

    // ---- reverse pass ----

    /// Populates gradients of `loss` (a single-element node) with respect to
    /// every node that depends on a parameter. May be called once per graph.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward from non-scalar {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(idx, &gout, &mut grads);
            grads[idx] = Some(gout);
        }
        self.grads = grads;
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(contrib),
        }
    }

    fn elementwise_back(
        &self,
        grads: &mut [Option<Vec<f64>>],
        a: Var,
        gout: &[f64],
        f: impl Fn(f64, f64, f64) -> f64,
        out: &[f64],
    ) {
        let av = self.value(a);
        let g = gout
            .iter()
            .zip(av)
            .zip(out)
            .map(|((&go, &x), &y)| f(go, x, y))
            .collect();
        self.accumulate(grads, a, g);
    }

    fn propagate(&self, idx: usize, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out: &[f64] = &node.value;
        match node.op.clone() {
            Op::Leaf => {}
            Op::MatMulNt(a, b) => {
                let (sa, sb) = (self.shape(a), self.shape(b));
                let (m, k, n) = (sa[0], sa[1], sb[0]);
                let (av, bv) = (self.value(a), self.value(b));
                if self.nodes[a.0].requires_grad {
                    let mut da = vec![0.0; m * k];
                    par::for_rows(&mut da, k, |i, row| {
                        for j in 0..n {
                            let g = gout[i * n + j];
                            if g != 0.0 {
                                axpy(row, g, &bv[j * k..(j + 1) * k]);
                            }
                        }
                    });
                    self.accumulate(grads, a, da);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = vec![0.0; n * k];
                    par::for_rows(&mut db, k, |j, row| {
                        for i in 0..m {
                            let g = gout[i * n + j];
                            if g != 0.0 {
                                axpy(row, g, &av[i * k..(i + 1) * k]);
                            }
                        }
                    });
                    self.accumulate(grads, b, db);
                }
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, a, gout.to_vec());
                let n = self.value(b).len();
                let mut db = vec![0.0; n];
                for row in gout.chunks(n) {
                    db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                }
                self.accumulate(grads, b, db);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, gout.to_vec());
                self.accumulate(grads, b, gout.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, gout.to_vec());
                self.accumulate(grads, b, gout.iter().map(|g| -g).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                self.accumulate(grads, a, gout.iter().zip(bv).map(|(g, y)| g * y).collect());
                self.accumulate(grads, b, gout.iter().zip(av).map(|(g, x)| g * x).collect());
            }
            Op::Min(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let take_a: Vec<bool> = av.iter().zip(bv).map(|(x, y)| x <= y).collect();
                let ga = gout.iter().zip(&take_a).map(|(&g, &t)| if t { g } else { 0.0 }).collect();
                let gb = gout.iter().zip(&take_a).map(|(&g, &t)| if t { 0.0 } else { g }).collect();
                self.accumulate(grads, a, ga);
                self.accumulate(grads, b, gb);
            }
            Op::Scale(a, c) => self.accumulate(grads, a, gout.iter().map(|g| g * c).collect()),
            Op::AddScalar(a) | Op::Reshape(a) => self.accumulate(grads, a, gout.to_vec()),
            Op::Exp(a) => self.elementwise_back(grads, a, gout, |g, _, y| g * y, out),
            Op::Log(a) => self.elementwise_back(grads, a, gout, |g, x, _| g / x, out),
            Op::Tanh(a) => self.elementwise_back(grads, a, gout, |g, _, y| g * (1.0 - y * y), out),
            Op::Sigmoid(a) => self.elementwise_back(grads, a, gout, |g, _, y| g * y * (1.0 - y), out),
            Op::Relu(a) => {
                self.elementwise_back(grads, a, gout, |g, x, _| if x > 0.0 { g } else { 0.0 }, out)
            }
            Op::LeakyRelu(a, s) => {
                self.elementwise_back(grads, a, gout, |g, x, _| if x >= 0.0 { g } else { s * g }, out)
            }
            Op::Square(a) => self.elementwise_back(grads, a, gout, |g, x, _| 2.0 * x * g, out),
            Op::Clamp(a, lo, hi) => self.elementwise_back(
                grads,
                a,
                gout,
                |g, x, _| if (lo..=hi).contains(&x) { g } else { 0.0 },
                out,
            ),
            Op::Concat(a, b) => {
                let (m, pa) = rows_cols(self.shape(a));
                let (_, pb) = rows_cols(self.shape(b));
                let w = pa + pb;
                let mut ga = Vec::with_capacity(m * pa);
                let mut gb = Vec::with_capacity(m * pb);
                for r in 0..m {
                    ga.extend_from_slice(&gout[r * w..r * w + pa]);
                    gb.extend_from_slice(&gout[r * w + pa..(r + 1) * w]);
                }
                self.accumulate(grads, a, ga);
                self.accumulate(grads, b, gb);
            }
            Op::RepeatRows(a, n) => {
                let (m, d) = rows_cols(self.shape(a));
                let mut ga = vec![0.0; m * d];
                for r in 0..m {
                    for c in 0..n {
                        let src = &gout[(r * n + c) * d..(r * n + c + 1) * d];
                        ga[r * d..(r + 1) * d].iter_mut().zip(src).for_each(|(x, y)| *x += y);
                    }
                }
                self.accumulate(grads, a, ga);
            }
            Op::BroadcastRows(a) => {
                let n = self.value(a).len();
                let mut ga = vec![0.0; n];
                for row in gout.chunks(n) {
                    ga.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                }
                self.accumulate(grads, a, ga);
            }
            Op::MaskedSoftmax(a, mask) => {
                let (_, n) = rows_cols(self.shape(a));
                let mut ga = vec![0.0; out.len()];
                for ((gr, yr), (go, mr)) in ga
                    .chunks_mut(n)
                    .zip(out.chunks(n))
                    .zip(gout.chunks(n).zip(mask.chunks(n)))
                {
                    let inner: f64 = yr.iter().zip(go).map(|(y, g)| y * g).sum();
                    for j in 0..n {
                        if mr[j] {
                            gr[j] = yr[j] * (go[j] - inner);
                        }
                    }
                }
                self.accumulate(grads, a, ga);
            }
            Op::WeightedRowSum(w, v) => {
                let (b, n) = rows_cols(self.shape(w));
                let (_, d) = rows_cols(self.shape(v));
                let (wv, vv) = (self.value(w), self.value(v));
                if self.nodes[w.0].requires_grad {
                    let mut gw = vec![0.0; b * n];
                    for bi in 0..b {
                        let go = &gout[bi * d..(bi + 1) * d];
                        for j in 0..n {
                            let row = &vv[(bi * n + j) * d..(bi * n + j + 1) * d];
                            gw[bi * n + j] = dot(go, row);
                        }
                    }
                    self.accumulate(grads, w, gw);
                }
                if self.nodes[v.0].requires_grad {
                    let mut gv = vec![0.0; b * n * d];
                    for bi in 0..b {
                        let go = &gout[bi * d..(bi + 1) * d];
                        for j in 0..n {
                            let wj = wv[bi * n + j];
                            let row = &mut gv[(bi * n + j) * d..(bi * n + j + 1) * d];
                            row.iter_mut().zip(go).for_each(|(x, g)| *x = wj * g);
                        }
                    }
                    self.accumulate(grads, v, gv);
                }
            }
            Op::Sum(a) => {
                let n = self.value(a).len();
                self.accumulate(grads, a, vec![gout[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(a).len();
                self.accumulate(grads, a, vec![gout[0] / n as f64; n]);
            }
            Op::SumLast(a) => {
                let (m, n) = rows_cols(self.shape(a));
                let mut ga = Vec::with_capacity(m * n);
                for &g in gout.iter().take(m) {
                    ga.extend(std::iter::repeat_n(g, n));
                }
                self.accumulate(grads, a, ga);
            }
        }
    }
}

fn check_len(len: usize, shape: &[usize]) -> Result<()> {
    if len == numel(shape) {
        Ok(())
    } else {
        Err(Error::Shape(format!("{len} values for shape {shape:?}")))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Row-wise softmax over the unmasked entries, computed with the row
/// maximum subtracted. Masked entries and fully masked rows are zero.
pub fn masked_softmax_rows(x: &[f64], mask: &[bool], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    if n == 0 {
        return out;
    }
    for ((o, xr), mr) in out.chunks_mut(n).zip(x.chunks(n)).zip(mask.chunks(n)) {
        let max = xr
            .iter()
            .zip(mr)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut z = 0.0;
        for j in 0..n {
            if mr[j] {
                o[j] = (xr[j] - max).exp();
                z += o[j];
            }
        }
        o.iter_mut().for_each(|v| *v /= z);
    }
    out
}
