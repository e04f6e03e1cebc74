use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{matmul, sigmoid_scalar, softmax_slice, tanh_scalar, ParamGrads, ParamId, ParamSet, Tensor, PROB_FLOOR};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    MatMul(Var, Var),
    MatVec(Var, Var),
    VecMat(Var, Var),
    Dot(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Stack(Vec<Var>),
    Row(Var, usize),
    Sum(Var),
    Pick(Var, usize),
    NegLog(Var),
    ScatterAdd(Var, Vec<usize>),
    ScaleBy(Var, Var),
    Mask(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A recorded computation. Nodes are appended in evaluation order, so the
/// node list is already a topological order for the backward sweep.
pub struct Graph<'p> {
    params: Option<&'p ParamSet>,
    nodes: Vec<Node>,
    bound: Vec<Option<Var>>,
    training: bool,
    rng: ChaCha8Rng,
}

impl<'p> Graph<'p> {
    /// A graph with no parameter binding (inputs and constants only).
    pub fn new() -> Self {
        Graph {
            params: None,
            nodes: Vec::new(),
            bound: Vec::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn with_params(params: &'p ParamSet) -> Self {
        Graph {
            params: Some(params),
            nodes: Vec::new(),
            bound: vec![None; params.len()],
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Enables dropout, drawing masks from a generator seeded with `seed`.
    pub fn training(mut self, seed: u64) -> Self {
        self.training = true;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn is_training(&self) -> bool {
        self.training
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

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A leaf that gradients do not flow into.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let params = self.params.expect("graph has no parameter binding");
        let v = self.push(params.get(id).clone(), Op::Param, true);
        self.bound[id.0] = Some(v);
        v
    }

    /// Row `index` of a parameter matrix without copying the whole table.
    pub fn param_row(&mut self, id: ParamId, index: usize) -> Result<Var> {
        let v = self.param(id);
        self.row(v, index)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let x = &self.nodes[a.0].value;
        Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect()).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_with(a, b, |x, y| x + y);
        let ng = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_with(a, b, |x, y| x - y);
        let ng = self.needs(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_with(a, b, |x, y| x * y);
        let ng = self.needs(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.map(a, |x| x * factor);
        let ng = self.needs(&[a]);
        self.push(value, Op::Scale(a, factor), ng)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.map(a, |x| 1.0 - x);
        let ng = self.needs(&[a]);
        self.push(value, Op::OneMinus(a), ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul(self.value(a), self.value(b))?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    /// `w[m×k] · x[k] -> [m]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (ws, xs) = (self.shape(w), self.shape(x));
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(Error::shape("matvec", ws, xs));
        }
        let (m, k) = (ws[0], ws[1]);
        let (wd, xd) = (self.value(w).data(), self.value(x).data());
        let out = (0..m)
            .map(|i| wd[i * k..(i + 1) * k].iter().zip(xd).map(|(a, b)| a * b).sum())
            .collect();
        let ng = self.needs(&[w, x]);
        Ok(self.push(Tensor::vector(out), Op::MatVec(w, x), ng))
    }

    /// `a[n] · m[n×d] -> [d]`, i.e. a weighted sum of the rows of `m`.
    pub fn vecmat(&mut self, a: Var, m: Var) -> Result<Var> {
        let (as_, ms) = (self.shape(a), self.shape(m));
        if as_.len() != 1 || ms.len() != 2 || as_[0] != ms[0] {
            return Err(Error::shape("vecmat", as_, ms));
        }
        let (n, d) = (ms[0], ms[1]);
        let (ad, md) = (self.value(a).data(), self.value(m).data());
        let mut out = vec![0.0; d];
        for i in 0..n {
            let w = ad[i];
            for (o, v) in out.iter_mut().zip(&md[i * d..(i + 1) * d]) {
                *o += w * v;
            }
        }
        let ng = self.needs(&[a, m]);
        Ok(self.push(Tensor::vector(out), Op::VecMat(a, m), ng))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("dot", a, b)?;
        let s = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum();
        let ng = self.needs(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b), ng))
    }

    /// `w·x + b` for a weight matrix and bias vector.
    pub fn linear(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let wx = self.matvec(w, x)?;
        self.add(wx, b)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.map(a, sigmoid_scalar);
        let ng = self.needs(&[a]);
        self.push(value, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.map(a, tanh_scalar);
        let ng = self.needs(&[a]);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.is_empty() || v.shape().len() != 1 {
            return Err(Error::shape("softmax", v.shape(), &[]));
        }
        let value = Tensor::vector(softmax_slice(v.data()));
        let ng = self.needs(&[a]);
        Ok(self.push(value, Op::Softmax(a), ng))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.shape().len() != 1 {
                return Err(Error::shape("concat", v.shape(), &[]));
            }
            out.extend_from_slice(v.data());
        }
        let ng = self.needs(parts);
        Ok(self.push(Tensor::vector(out), Op::Concat(parts.to_vec()), ng))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(a);
        if v.shape().len() != 1 || start + len > v.len() {
            return Err(Error::shape("slice", v.shape(), &[start, len]));
        }
        let value = Tensor::vector(v.data()[start..start + len].to_vec());
        let ng = self.needs(&[a]);
        Ok(self.push(value, Op::Slice(a, start), ng))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or_else(|| Error::contract("stack of zero rows"))?;
        let d = self.value(*first).len();
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let v = self.value(r);
            if v.shape() != [d] {
                return Err(Error::shape("stack", &[d], v.shape()));
            }
            out.extend_from_slice(v.data());
        }
        let ng = self.needs(rows);
        let value = Tensor::new(vec![rows.len(), d], out)?;
        Ok(self.push(value, Op::Stack(rows.to_vec()), ng))
    }

    pub fn row(&mut self, m: Var, index: usize) -> Result<Var> {
        let v = self.value(m);
        if v.shape().len() != 2 || index >= v.shape()[0] {
            return Err(Error::shape("row", v.shape(), &[index]));
        }
        let d = v.shape()[1];
        let value = Tensor::vector(v.data()[index * d..(index + 1) * d].to_vec());
        let ng = self.needs(&[m]);
        Ok(self.push(value, Op::Row(m, index), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    /// Arithmetic mean of scalar nodes.
    pub fn mean(&mut self, scalars: &[Var]) -> Result<Var> {
        if scalars.is_empty() {
            return Err(Error::contract("mean of zero terms"));
        }
        let mut acc = scalars[0];
        for &s in &scalars[1..] {
            acc = self.add(acc, s)?;
        }
        Ok(self.scale(acc, 1.0 / scalars.len() as f64))
    }

    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let v = self.value(a);
        if index >= v.len() {
            return Err(Error::contract(format!(
                "index {index} out of range for length {}",
                v.len()
            )));
        }
        let value = Tensor::scalar(v.data()[index]);
        let ng = self.needs(&[a]);
        Ok(self.push(value, Op::Pick(a, index), ng))
    }

    /// `-ln(max(x, PROB_FLOOR))` for a scalar node.
    pub fn neg_log(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if !v.is_scalar() {
            return Err(Error::shape("neg_log", v.shape(), &[]));
        }
        let value = Tensor::scalar(-v.item().max(PROB_FLOOR).ln());
        let ng = self.needs(&[a]);
        Ok(self.push(value, Op::NegLog(a), ng))
    }

    /// Cross entropy of a probability vector against a target index.
    pub fn cross_entropy(&mut self, probs: Var, target: usize) -> Result<Var> {
        let p = self.pick(probs, target)?;
        self.neg_log(p)
    }

    /// `out[index[i]] += src[i]` into a zero vector of length `out_len`.
    pub fn scatter_add(&mut self, src: Var, index: &[usize], out_len: usize) -> Result<Var> {
        let v = self.value(src);
        if v.shape().len() != 1 || v.len() != index.len() {
            return Err(Error::shape("scatter_add", v.shape(), &[index.len()]));
        }
        let mut out = vec![0.0; out_len];
        for (&i, &x) in index.iter().zip(v.data()) {
            if i >= out_len {
                return Err(Error::contract(format!(
                    "scatter index {i} out of range for length {out_len}"
                )));
            }
            out[i] += x;
        }
        let ng = self.needs(&[src]);
        Ok(self.push(Tensor::vector(out), Op::ScatterAdd(src, index.to_vec()), ng))
    }

    /// Multiplies every element of `a` by the scalar node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if !self.value(s).is_scalar() {
            return Err(Error::shape("scale_by", self.shape(a), self.shape(s)));
        }
        let k = self.value(s).item();
        let value = self.map(a, |x| x * k);
        let ng = self.needs(&[a, s]);
        Ok(self.push(value, Op::ScaleBy(a, s), ng))
    }

    /// Inverted dropout; identity outside training mode.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Var {
        if !self.training || rate <= 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("shape preserved");
        let ng = self.needs(&[a]);
        self.push(value, Op::Mask(a, mask), ng)
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {}", lv.item())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut params = self.params.map(ParamGrads::zeros_like);
        if let Some(pg) = params.as_mut() {
            for (i, bound) in self.bound.iter().enumerate() {
                if let Some(v) = bound {
                    if let Some(g) = grads.get(v.0).and_then(|g| g.as_ref()) {
                        pg.accumulate(ParamId(i), g);
                    }
                }
            }
        }
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, |s| add_into(s, gd));
                self.acc(grads, *b, |s| add_into(s, gd));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |s| add_into(s, gd));
                self.acc(grads, *b, |s| {
                    for (o, v) in s.iter_mut().zip(gd) {
                        *o -= v;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |s| {
                    for ((o, gv), y) in s.iter_mut().zip(gd).zip(bv) {
                        *o += gv * y;
                    }
                });
                self.acc(grads, *b, |s| {
                    for ((o, gv), x) in s.iter_mut().zip(gd).zip(av) {
                        *o += gv * x;
                    }
                });
            }
            Op::Scale(a, k) => self.acc(grads, *a, |s| {
                for (o, gv) in s.iter_mut().zip(gd) {
                    *o += k * gv;
                }
            }),
            Op::OneMinus(a) => self.acc(grads, *a, |s| {
                for (o, gv) in s.iter_mut().zip(gd) {
                    *o -= gv;
                }
            }),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let (ad, bd) = (av.data(), bv.data());
                self.acc(grads, *a, |s| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += gd[i * n + j] * bd[p * n + j];
                            }
                            s[i * k + p] += acc;
                        }
                    }
                });
                self.acc(grads, *b, |s| {
                    for i in 0..m {
                        for p in 0..k {
                            let x = ad[i * k + p];
                            for j in 0..n {
                                s[p * n + j] += x * gd[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::MatVec(w, x) => {
                let (wv, xv) = (self.value(*w), self.value(*x));
                let k = wv.cols();
                let (wd, xd) = (wv.data(), xv.data());
                self.acc(grads, *w, |s| {
                    for (i, gv) in gd.iter().enumerate() {
                        if *gv == 0.0 {
                            continue;
                        }
                        for (o, xj) in s[i * k..(i + 1) * k].iter_mut().zip(xd) {
                            *o += gv * xj;
                        }
                    }
                });
                self.acc(grads, *x, |s| {
                    for (i, gv) in gd.iter().enumerate() {
                        for (o, wij) in s.iter_mut().zip(&wd[i * k..(i + 1) * k]) {
                            *o += gv * wij;
                        }
                    }
                });
            }
            Op::VecMat(a, m) => {
                let (av, mv) = (self.value(*a), self.value(*m));
                let d = mv.cols();
                let (ad, md) = (av.data(), mv.data());
                self.acc(grads, *a, |s| {
                    for (i, o) in s.iter_mut().enumerate() {
                        *o += md[i * d..(i + 1) * d].iter().zip(gd).map(|(x, y)| x * y).sum::<f64>();
                    }
                });
                self.acc(grads, *m, |s| {
                    for (i, ai) in ad.iter().enumerate() {
                        for (o, gv) in s[i * d..(i + 1) * d].iter_mut().zip(gd) {
                            *o += ai * gv;
                        }
                    }
                });
            }
            Op::Dot(a, b) => {
                let k = gd[0];
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |s| {
                    for (o, y) in s.iter_mut().zip(bv) {
                        *o += k * y;
                    }
                });
                self.acc(grads, *b, |s| {
                    for (o, x) in s.iter_mut().zip(av) {
                        *o += k * x;
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                self.acc(grads, *a, |s| {
                    for ((o, gv), yv) in s.iter_mut().zip(gd).zip(y) {
                        *o += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                self.acc(grads, *a, |s| {
                    for ((o, gv), yv) in s.iter_mut().zip(gd).zip(y) {
                        *o += gv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let gy: f64 = gd.iter().zip(y).map(|(a, b)| a * b).sum();
                self.acc(grads, *a, |s| {
                    for ((o, gv), yv) in s.iter_mut().zip(gd).zip(y) {
                        *o += yv * (gv - gy);
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    self.acc(grads, p, |s| add_into(s, &gd[offset..offset + n]));
                    offset += n;
                }
            }
            Op::Slice(a, start) => {
                let start = *start;
                self.acc(grads, *a, |s| add_into(&mut s[start..start + gd.len()], gd));
            }
            Op::Stack(rows) => {
                let d = node.value.cols();
                for (i, &r) in rows.iter().enumerate() {
                    self.acc(grads, r, |s| add_into(s, &gd[i * d..(i + 1) * d]));
                }
            }
            Op::Row(m, index) => {
                let d = gd.len();
                let index = *index;
                self.acc(grads, *m, |s| add_into(&mut s[index * d..(index + 1) * d], gd));
            }
            Op::Sum(a) => {
                let k = gd[0];
                self.acc(grads, *a, |s| {
                    for o in s.iter_mut() {
                        *o += k;
                    }
                });
            }
            Op::Pick(a, index) => {
                let index = *index;
                self.acc(grads, *a, |s| s[index] += gd[0]);
            }
            Op::NegLog(a) => {
                let x = self.value(*a).item();
                if x > PROB_FLOOR {
                    self.acc(grads, *a, |s| s[0] -= gd[0] / x);
                }
            }
            Op::ScatterAdd(src, index) => {
                self.acc(grads, *src, |s| {
                    for (o, &i) in s.iter_mut().zip(index) {
                        *o += gd[i];
                    }
                });
            }
            Op::ScaleBy(a, k) => {
                let kv = self.value(*k).item();
                let av = self.value(*a).data();
                self.acc(grads, *a, |s| {
                    for (o, gv) in s.iter_mut().zip(gd) {
                        *o += kv * gv;
                    }
                });
                let dk: f64 = gd.iter().zip(av).map(|(x, y)| x * y).sum();
                self.acc(grads, *k, |s| s[0] += dk);
            }
            Op::Mask(a, mask) => self.acc(grads, *a, |s| {
                for ((o, gv), m) in s.iter_mut().zip(gd).zip(mask) {
                    *o += gv * m;
                }
            }),
        }
    }

    /// Runs `f` on the gradient slot of `v`, allocating zeros on first use.
    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.value(v).shape()));
        f(slot.data_mut());
    }
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Option<ParamGrads>,
}

impl Gradients {
    /// Gradient with respect to a recorded node, if the loss depends on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients for every bound parameter.
    pub fn params(&self) -> Option<&ParamGrads> {
        self.params.as_ref()
    }

    pub fn into_params(self) -> Option<ParamGrads> {
        self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_weights_has_unit_gradient() {
        let mut ps = ParamSet::new();
        let w = ps.add("w", Tensor::vector(vec![0.3, -1.0, 2.0])).unwrap();
        let mut g = Graph::with_params(&ps);
        let wv = g.param(w);
        let loss = g.sum(wv);
        let grads = g.backward(loss).unwrap().into_params().unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sigmoid_times_input() {
        let mut g = Graph::new();
        let w = g.input(Tensor::scalar(0.0));
        let x = g.constant(Tensor::scalar(2.0));
        let s = g.sigmoid(w);
        let y = g.mul(s, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert!((grads.wrt(w).unwrap().item() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reuse_accumulates() {
        let mut g = Graph::new();
        let w = g.input(Tensor::scalar(1.7));
        let y = g.add(w, w).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(w).unwrap().item(), 2.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let w = g.input(Tensor::vector(vec![1.0, 2.0]));
        let t = g.tanh(w);
        assert!(matches!(g.backward(t), Err(Error::Contract(_))));
    }

    #[test]
    fn dropout_is_identity_in_eval_mode() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0; 8]));
        assert_eq!(g.dropout(x, 0.5), x);

        let mut g = Graph::new().training(7);
        let x = g.input(Tensor::vector(vec![1.0; 64]));
        let d = g.dropout(x, 0.5);
        for v in g.value(d).data() {
            assert!(*v == 0.0 || *v == 2.0);
        }
    }
}
