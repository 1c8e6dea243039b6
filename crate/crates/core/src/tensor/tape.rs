//! Reverse-mode differentiation tape.

use std::collections::HashMap;

use super::{ParamId, ParamStore, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Softmax { src: Var, axis: usize },
    LogSoftmax(Var),
    Sum { src: Var, axis: Option<usize> },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { src: Var, axis: usize, start: usize },
    Transpose(Var),
    Reshape(Var),
    Embedding { table: Var, index: usize },
    Gather { src: Var, indices: Vec<Option<usize>> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records primitive operations in evaluation order; `backward` walks the
/// record in reverse. A tape may be differentiated once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    consumed: bool,
}

/// `(outer, n, inner)` for reducing or slicing along `axis`.
fn split_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// Records parameter `id`. Repeated calls return the same handle.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let (shape, data) = match (sa.as_slice(), sb.as_slice()) {
            (&[m, k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for p in 0..k {
                        let xv = x[i * k + p];
                        if xv == 0.0 {
                            continue;
                        }
                        let row = &y[p * n..(p + 1) * n];
                        for (o, yv) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                            *o += xv * yv;
                        }
                    }
                }
                (vec![m, n], out)
            }
            (&[m, k], &[k2]) if k == k2 => {
                let out = (0..m)
                    .map(|i| x[i * k..(i + 1) * k].iter().zip(y).map(|(a, b)| a * b).sum())
                    .collect();
                (vec![m], out)
            }
            (&[k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; n];
                for p in 0..k {
                    for (o, yv) in out.iter_mut().zip(&y[p * n..(p + 1) * n]) {
                        *o += x[p] * yv;
                    }
                }
                (vec![n], out)
            }
            (&[k], &[k2]) if k == k2 => (vec![], vec![x.iter().zip(y).map(|(a, b)| a * b).sum()]),
            _ => return Err(mismatch("matmul", &sa, &sb)),
        };
        Ok(self.push(Tensor::with_shape(shape, data), Op::MatMul(a, b)))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::with_shape(ta.shape().to_vec(), data);
        Ok(self.push(t, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|x| f(*x)).collect();
        let t = Tensor::with_shape(t.shape().to_vec(), data);
        self.push(t, op)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, f64::ln, Op::Log(a))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let t = self.value(a);
        if axis >= t.shape().len() {
            return Err(TensorError::BadAxis { axis, shape: t.shape().to_vec() });
        }
        let (outer, n, inner) = split_dims(t.shape(), axis);
        let x = t.data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let max = (0..n).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..n {
                    let e = (x[at(j)] - max).exp();
                    out[at(j)] = e;
                    z += e;
                }
                for j in 0..n {
                    out[at(j)] /= z;
                }
            }
        }
        let t = Tensor::with_shape(t.shape().to_vec(), out);
        Ok(self.push(t, Op::Softmax { src: a, axis }))
    }

    /// Numerically stable `log(softmax(a))` over a vector.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        if t.shape().len() != 1 {
            return Err(TensorError::BadAxis { axis: 0, shape: t.shape().to_vec() });
        }
        let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + t.data().iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let data = t.data().iter().map(|x| x - lse).collect();
        let t = Tensor::with_shape(t.shape().to_vec(), data);
        Ok(self.push(t, Op::LogSoftmax(a)))
    }

    /// Sum along `axis`, or of every element when `axis` is `None`.
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var, TensorError> {
        let t = self.value(a);
        let out = match axis {
            None => Tensor::scalar(t.data().iter().sum()),
            Some(axis) => {
                if axis >= t.shape().len() {
                    return Err(TensorError::BadAxis { axis, shape: t.shape().to_vec() });
                }
                let (outer, n, inner) = split_dims(t.shape(), axis);
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for j in 0..n {
                        for i in 0..inner {
                            out[o * inner + i] += t.data()[o * n * inner + j * inner + i];
                        }
                    }
                }
                let mut shape = t.shape().to_vec();
                shape.remove(axis);
                Tensor::with_shape(shape, out)
            }
        };
        Ok(self.push(out, Op::Sum { src: a, axis }))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = self.shape(*parts.first().ok_or(TensorError::EmptyConcat)?).to_vec();
        if axis >= first.len() {
            return Err(TensorError::BadAxis { axis, shape: first });
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let ok = s.len() == first.len()
                && s.iter().enumerate().all(|(d, n)| d == axis || *n == first[d]);
            if !ok {
                return Err(mismatch("concat", &first, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_dims(&first, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let n = t.shape()[axis];
                data.extend_from_slice(&t.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let t = Tensor::with_shape(shape, data);
        Ok(self.push(t, Op::Concat { parts: parts.to_vec(), axis }))
    }

    /// `len` entries of `a` along `axis` starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let t = self.value(a);
        if axis >= t.shape().len() {
            return Err(TensorError::BadAxis { axis, shape: t.shape().to_vec() });
        }
        if len == 0 || start + len > t.shape()[axis] {
            return Err(TensorError::BadSlice {
                start,
                len,
                shape: t.shape().to_vec(),
            });
        }
        let (outer, n, inner) = split_dims(t.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let t = Tensor::with_shape(shape, data);
        Ok(self.push(t, Op::Slice { src: a, axis, start }))
    }

    /// Splits `a` along `axis` into consecutive pieces of the given sizes.
    pub fn split(&mut self, a: Var, axis: usize, sizes: &[usize]) -> Result<Vec<Var>, TensorError> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::BadAxis { axis, shape });
        }
        if sizes.iter().sum::<usize>() != shape[axis] {
            return Err(mismatch("split", &shape, sizes));
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &n in sizes {
            out.push(self.slice(a, axis, start, n)?);
            start += n;
        }
        Ok(out)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let &[r, c] = t.shape() else {
            return Err(TensorError::BadAxis { axis: 1, shape: t.shape().to_vec() });
        };
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        let t = Tensor::with_shape(vec![c, r], data);
        Ok(self.push(t, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.len() {
            return Err(mismatch("reshape", t.shape(), shape));
        }
        let t = Tensor::with_shape(shape.to_vec(), t.data().to_vec());
        Ok(self.push(t, Op::Reshape(a)))
    }

    /// Row `index` of a `[vocab, dim]` table.
    pub fn embedding(&mut self, table: Var, index: usize) -> Result<Var, TensorError> {
        let t = self.value(table);
        let &[rows, dim] = t.shape() else {
            return Err(TensorError::BadAxis { axis: 1, shape: t.shape().to_vec() });
        };
        if index >= rows {
            return Err(TensorError::IndexOutOfRange { index, len: rows });
        }
        let row = t.data()[index * dim..(index + 1) * dim].to_vec();
        Ok(self.push(Tensor::vector(row), Op::Embedding { table, index }))
    }

    /// Vector whose entry `k` is the flat element `indices[k]` of `a`, or zero.
    pub fn gather(&mut self, a: Var, indices: Vec<Option<usize>>) -> Result<Var, TensorError> {
        let t = self.value(a);
        let mut data = Vec::with_capacity(indices.len());
        for ix in &indices {
            match ix {
                Some(i) if *i >= t.len() => {
                    return Err(TensorError::IndexOutOfRange { index: *i, len: t.len() })
                }
                Some(i) => data.push(t.data()[*i]),
                None => data.push(0.0),
            }
        }
        if data.is_empty() {
            return Err(TensorError::BadSlice { start: 0, len: 0, shape: t.shape().to_vec() });
        }
        Ok(self.push(Tensor::vector(data), Op::Gather { src: a, indices }))
    }

    /// Inner product of two vectors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.shape(a).len() != 1 || self.shape(b).len() != 1 {
            return Err(mismatch("dot", self.shape(a), self.shape(b)));
        }
        self.matmul(a, b)
    }

    /// Accumulates `d loss / d param` into `store` for every parameter on
    /// this tape. Parameters not reached keep their current gradient.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(self.shape(loss), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => store.accumulate(*id, &g),
                op => self.propagate(op, &node.value, &g, &mut grads),
            }
        }
        Ok(())
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.shape(v)));
        }
        f(slot.as_mut().expect("just filled").data_mut());
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match op {
            Op::Constant | Op::Param(_) => unreachable!("handled by caller"),
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (xd, yd) = (x.data(), y.data());
                match (x.shape(), y.shape()) {
                    (&[m, k], &[_, n]) => {
                        self.acc(grads, *a, |ga| {
                            for i in 0..m {
                                for p in 0..k {
                                    let row = &yd[p * n..(p + 1) * n];
                                    ga[i * k + p] += gd[i * n..(i + 1) * n]
                                        .iter()
                                        .zip(row)
                                        .map(|(u, v)| u * v)
                                        .sum::<f64>();
                                }
                            }
                        });
                        self.acc(grads, *b, |gb| {
                            for i in 0..m {
                                for p in 0..k {
                                    let xv = xd[i * k + p];
                                    if xv == 0.0 {
                                        continue;
                                    }
                                    for (o, gv) in gb[p * n..(p + 1) * n]
                                        .iter_mut()
                                        .zip(&gd[i * n..(i + 1) * n])
                                    {
                                        *o += xv * gv;
                                    }
                                }
                            }
                        });
                    }
                    (&[m, k], &[_]) => {
                        self.acc(grads, *a, |ga| {
                            for i in 0..m {
                                let gi = gd[i];
                                if gi == 0.0 {
                                    continue;
                                }
                                for (o, yv) in ga[i * k..(i + 1) * k].iter_mut().zip(yd) {
                                    *o += gi * yv;
                                }
                            }
                        });
                        self.acc(grads, *b, |gb| {
                            for i in 0..m {
                                let gi = gd[i];
                                if gi == 0.0 {
                                    continue;
                                }
                                for (o, xv) in gb.iter_mut().zip(&xd[i * k..(i + 1) * k]) {
                                    *o += gi * xv;
                                }
                            }
                        });
                    }
                    (&[k], &[_, n]) => {
                        self.acc(grads, *a, |ga| {
                            for p in 0..k {
                                ga[p] += yd[p * n..(p + 1) * n]
                                    .iter()
                                    .zip(gd)
                                    .map(|(u, v)| u * v)
                                    .sum::<f64>();
                            }
                        });
                        self.acc(grads, *b, |gb| {
                            for p in 0..k {
                                for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(gd) {
                                    *o += xd[p] * gv;
                                }
                            }
                        });
                    }
                    _ => {
                        let s = gd[0];
                        self.acc(grads, *a, |ga| {
                            for (o, yv) in ga.iter_mut().zip(yd) {
                                *o += s * yv;
                            }
                        });
                        self.acc(grads, *b, |gb| {
                            for (o, xv) in gb.iter_mut().zip(xd) {
                                *o += s * xv;
                            }
                        });
                    }
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, |ga| add_into(ga, gd));
                self.acc(grads, *b, |gb| add_into(gb, gd));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |ga| add_into(ga, gd));
                self.acc(grads, *b, |gb| {
                    for (o, v) in gb.iter_mut().zip(gd) {
                        *o -= v;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |ga| {
                    for ((o, gv), yv) in ga.iter_mut().zip(gd).zip(y) {
                        *o += gv * yv;
                    }
                });
                self.acc(grads, *b, |gb| {
                    for ((o, gv), xv) in gb.iter_mut().zip(gd).zip(x) {
                        *o += gv * xv;
                    }
                });
            }
            Op::Scale(a, c) => self.acc(grads, *a, |ga| {
                for (o, gv) in ga.iter_mut().zip(gd) {
                    *o += c * gv;
                }
            }),
            Op::Tanh(a) => self.acc(grads, *a, |ga| {
                for ((o, gv), y) in ga.iter_mut().zip(gd).zip(out.data()) {
                    *o += gv * (1.0 - y * y);
                }
            }),
            Op::Sigmoid(a) => self.acc(grads, *a, |ga| {
                for ((o, gv), y) in ga.iter_mut().zip(gd).zip(out.data()) {
                    *o += gv * y * (1.0 - y);
                }
            }),
            Op::Log(a) => {
                let x = self.value(*a).data();
                self.acc(grads, *a, |ga| {
                    for ((o, gv), xv) in ga.iter_mut().zip(gd).zip(x) {
                        *o += gv / xv;
                    }
                });
            }
            Op::Softmax { src, axis } => {
                let (outer, n, inner) = split_dims(out.shape(), *axis);
                let y = out.data();
                self.acc(grads, *src, |ga| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| o * n * inner + j * inner + i;
                            let dotv: f64 = (0..n).map(|j| gd[at(j)] * y[at(j)]).sum();
                            for j in 0..n {
                                ga[at(j)] += y[at(j)] * (gd[at(j)] - dotv);
                            }
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let total: f64 = gd.iter().sum();
                self.acc(grads, *a, |ga| {
                    for ((o, gv), y) in ga.iter_mut().zip(gd).zip(out.data()) {
                        *o += gv - y.exp() * total;
                    }
                });
            }
            Op::Sum { src, axis } => {
                let shape = self.shape(*src).to_vec();
                match axis {
                    None => self.acc(grads, *src, |ga| {
                        for o in ga.iter_mut() {
                            *o += gd[0];
                        }
                    }),
                    Some(axis) => {
                        let (outer, n, inner) = split_dims(&shape, *axis);
                        self.acc(grads, *src, |ga| {
                            for o in 0..outer {
                                for j in 0..n {
                                    for i in 0..inner {
                                        ga[o * n * inner + j * inner + i] += gd[o * inner + i];
                                    }
                                }
                            }
                        });
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_dims(out.shape(), *axis);
                let mut offset = 0;
                for p in parts {
                    let n = self.shape(*p)[*axis];
                    self.acc(grads, *p, |gp| {
                        for o in 0..outer {
                            let src = &gd[o * total * inner + offset * inner..][..n * inner];
                            add_into(&mut gp[o * n * inner..(o + 1) * n * inner], src);
                        }
                    });
                    offset += n;
                }
            }
            Op::Slice { src, axis, start } => {
                let shape = self.shape(*src).to_vec();
                let (outer, n, inner) = split_dims(&shape, *axis);
                let len = out.shape()[*axis];
                self.acc(grads, *src, |ga| {
                    for o in 0..outer {
                        let base = o * n * inner + start * inner;
                        add_into(&mut ga[base..base + len * inner], &gd[o * len * inner..(o + 1) * len * inner]);
                    }
                });
            }
            Op::Transpose(a) => {
                let (r, c) = (out.shape()[1], out.shape()[0]);
                self.acc(grads, *a, |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += gd[j * r + i];
                        }
                    }
                });
            }
            Op::Reshape(a) => self.acc(grads, *a, |ga| add_into(ga, gd)),
            Op::Embedding { table, index } => {
                let dim = gd.len();
                self.acc(grads, *table, |gt| add_into(&mut gt[index * dim..(index + 1) * dim], gd));
            }
            Op::Gather { src, indices } => self.acc(grads, *src, |ga| {
                for (k, ix) in indices.iter().enumerate() {
                    if let Some(i) = ix {
                        ga[*i] += gd[k];
                    }
                }
            }),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tensor::grad_check;
    use rand::Rng;

    fn rand_tensor(shape: &[usize], r: &mut impl Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn check(shapes: &[&[usize]], f: impl Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>) -> f64 {
        let mut r = rng::seeded(7);
        let mut store = ParamStore::new();
        let ids: Vec<ParamId> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| store.add(&format!("p{i}"), rand_tensor(s, &mut r)).unwrap())
            .collect();
        // weight the output so non-scalar ops get a non-trivial upstream gradient
        grad_check(
            &mut store,
            |st, tape| {
                let vars: Vec<Var> = ids.iter().map(|id| tape.param(st, *id)).collect();
                let y = f(tape, &vars)?;
                let n = tape.value(y).len();
                let w = tape.constant(Tensor::new(
                    tape.shape(y).to_vec(),
                    (0..n).map(|i| 0.3 + 0.7 * ((i * 37 % 11) as f64 / 11.0)).collect(),
                )?);
                let p = tape.mul(y, w)?;
                tape.sum(p, None)
            },
            1e-5,
            500,
            &mut r,
        )
        .unwrap()
    }

    const TOL: f64 = 1e-6;

    #[test]
    fn primitives_pass_grad_check() {
        assert!(check(&[&[3, 4], &[4, 2]], |t, v| t.matmul(v[0], v[1])) < TOL);
        assert!(check(&[&[3, 4], &[4]], |t, v| t.matmul(v[0], v[1])) < TOL);
        assert!(check(&[&[4], &[4, 3]], |t, v| t.matmul(v[0], v[1])) < TOL);
        assert!(check(&[&[5], &[5]], |t, v| t.dot(v[0], v[1])) < TOL);
        assert!(check(&[&[2, 3], &[2, 3]], |t, v| t.add(v[0], v[1])) < TOL);
        assert!(check(&[&[2, 3], &[2, 3]], |t, v| t.sub(v[0], v[1])) < TOL);
        assert!(check(&[&[2, 3], &[2, 3]], |t, v| t.mul(v[0], v[1])) < TOL);
        assert!(check(&[&[6]], |t, v| Ok(t.scale(v[0], -1.5))) < TOL);
        assert!(check(&[&[6]], |t, v| Ok(t.tanh(v[0]))) < TOL);
        assert!(check(&[&[6]], |t, v| Ok(t.sigmoid(v[0]))) < TOL);
        assert!(check(&[&[6]], |t, v| {
            let s = t.sigmoid(v[0]);
            Ok(t.log(s))
        }) < TOL);
        assert!(check(&[&[3, 4]], |t, v| t.softmax(v[0], 0)) < TOL);
        assert!(check(&[&[3, 4]], |t, v| t.softmax(v[0], 1)) < TOL);
        assert!(check(&[&[7]], |t, v| t.log_softmax(v[0])) < TOL);
        assert!(check(&[&[3, 4]], |t, v| t.sum(v[0], Some(0))) < TOL);
        assert!(check(&[&[3, 4]], |t, v| t.sum(v[0], Some(1))) < TOL);
        assert!(check(&[&[2, 3], &[2, 2]], |t, v| t.concat(&[v[0], v[1]], 1)) < TOL);
        assert!(check(&[&[3], &[2]], |t, v| t.concat(&[v[0], v[1]], 0)) < TOL);
        assert!(check(&[&[3, 5]], |t, v| t.slice(v[0], 1, 1, 3)) < TOL);
        assert!(check(&[&[3, 5]], |t, v| t.transpose(v[0])) < TOL);
        assert!(check(&[&[3, 4]], |t, v| t.reshape(v[0], &[2, 6])) < TOL);
        assert!(check(&[&[5, 3]], |t, v| t.embedding(v[0], 2)) < TOL);
        assert!(check(&[&[2, 3]], |t, v| t.gather(v[0], vec![Some(4), None, Some(0), Some(4)])) < TOL);
    }

    #[test]
    fn composite_graph_and_lstm_pass_grad_check() {
        use crate::tensor::nn::{BiLstm, Linear};
        let mut r = rng::seeded(11);
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "lin", 4, 3, &mut r).unwrap();
        let bi = BiLstm::new(&mut store, "bi", 3, 2, 2, &mut r).unwrap();
        let xs: Vec<Tensor> = (0..3).map(|_| rand_tensor(&[4], &mut r)).collect();
        let err = grad_check(
            &mut store,
            |st, tape| {
                let mut hs = Vec::new();
                for x in &xs {
                    let x = tape.constant(x.clone());
                    let y = lin.apply(tape, st, x)?;
                    hs.push(tape.tanh(y));
                }
                let out = bi.run(tape, st, &hs)?;
                let last = tape.concat(&[out.forward[2], out.backward[0]], 0)?;
                let ls = tape.log_softmax(last)?;
                let pick = tape.gather(ls, vec![Some(1)])?;
                tape.sum(pick, None)
            },
            1e-5,
            1000,
            &mut r,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut r = rng::seeded(3);
        let mut tape = Tape::new();
        for n in 1..20 {
            let t = Tensor::vector((0..n).map(|_| r.gen_range(-50.0..50.0)).collect());
            let x = tape.constant(t);
            let s = tape.softmax(x, 0).unwrap();
            let total: f64 = tape.value(s).data().iter().sum();
            assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn concat_then_split_is_identity() {
        let mut r = rng::seeded(5);
        let mut tape = Tape::new();
        let a = tape.constant(rand_tensor(&[2, 3], &mut r));
        let b = tape.constant(rand_tensor(&[2, 4], &mut r));
        let c = tape.concat(&[a, b], 1).unwrap();
        let parts = tape.split(c, 1, &[3, 4]).unwrap();
        assert_eq!(tape.value(parts[0]), tape.value(a));
        assert_eq!(tape.value(parts[1]), tape.value(b));
    }

    #[test]
    fn linear_loss_gradient_is_input() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![0.5, -1.0, 2.0])).unwrap();
        let unused = store.add("u", Tensor::vector(vec![1.0])).unwrap();
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let x = tape.constant(Tensor::vector(vec![3.0, 4.0, -5.0]));
        let loss = tape.dot(wv, x).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad(w).data(), &[3.0, 4.0, -5.0]);
        assert_eq!(store.grad(unused).data(), &[0.0]);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(2.0)).unwrap();
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let loss = tape.tanh(wv);
        tape.backward(loss, &mut store).unwrap();
        assert!(matches!(tape.backward(loss, &mut store), Err(TensorError::TapeConsumed)));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        assert!(matches!(
            tape.backward(wv, &mut store),
            Err(TensorError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let msg = tape.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("matmul"), "{msg}");
    }
}
