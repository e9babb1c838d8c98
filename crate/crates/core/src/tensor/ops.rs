//! Differentiable operations: forward on [`Var`], backward rules on [`Op`].

use super::kernels;
use super::tape::{Node, Var};
use super::{matmul_dims, Result, Tensor, TensorError};

const LAYER_NORM_EPS: f64 = 1e-5;

pub(super) enum Op {
    Leaf,
    MatMul { a: usize, b: usize, m: usize, k: usize, n: usize },
    Transpose { a: usize, rows: usize, cols: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    AddBias { a: usize, b: usize, n: usize },
    Scale { a: usize, c: f64 },
    Relu { a: usize },
    Sigmoid { a: usize },
    Exp { a: usize },
    Ln { a: usize },
    Softmax { a: usize, outer: usize, len: usize, inner: usize },
    LogSoftmax { a: usize, len: usize },
    LayerNorm { a: usize, len: usize, inv_std: Vec<f64> },
    Norm { a: usize, len: usize },
    Sum { a: usize },
    Mean { a: usize },
    Stack { inputs: Vec<usize> },
    Concat { inputs: Vec<usize>, outer: usize, widths: Vec<usize> },
    Gather { a: usize, indices: Vec<usize>, row_len: usize },
    Reshape { a: usize },
    Index { a: usize, i: usize },
    BceLogits { a: usize, target: f64 },
}

fn accumulate(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    id: usize,
    f: impl FnOnce(&mut [f64]),
) {
    if !nodes[id].tracked {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]);
    f(slot);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Op {
    pub(super) fn backprop(
        &self,
        out: &Tensor,
        g: &[f64],
        nodes: &[Node],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let val = |id: usize| nodes[id].value.data();
        match self {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                if nodes[*a].tracked {
                    let da = kernels::matmul_bt(g, val(*b), m, k, n);
                    accumulate(nodes, grads, *a, |s| add_into(s, &da));
                }
                if nodes[*b].tracked {
                    let db = kernels::matmul_at(val(*a), g, m, k, n);
                    accumulate(nodes, grads, *b, |s| add_into(s, &db));
                }
            }
            Op::Transpose { a, rows, cols } => {
                // out is cols×rows; g transposed back to rows×cols
                let back = kernels::transpose(g, *cols, *rows);
                accumulate(nodes, grads, *a, |s| add_into(s, &back));
            }
            Op::Add { a, b } => {
                accumulate(nodes, grads, *a, |s| add_into(s, g));
                accumulate(nodes, grads, *b, |s| add_into(s, g));
            }
            Op::Sub { a, b } => {
                accumulate(nodes, grads, *a, |s| add_into(s, g));
                accumulate(nodes, grads, *b, |s| {
                    for (d, v) in s.iter_mut().zip(g) {
                        *d -= v;
                    }
                });
            }
            Op::Mul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                accumulate(nodes, grads, *a, |s| {
                    for ((d, gi), bi) in s.iter_mut().zip(g).zip(bv) {
                        *d += gi * bi;
                    }
                });
                accumulate(nodes, grads, *b, |s| {
                    for ((d, gi), ai) in s.iter_mut().zip(g).zip(av) {
                        *d += gi * ai;
                    }
                });
            }
            Op::AddBias { a, b, n } => {
                accumulate(nodes, grads, *a, |s| add_into(s, g));
                accumulate(nodes, grads, *b, |s| {
                    for row in g.chunks(*n) {
                        add_into(s, row);
                    }
                });
            }
            Op::Scale { a, c } => accumulate(nodes, grads, *a, |s| {
                for (d, gi) in s.iter_mut().zip(g) {
                    *d += c * gi;
                }
            }),
            Op::Relu { a } => {
                let av = val(*a);
                accumulate(nodes, grads, *a, |s| {
                    for ((d, gi), x) in s.iter_mut().zip(g).zip(av) {
                        if *x > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Sigmoid { a } => accumulate(nodes, grads, *a, |s| {
                for ((d, gi), y) in s.iter_mut().zip(g).zip(out.data()) {
                    *d += gi * y * (1.0 - y);
                }
            }),
            Op::Exp { a } => accumulate(nodes, grads, *a, |s| {
                for ((d, gi), y) in s.iter_mut().zip(g).zip(out.data()) {
                    *d += gi * y;
                }
            }),
            Op::Ln { a } => {
                let av = val(*a);
                accumulate(nodes, grads, *a, |s| {
                    for ((d, gi), x) in s.iter_mut().zip(g).zip(av) {
                        *d += gi / x;
                    }
                });
            }
            Op::Softmax { a, outer, len, inner } => {
                let (len, inner) = (*len, *inner);
                let y = out.data();
                accumulate(nodes, grads, *a, |s| {
                    for o in 0..*outer {
                        for i in 0..inner {
                            let at = |j: usize| o * len * inner + j * inner + i;
                            let dot: f64 = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
                            for j in 0..len {
                                s[at(j)] += y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                });
            }
            Op::LogSoftmax { a, len } => {
                let y = out.data();
                accumulate(nodes, grads, *a, |s| {
                    for ((srow, grow), yrow) in
                        s.chunks_mut(*len).zip(g.chunks(*len)).zip(y.chunks(*len))
                    {
                        let gsum: f64 = grow.iter().sum();
                        for ((d, gi), yi) in srow.iter_mut().zip(grow).zip(yrow) {
                            *d += gi - yi.exp() * gsum;
                        }
                    }
                });
            }
            Op::LayerNorm { a, len, inv_std } => {
                let xhat = out.data();
                let len = *len;
                let nf = len as f64;
                accumulate(nodes, grads, *a, |s| {
                    for (r, istd) in inv_std.iter().enumerate() {
                        let span = r * len..(r + 1) * len;
                        let (gr, xr) = (&g[span.clone()], &xhat[span.clone()]);
                        let g_mean = gr.iter().sum::<f64>() / nf;
                        let gx_mean = gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / nf;
                        for ((d, gi), xi) in s[span].iter_mut().zip(gr).zip(xr) {
                            *d += istd * (gi - g_mean - xi * gx_mean);
                        }
                    }
                });
            }
            Op::Norm { a, len } => {
                let av = val(*a);
                let norms = out.data();
                accumulate(nodes, grads, *a, |s| {
                    for (r, (&nrm, &gi)) in norms.iter().zip(g).enumerate() {
                        // subgradient 0 at the origin
                        if nrm == 0.0 {
                            continue;
                        }
                        for j in r * len..(r + 1) * len {
                            s[j] += gi * av[j] / nrm;
                        }
                    }
                });
            }
            Op::Sum { a } => accumulate(nodes, grads, *a, |s| {
                s.iter_mut().for_each(|d| *d += g[0]);
            }),
            Op::Mean { a } => {
                let n = nodes[*a].value.len() as f64;
                accumulate(nodes, grads, *a, |s| {
                    s.iter_mut().for_each(|d| *d += g[0] / n);
                });
            }
            Op::Stack { inputs } => {
                let size = g.len() / inputs.len().max(1);
                for (slot, &id) in inputs.iter().enumerate() {
                    accumulate(nodes, grads, id, |s| {
                        add_into(s, &g[slot * size..(slot + 1) * size])
                    });
                }
            }
            Op::Concat { inputs, outer, widths } => {
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                for (&id, &w) in inputs.iter().zip(widths) {
                    accumulate(nodes, grads, id, |s| {
                        for o in 0..*outer {
                            let src = &g[o * total + offset..o * total + offset + w];
                            add_into(&mut s[o * w..(o + 1) * w], src);
                        }
                    });
                    offset += w;
                }
            }
            Op::Gather { a, indices, row_len } => accumulate(nodes, grads, *a, |s| {
                for (r, &src) in indices.iter().enumerate() {
                    let gr = &g[r * row_len..(r + 1) * row_len];
                    add_into(&mut s[src * row_len..(src + 1) * row_len], gr);
                }
            }),
            Op::Reshape { a } => accumulate(nodes, grads, *a, |s| add_into(s, g)),
            Op::Index { a, i } => accumulate(nodes, grads, *a, |s| s[*i] += g[0]),
            Op::BceLogits { a, target } => {
                let av = val(*a);
                accumulate(nodes, grads, *a, |s| {
                    for ((d, gi), x) in s.iter_mut().zip(g).zip(av) {
                        *d += gi * (sigmoid(*x) - target);
                    }
                });
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn same_tape(a: &Var<'_>, b: &Var<'_>) {
    assert!(
        std::ptr::eq(a.tape, b.tape),
        "operands belong to different tapes"
    );
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<'t> Var<'t> {
    fn tracked_any(&self, ids: &[usize]) -> bool {
        let nodes = self.tape.nodes();
        ids.iter().any(|&i| nodes[i].tracked)
    }

    fn unary(&self, op: Op, value: Tensor) -> Var<'t> {
        let tracked = self.is_tracked();
        self.tape.push(value, op, tracked)
    }

    fn map(&self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let value = {
            let v = self.value();
            let data = v.data().iter().map(|&x| f(x)).collect();
            Tensor::new(v.shape().to_vec(), data).expect("same shape")
        };
        self.unary(op, value)
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        same_tape(self, &other);
        let (value, m, k, n) = {
            let (a, b) = (self.value(), other.value());
            let (m, k, n) = matmul_dims(&a, &b)?;
            (kernels::matmul(a.data(), b.data(), m, k, n), m, k, n)
        };
        let op = Op::MatMul { a: self.id, b: other.id, m, k, n };
        let tracked = self.tracked_any(&[self.id, other.id]);
        Ok(self.tape.push(Tensor::new(vec![m, n], value)?, op, tracked))
    }

    /// Matrix transpose.
    pub fn t(&self) -> Result<Var<'t>> {
        let (value, rows, cols) = {
            let v = self.value();
            let [rows, cols] = *v.shape() else {
                return Err(TensorError::Domain {
                    op: "transpose",
                    msg: format!("expected a matrix, got {:?}", v.shape()),
                });
            };
            (kernels::transpose(v.data(), rows, cols), rows, cols)
        };
        Ok(self.unary(
            Op::Transpose { a: self.id, rows, cols },
            Tensor::new(vec![cols, rows], value)?,
        ))
    }

    fn zip_with(
        &self,
        other: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        same_tape(self, &other);
        let value = {
            let (a, b) = (self.value(), other.value());
            if a.shape() != b.shape() {
                return Err(shape_err(name, a.shape(), b.shape()));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        let tracked = self.tracked_any(&[self.id, other.id]);
        Ok(self.tape.push(value, op, tracked))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_with(other, "add", Op::Add { a: self.id, b: other.id }, |x, y| x + y)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_with(other, "sub", Op::Sub { a: self.id, b: other.id }, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip_with(other, "mul", Op::Mul { a: self.id, b: other.id }, |x, y| x * y)
    }

    /// Adds a vector along the last axis of every row.
    pub fn add_bias(&self, bias: Var<'t>) -> Result<Var<'t>> {
        same_tape(self, &bias);
        let (value, n) = {
            let (a, b) = (self.value(), bias.value());
            let n = a.last_dim();
            if b.shape() != [n] {
                return Err(shape_err("add_bias", a.shape(), b.shape()));
            }
            let mut data = a.data().to_vec();
            for row in data.chunks_mut(n) {
                for (x, y) in row.iter_mut().zip(b.data()) {
                    *x += y;
                }
            }
            (Tensor::new(a.shape().to_vec(), data)?, n)
        };
        let tracked = self.tracked_any(&[self.id, bias.id]);
        Ok(self.tape.push(value, Op::AddBias { a: self.id, b: bias.id, n }, tracked))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.map(Op::Scale { a: self.id, c }, |x| c * x)
    }

    pub fn neg(&self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn relu(&self) -> Var<'t> {
        self.map(Op::Relu { a: self.id }, |x| if x < 0.0 { 0.0 } else { x })
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.map(Op::Sigmoid { a: self.id }, sigmoid)
    }

    pub fn exp(&self) -> Var<'t> {
        self.map(Op::Exp { a: self.id }, f64::exp)
    }

    pub fn ln(&self) -> Var<'t> {
        self.map(Op::Ln { a: self.id }, f64::ln)
    }

    /// Softmax along `axis`, max-shifted for stability.
    pub fn softmax(&self, axis: usize) -> Result<Var<'t>> {
        let (value, outer, len, inner) = {
            let v = self.value();
            let shape = v.shape();
            if axis >= shape.len() {
                return Err(TensorError::Domain {
                    op: "softmax",
                    msg: format!("axis {axis} out of range for shape {shape:?}"),
                });
            }
            let len = shape[axis];
            if len == 0 {
                return Err(TensorError::Domain {
                    op: "softmax",
                    msg: "empty axis".into(),
                });
            }
            let outer: usize = shape[..axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let x = v.data();
            let mut y = vec![0.0; x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| o * len * inner + j * inner + i;
                    let max = (0..len).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for j in 0..len {
                        let e = (x[at(j)] - max).exp();
                        y[at(j)] = e;
                        total += e;
                    }
                    for j in 0..len {
                        y[at(j)] /= total;
                    }
                }
            }
            (Tensor::new(shape.to_vec(), y)?, outer, len, inner)
        };
        Ok(self.unary(Op::Softmax { a: self.id, outer, len, inner }, value))
    }

    /// Log-softmax along the last axis.
    pub fn log_softmax(&self) -> Result<Var<'t>> {
        let (value, len) = {
            let v = self.value();
            let len = v.last_dim();
            if len == 0 {
                return Err(TensorError::Domain {
                    op: "log_softmax",
                    msg: "empty axis".into(),
                });
            }
            let mut y = v.data().to_vec();
            for row in y.chunks_mut(len) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                row.iter_mut().for_each(|x| *x -= lse);
            }
            (Tensor::new(v.shape().to_vec(), y)?, len)
        };
        Ok(self.unary(Op::LogSoftmax { a: self.id, len }, value))
    }

    /// Normalizes the last axis to zero mean and unit (population) variance.
    /// No learned gain or bias.
    pub fn layer_norm(&self) -> Result<Var<'t>> {
        let (value, len, inv_std) = {
            let v = self.value();
            let len = v.last_dim();
            if v.rank() == 0 || len < 2 {
                return Err(TensorError::Domain {
                    op: "layer_norm",
                    msg: format!("last axis must have length >= 2, shape {:?}", v.shape()),
                });
            }
            let mut y = v.data().to_vec();
            let mut inv_std = Vec::with_capacity(y.len() / len);
            for row in y.chunks_mut(len) {
                let mean = row.iter().sum::<f64>() / len as f64;
                let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / len as f64;
                let istd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                row.iter_mut().for_each(|x| *x = (*x - mean) * istd);
                inv_std.push(istd);
            }
            (Tensor::new(v.shape().to_vec(), y)?, len, inv_std)
        };
        Ok(self.unary(Op::LayerNorm { a: self.id, len, inv_std }, value))
    }

    /// Euclidean norm over the last axis; that axis is removed.
    pub fn l2_norm(&self) -> Result<Var<'t>> {
        let (value, len) = {
            let v = self.value();
            if v.rank() == 0 {
                return Err(TensorError::Domain {
                    op: "l2_norm",
                    msg: "scalar input".into(),
                });
            }
            let len = v.last_dim();
            let data = v
                .data()
                .chunks(len)
                .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
                .collect();
            let shape = v.shape()[..v.rank() - 1].to_vec();
            (Tensor::new(shape, data)?, len)
        };
        Ok(self.unary(Op::Norm { a: self.id, len }, value))
    }

    pub fn sum(&self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        self.unary(Op::Sum { a: self.id }, Tensor::scalar(s))
    }

    pub fn mean(&self) -> Var<'t> {
        let m = {
            let v = self.value();
            v.data().iter().sum::<f64>() / v.len() as f64
        };
        self.unary(Op::Mean { a: self.id }, Tensor::scalar(m))
    }

    /// Stacks equal-shaped tensors along a new leading axis.
    pub fn stack(items: &[Var<'t>]) -> Result<Var<'t>> {
        let first = items.first().ok_or(TensorError::Domain {
            op: "stack",
            msg: "nothing to stack".into(),
        })?;
        let tape = first.tape;
        let value = {
            let base = first.shape();
            let mut data = Vec::new();
            for it in items {
                same_tape(first, it);
                let v = it.value();
                if v.shape() != base.as_slice() {
                    return Err(shape_err("stack", &base, v.shape()));
                }
                data.extend_from_slice(v.data());
            }
            let mut shape = vec![items.len()];
            shape.extend(base);
            Tensor::new(shape, data)?
        };
        let inputs: Vec<usize> = items.iter().map(|v| v.id).collect();
        let tracked = first.tracked_any(&inputs);
        Ok(tape.push(value, Op::Stack { inputs }, tracked))
    }

    /// Concatenates along an existing `axis`; other axes must agree.
    pub fn concat(items: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = items.first().ok_or(TensorError::Domain {
            op: "concat",
            msg: "nothing to concatenate".into(),
        })?;
        let tape = first.tape;
        let (value, outer, widths) = {
            let base = first.shape();
            if axis >= base.len() {
                return Err(TensorError::Domain {
                    op: "concat",
                    msg: format!("axis {axis} out of range for shape {base:?}"),
                });
            }
            let outer: usize = base[..axis].iter().product();
            let inner: usize = base[axis + 1..].iter().product();
            let mut widths = Vec::with_capacity(items.len());
            let mut axis_len = 0;
            for it in items {
                same_tape(first, it);
                let s = it.shape();
                let compatible = s.len() == base.len()
                    && s[..axis] == base[..axis]
                    && s[axis + 1..] == base[axis + 1..];
                if !compatible {
                    return Err(shape_err("concat", &base, &s));
                }
                widths.push(s[axis] * inner);
                axis_len += s[axis];
            }
            let total: usize = widths.iter().sum();
            let mut data = Vec::with_capacity(outer * total);
            for o in 0..outer {
                for (it, &w) in items.iter().zip(&widths) {
                    data.extend_from_slice(&it.value().data()[o * w..(o + 1) * w]);
                }
            }
            let mut shape = base.clone();
            shape[axis] = axis_len;
            (Tensor::new(shape, data)?, outer, widths)
        };
        let inputs: Vec<usize> = items.iter().map(|v| v.id).collect();
        let tracked = first.tracked_any(&inputs);
        Ok(tape.push(value, Op::Concat { inputs, outer, widths }, tracked))
    }

    /// Selects rows (first-axis slices) by index; indices may repeat.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Var<'t>> {
        let (value, row_len) = {
            let v = self.value();
            let rows = *v.shape().first().ok_or(TensorError::Domain {
                op: "gather_rows",
                msg: "scalar input".into(),
            })?;
            let row_len = v.len() / rows.max(1);
            let mut data = Vec::with_capacity(indices.len() * row_len);
            for &i in indices {
                if i >= rows {
                    return Err(TensorError::Domain {
                        op: "gather_rows",
                        msg: format!("row {i} out of range for {rows} rows"),
                    });
                }
                data.extend_from_slice(&v.data()[i * row_len..(i + 1) * row_len]);
            }
            let mut shape = v.shape().to_vec();
            shape[0] = indices.len();
            (Tensor::new(shape, data)?, row_len)
        };
        let op = Op::Gather { a: self.id, indices: indices.to_vec(), row_len };
        Ok(self.unary(op, value))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.to_tensor().reshape(shape.to_vec())?;
        Ok(self.unary(Op::Reshape { a: self.id }, value))
    }

    /// Picks one element (flat row-major index) as a scalar.
    pub fn index(&self, i: usize) -> Result<Var<'t>> {
        let x = {
            let v = self.value();
            *v.data().get(i).ok_or(TensorError::Domain {
                op: "index",
                msg: format!("index {i} out of range for {} elements", v.len()),
            })?
        };
        Ok(self.unary(Op::Index { a: self.id, i }, Tensor::scalar(x)))
    }

    /// Elementwise binary cross-entropy of `sigmoid(self)` against `target`,
    /// computed from the logits for stability.
    pub fn bce_with_logits(&self, target: f64) -> Var<'t> {
        // max(x,0) - x*y + ln(1 + e^{-|x|})
        self.map(Op::BceLogits { a: self.id, target }, |x| {
            x.max(0.0) - x * target + (-x.abs()).exp().ln_1p()
        })
    }
}
