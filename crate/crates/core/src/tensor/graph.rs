use rand::Rng;

use super::Tensor;
use crate::error::{Result, SmarnetError};

/// Probability floor used by [`Graph::nll`].
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
}

/// How the right operand of an elementwise op lines up with the left one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Broadcast {
    Same,
    /// Right operand is a vector added to / multiplied into every row.
    Rows,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Elem {
        kind: ElemOp,
        a: Var,
        b: Var,
        bcast: Broadcast,
    },
    ScaleShift {
        x: Var,
        scale: f64,
    },
    Sigmoid(Var),
    Tanh(Var),
    MatMul {
        a: Var,
        b: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Transpose(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Row {
        x: Var,
        i: usize,
    },
    StackRows(Vec<Var>),
    GatherRows {
        table: Var,
        idx: Vec<Option<usize>>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        width: usize,
    },
    MaxOverRows {
        x: Var,
        argmax: Vec<usize>,
    },
    AddCol {
        x: Var,
        v: Var,
    },
    Sum(Var),
    SumSquares(Var),
    Nll {
        p: Var,
        idx: usize,
        floored: bool,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run computation graph.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that required one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_of(shape: &[usize]) -> (usize, usize) {
    match shape {
        [r, c] => (*r, *c),
        [n] => (1, *n),
        _ => (1, 1),
    }
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn elementwise(&mut self, kind: ElemOp, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        let bcast = if sa == sb {
            Broadcast::Same
        } else if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            Broadcast::Rows
        } else {
            let name = match kind {
                ElemOp::Add => "add",
                ElemOp::Sub => "sub",
                ElemOp::Mul => "mul",
            };
            return Err(SmarnetError::shape(name, sa, sb));
        };
        let av = self.value(a);
        let bv = self.value(b).data();
        let cols = av.cols();
        let f = |x: f64, y: f64| match kind {
            ElemOp::Add => x + y,
            ElemOp::Sub => x - y,
            ElemOp::Mul => x * y,
        };
        let data: Vec<f64> = match bcast {
            Broadcast::Same => av.data().iter().zip(bv).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Rows => av
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, bv[i % cols]))
                .collect(),
        };
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Elem { kind, a, b, bcast }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElemOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElemOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElemOp::Mul, a, b)
    }

    /// `scale * x + shift`
    pub fn scale_shift(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| scale * v + shift).collect();
        let value = Tensor {
            shape: xv.shape().to_vec(),
            data,
        };
        let rg = self.rg(x);
        self.push(value, Op::ScaleShift { x, scale }, rg)
    }

    /// `1 - x`
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.scale_shift(x, -1.0, 1.0)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| f(v)).collect();
        let value = Tensor {
            shape: xv.shape().to_vec(),
            data,
        };
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid_scalar, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// Matrix product. Supports `(m,k)x(k,n)`, `(m,k)x(k)` and `(k)x(k,n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let (m, k, n, out_shape) = match (sa.as_slice(), sb.as_slice()) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n, vec![*m, *n]),
            ([m, k], [k2]) if k == k2 => (*m, *k, 1, vec![*m]),
            ([k], [k2, n]) if k == k2 => (1, *k, *n, vec![*n]),
            _ => return Err(SmarnetError::shape("matmul", &sa, &sb)),
        };
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += aik * bv;
                }
            }
        }
        let value = Tensor::new(out_shape, out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul { a, b }, rg))
    }

    /// Affine map `x W^T + b` with `W` of shape `(out, in)`; `x` is a vector
    /// of length `in` or a matrix `(m, in)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let (out_dim, in_dim) = match sw.as_slice() {
            [o, i] => (*o, *i),
            _ => return Err(SmarnetError::shape("linear", &sx, &sw)),
        };
        let (m, out_shape) = match sx.as_slice() {
            [i] if *i == in_dim => (1, vec![out_dim]),
            [m, i] if *i == in_dim => (*m, vec![*m, out_dim]),
            _ => return Err(SmarnetError::shape("linear", &sx, &sw)),
        };
        if let Some(b) = b {
            if self.shape(b) != [out_dim] {
                return Err(SmarnetError::shape("linear bias", &[out_dim], self.shape(b)));
            }
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = b.map(|b| self.value(b).data());
        let mut out = vec![0.0; m * out_dim];
        for r in 0..m {
            let xr = &xv[r * in_dim..(r + 1) * in_dim];
            for o in 0..out_dim {
                let wr = &wv[o * in_dim..(o + 1) * in_dim];
                let mut acc = bv.map_or(0.0, |b| b[o]);
                for (xi, wi) in xr.iter().zip(wr) {
                    acc += xi * wi;
                }
                out[r * out_dim + o] = acc;
            }
        }
        let value = Tensor::new(out_shape, out)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = match xv.shape() {
            [r, c] => (*r, *c),
            s => return Err(SmarnetError::shape("transpose", s, &[])),
        };
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv.data()[i * c + j];
            }
        }
        let value = Tensor::matrix(c, r, out)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Transpose(x), rg))
    }

    /// Softmax along `axis`. The axis maximum is subtracted before
    /// exponentiation.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        if axis >= shape.len().max(1) || shape.is_empty() {
            return Err(SmarnetError::invalid(format!(
                "softmax axis {axis} invalid for shape {shape:?}"
            )));
        }
        let (r, c) = shape_of(&shape);
        let mut out = xv.data().to_vec();
        // lanes: (start, stride, len)
        let lanes: Vec<(usize, usize, usize)> = if shape.len() == 1 || axis == 1 {
            (0..r).map(|i| (i * c, 1, c)).collect()
        } else {
            (0..c).map(|j| (j, c, r)).collect()
        };
        for (start, stride, len) in lanes {
            let idx = |t: usize| start + t * stride;
            let max = (0..len).map(|t| out[idx(t)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for t in 0..len {
                let e = (out[idx(t)] - max).exp();
                out[idx(t)] = e;
                total += e;
            }
            for t in 0..len {
                out[idx(t)] /= total;
            }
        }
        let value = Tensor::new(shape, out)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Softmax { x, axis }, rg))
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| SmarnetError::invalid("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(SmarnetError::invalid(format!(
                "concat axis {axis} invalid for shape {base:?}"
            )));
        }
        for p in &parts[1..] {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(SmarnetError::shape("concat", &base, s));
            }
        }
        let mut shape = base.clone();
        shape[axis] = parts.iter().map(|p| self.shape(*p)[axis]).sum();
        let data = if base.len() == 1 || axis == 0 {
            parts
                .iter()
                .flat_map(|p| self.value(*p).data().iter().copied())
                .collect()
        } else {
            let rows = base[0];
            let mut data = Vec::with_capacity(rows * shape[1]);
            for r in 0..rows {
                for p in parts {
                    data.extend_from_slice(self.value(*p).row(r));
                }
            }
            data
        };
        let value = Tensor::new(shape, data)?;
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || i >= xv.rows() {
            return Err(SmarnetError::invalid(format!(
                "row {i} out of range for shape {:?}",
                xv.shape()
            )));
        }
        let value = Tensor::vector(xv.row(i).to_vec());
        let rg = self.rg(x);
        Ok(self.push(value, Op::Row { x, i }, rg))
    }

    /// Stack equal-length vectors into a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows
            .first()
            .ok_or_else(|| SmarnetError::invalid("stack of zero rows"))?;
        let width = match self.shape(*first) {
            [n] => *n,
            s => return Err(SmarnetError::shape("stack_rows", s, &[])),
        };
        let mut data = Vec::with_capacity(rows.len() * width);
        for r in rows {
            let s = self.shape(*r);
            if s != [width] {
                return Err(SmarnetError::shape("stack_rows", &[width], s));
            }
            data.extend_from_slice(self.value(*r).data());
        }
        let value = Tensor::matrix(rows.len(), width, data)?;
        let rg = rows.iter().any(|r| self.rg(*r));
        Ok(self.push(value, Op::StackRows(rows.to_vec()), rg))
    }

    /// Gather table rows; `None` yields a zero row.
    pub fn gather_rows(&mut self, table: Var, idx: &[Option<usize>]) -> Result<Var> {
        let tv = self.value(table);
        if tv.rank() != 2 {
            return Err(SmarnetError::shape("gather_rows", tv.shape(), &[]));
        }
        let (rows, width) = (tv.rows(), tv.cols());
        let mut data = Vec::with_capacity(idx.len() * width);
        for i in idx {
            match i {
                Some(i) if *i < rows => data.extend_from_slice(tv.row(*i)),
                Some(i) => {
                    return Err(SmarnetError::invalid(format!(
                        "gather index {i} out of range for {rows} rows"
                    )))
                }
                None => data.extend(std::iter::repeat_n(0.0, width)),
            }
        }
        let value = Tensor::matrix(idx.len(), width, data)?;
        let rg = self.rg(table);
        Ok(self.push(
            value,
            Op::GatherRows {
                table,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// Valid 1-D convolution over the rows of `x (L, c)` with filters
    /// `w (out, width * c)` laid out window-major, plus bias `b (out)`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, width: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let (len, ch) = match sx.as_slice() {
            [l, c] => (*l, *c),
            _ => return Err(SmarnetError::shape("conv1d", &sx, &sw)),
        };
        let out_ch = match sw.as_slice() {
            [o, k] if *k == width * ch => *o,
            _ => return Err(SmarnetError::shape("conv1d", &sx, &sw)),
        };
        if self.shape(b) != [out_ch] {
            return Err(SmarnetError::shape("conv1d bias", &[out_ch], self.shape(b)));
        }
        if width == 0 || len < width {
            return Err(SmarnetError::invalid(format!(
                "conv1d input length {len} shorter than filter width {width}"
            )));
        }
        let positions = len - width + 1;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let k = width * ch;
        let mut out = vec![0.0; positions * out_ch];
        for t in 0..positions {
            let window = &xv[t * ch..t * ch + k];
            for o in 0..out_ch {
                let wr = &wv[o * k..(o + 1) * k];
                let mut acc = bv[o];
                for (a, c) in window.iter().zip(wr) {
                    acc += a * c;
                }
                out[t * out_ch + o] = acc;
            }
        }
        let value = Tensor::matrix(positions, out_ch, out)?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(value, Op::Conv1d { x, w, b, width }, rg))
    }

    /// Column-wise maximum over the rows of a matrix (max-over-time pooling).
    pub fn max_over_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || xv.rows() == 0 {
            return Err(SmarnetError::shape("max_over_rows", xv.shape(), &[]));
        }
        let (r, c) = (xv.rows(), xv.cols());
        let mut argmax = vec![0usize; c];
        let mut out = xv.row(0).to_vec();
        for i in 1..r {
            for (j, v) in xv.row(i).iter().enumerate() {
                if *v > out[j] {
                    out[j] = *v;
                    argmax[j] = i;
                }
            }
        }
        let value = Tensor::vector(out);
        let rg = self.rg(x);
        Ok(self.push(value, Op::MaxOverRows { x, argmax }, rg))
    }

    /// Adds `v[i]` to every entry of row `i`.
    pub fn add_col(&mut self, x: Var, v: Var) -> Result<Var> {
        let xv = self.value(x);
        let vv = self.value(v);
        if xv.rank() != 2 || vv.shape() != [xv.rows()] {
            return Err(SmarnetError::shape("add_col", xv.shape(), vv.shape()));
        }
        let c = xv.cols();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(k, x)| x + vv.data()[k / c])
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(v);
        Ok(self.push(value, Op::AddCol { x, v }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_squares();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumSquares(x), rg)
    }

    /// `-ln(max(p[idx], 1e-12))` for a probability vector `p`.
    pub fn nll(&mut self, p: Var, idx: usize) -> Result<Var> {
        let pv = self.value(p);
        if pv.rank() != 1 || idx >= pv.len() {
            return Err(SmarnetError::invalid(format!(
                "nll index {idx} out of range for shape {:?}",
                pv.shape()
            )));
        }
        let prob = pv.data()[idx];
        let floored = !(prob > LOG_FLOOR);
        if floored {
            log::warn!("probability {prob:e} at gold index {idx} clamped to {LOG_FLOOR:e}");
        }
        let value = Tensor::scalar(-prob.max(LOG_FLOOR).ln());
        let rg = self.rg(p);
        Ok(self.push(value, Op::Nll { p, idx, floored }, rg))
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is 0.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(SmarnetError::invalid(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(SmarnetError::invalid(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: &[f64]) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, d) in g.iter_mut().zip(delta) {
                    *a += d;
                }
            }
            slot @ None => *slot = Some(delta.to_vec()),
        }
    }

    fn accumulate_with(
        &self,
        grads: &mut [Option<Vec<f64>>],
        v: Var,
        f: impl FnOnce(&mut [f64]),
    ) {
        if !self.rg(v) {
            return;
        }
        let slot = &mut grads[v.0];
        let g = slot.get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        f(g);
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Elem { kind, a, b, bcast } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let cols = self.value(*a).cols();
                let bi = |i: usize| match bcast {
                    Broadcast::Same => i,
                    Broadcast::Rows => i % cols,
                };
                match kind {
                    ElemOp::Add | ElemOp::Sub => {
                        self.accumulate(grads, *a, g);
                        let sign = if *kind == ElemOp::Add { 1.0 } else { -1.0 };
                        self.accumulate_with(grads, *b, |gb| {
                            for (i, gi) in g.iter().enumerate() {
                                gb[bi(i)] += sign * gi;
                            }
                        });
                    }
                    ElemOp::Mul => {
                        self.accumulate_with(grads, *a, |ga| {
                            for (i, gi) in g.iter().enumerate() {
                                ga[i] += gi * bv[bi(i)];
                            }
                        });
                        self.accumulate_with(grads, *b, |gb| {
                            for (i, gi) in g.iter().enumerate() {
                                gb[bi(i)] += gi * av[i];
                            }
                        });
                    }
                }
            }
            Op::ScaleShift { x, scale } => {
                self.accumulate_with(grads, *x, |gx| {
                    for (a, gi) in gx.iter_mut().zip(g) {
                        *a += scale * gi;
                    }
                });
            }
            Op::Sigmoid(x) => {
                self.accumulate_with(grads, *x, |gx| {
                    for ((a, gi), y) in gx.iter_mut().zip(g).zip(out) {
                        *a += gi * y * (1.0 - y);
                    }
                });
            }
            Op::Tanh(x) => {
                self.accumulate_with(grads, *x, |gx| {
                    for ((a, gi), y) in gx.iter_mut().zip(g).zip(out) {
                        *a += gi * (1.0 - y * y);
                    }
                });
            }
            Op::MatMul { a, b } => {
                let at = self.value(*a);
                let bt = self.value(*b);
                let (m, k) = if at.rank() == 2 {
                    (at.rows(), at.cols())
                } else {
                    (1, at.len())
                };
                let n = if bt.rank() == 2 { bt.cols() } else { 1 };
                let av = at.data();
                let bv = bt.data();
                // dA = G B^T, dB = A^T G with G viewed as (m, n)
                self.accumulate_with(grads, *a, |ga| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let br = &bv[p * n..(p + 1) * n];
                            let mut acc = 0.0;
                            for (x, y) in gr.iter().zip(br) {
                                acc += x * y;
                            }
                            ga[i * k + p] += acc;
                        }
                    }
                });
                self.accumulate_with(grads, *b, |gb| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            let row = &mut gb[p * n..(p + 1) * n];
                            for (o, x) in row.iter_mut().zip(gr) {
                                *o += aip * x;
                            }
                        }
                    }
                });
            }
            Op::Linear { x, w, b } => {
                let xt = self.value(*x);
                let wt = self.value(*w);
                let (out_dim, in_dim) = (wt.rows(), wt.cols());
                let m = xt.len() / in_dim;
                let xv = xt.data();
                let wv = wt.data();
                self.accumulate_with(grads, *x, |gx| {
                    for r in 0..m {
                        let gr = &g[r * out_dim..(r + 1) * out_dim];
                        let xr = &mut gx[r * in_dim..(r + 1) * in_dim];
                        for (o, go) in gr.iter().enumerate() {
                            if *go == 0.0 {
                                continue;
                            }
                            let wr = &wv[o * in_dim..(o + 1) * in_dim];
                            for (a, wi) in xr.iter_mut().zip(wr) {
                                *a += go * wi;
                            }
                        }
                    }
                });
                self.accumulate_with(grads, *w, |gw| {
                    for r in 0..m {
                        let gr = &g[r * out_dim..(r + 1) * out_dim];
                        let xr = &xv[r * in_dim..(r + 1) * in_dim];
                        for (o, go) in gr.iter().enumerate() {
                            if *go == 0.0 {
                                continue;
                            }
                            let wr = &mut gw[o * in_dim..(o + 1) * in_dim];
                            for (a, xi) in wr.iter_mut().zip(xr) {
                                *a += go * xi;
                            }
                        }
                    }
                });
                if let Some(b) = b {
                    self.accumulate_with(grads, *b, |gb| {
                        for r in 0..m {
                            for (a, go) in gb.iter_mut().zip(&g[r * out_dim..(r + 1) * out_dim]) {
                                *a += go;
                            }
                        }
                    });
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (self.value(*x).rows(), self.value(*x).cols());
                self.accumulate_with(grads, *x, |gx| {
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let shape = node.value.shape();
                let (r, c) = shape_of(shape);
                let lanes: Vec<(usize, usize, usize)> = if shape.len() == 1 || *axis == 1 {
                    (0..r).map(|i| (i * c, 1, c)).collect()
                } else {
                    (0..c).map(|j| (j, c, r)).collect()
                };
                self.accumulate_with(grads, *x, |gx| {
                    for (start, stride, len) in lanes {
                        let idx = |t: usize| start + t * stride;
                        let dot: f64 = (0..len).map(|t| g[idx(t)] * out[idx(t)]).sum();
                        for t in 0..len {
                            gx[idx(t)] += out[idx(t)] * (g[idx(t)] - dot);
                        }
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                if shape.len() == 1 || *axis == 0 {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        self.accumulate(grads, *p, &g[offset..offset + n]);
                        offset += n;
                    }
                } else {
                    let (rows, total) = (shape[0], shape[1]);
                    let mut col = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        self.accumulate_with(grads, *p, |gp| {
                            for r in 0..rows {
                                for (a, gi) in gp[r * w..(r + 1) * w]
                                    .iter_mut()
                                    .zip(&g[r * total + col..r * total + col + w])
                                {
                                    *a += gi;
                                }
                            }
                        });
                        col += w;
                    }
                }
            }
            Op::Row { x, i } => {
                let c = self.value(*x).cols();
                self.accumulate_with(grads, *x, |gx| {
                    for (a, gi) in gx[i * c..(i + 1) * c].iter_mut().zip(g) {
                        *a += gi;
                    }
                });
            }
            Op::StackRows(rows) => {
                let w = node.value.cols();
                for (i, r) in rows.iter().enumerate() {
                    self.accumulate(grads, *r, &g[i * w..(i + 1) * w]);
                }
            }
            Op::GatherRows { table, idx } => {
                let w = node.value.cols();
                self.accumulate_with(grads, *table, |gt| {
                    for (k, i) in idx.iter().enumerate() {
                        if let Some(i) = i {
                            for (a, gi) in gt[i * w..(i + 1) * w].iter_mut().zip(&g[k * w..(k + 1) * w]) {
                                *a += gi;
                            }
                        }
                    }
                });
            }
            Op::Conv1d { x, w, b, width } => {
                let ch = self.value(*x).cols();
                let out_ch = self.value(*w).rows();
                let k = width * ch;
                let positions = node.value.rows();
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                self.accumulate_with(grads, *x, |gx| {
                    for t in 0..positions {
                        let window = &mut gx[t * ch..t * ch + k];
                        for o in 0..out_ch {
                            let go = g[t * out_ch + o];
                            if go == 0.0 {
                                continue;
                            }
                            for (a, wi) in window.iter_mut().zip(&wv[o * k..(o + 1) * k]) {
                                *a += go * wi;
                            }
                        }
                    }
                });
                self.accumulate_with(grads, *w, |gw| {
                    for t in 0..positions {
                        let window = &xv[t * ch..t * ch + k];
                        for o in 0..out_ch {
                            let go = g[t * out_ch + o];
                            if go == 0.0 {
                                continue;
                            }
                            for (a, xi) in gw[o * k..(o + 1) * k].iter_mut().zip(window) {
                                *a += go * xi;
                            }
                        }
                    }
                });
                self.accumulate_with(grads, *b, |gb| {
                    for t in 0..positions {
                        for (a, gi) in gb.iter_mut().zip(&g[t * out_ch..(t + 1) * out_ch]) {
                            *a += gi;
                        }
                    }
                });
            }
            Op::MaxOverRows { x, argmax } => {
                let c = self.value(*x).cols();
                self.accumulate_with(grads, *x, |gx| {
                    for (j, &i) in argmax.iter().enumerate() {
                        gx[i * c + j] += g[j];
                    }
                });
            }
            Op::AddCol { x, v } => {
                let c = node.value.cols();
                self.accumulate(grads, *x, g);
                self.accumulate_with(grads, *v, |gv| {
                    for (k, gi) in g.iter().enumerate() {
                        gv[k / c] += gi;
                    }
                });
            }
            Op::Sum(x) => {
                self.accumulate_with(grads, *x, |gx| {
                    for a in gx.iter_mut() {
                        *a += g[0];
                    }
                });
            }
            Op::SumSquares(x) => {
                let xv = self.value(*x).data();
                self.accumulate_with(grads, *x, |gx| {
                    for (a, xi) in gx.iter_mut().zip(xv) {
                        *a += 2.0 * xi * g[0];
                    }
                });
            }
            Op::Nll { p, idx, floored } => {
                if !floored {
                    let prob = self.value(*p).data()[*idx];
                    self.accumulate_with(grads, *p, |gp| gp[*idx] -= g[0] / prob);
                }
            }
            Op::Dropout { x, mask } => {
                self.accumulate_with(grads, *x, |gx| {
                    for ((a, gi), m) in gx.iter_mut().zip(g).zip(mask) {
                        *a += gi * m;
                    }
                });
            }
        }
    }
}
