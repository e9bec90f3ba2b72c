use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

use crate::{Error, Result};

/// A handle to one node of the computation graph.
///
/// Cloning a `Value` clones the handle, not the storage. A node is *tracked*
/// when it carries a gradient buffer; untracked nodes are constants and are
/// skipped by the backward sweep.
#[derive(Clone)]
pub struct Value {
    node: Rc<RefCell<Node>>,
}

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    op: Op,
}

enum Op {
    Leaf,
    Add(Value, Value),
    Sub(Value, Value),
    Mul(Value, Value),
    /// Vector times a length-1 value, broadcast over all entries.
    MulScalar(Value, Value),
    Scale(Value, f64),
    Shift(Value),
    Matmul(Value, Value),
    Softmax(Value),
    CumsumFwd(Value),
    CumsumBwd(Value),
    Sigmoid(Value),
    Tanh(Value),
    Relu(Value),
    Ln(Value),
    Clamp(Value, f64, f64),
    Mean(Value),
    Sum(Value),
    Concat(Vec<Value>),
    Slice(Value, usize, usize),
    RepeatChunks(Value, usize),
}

impl Op {
    fn parents(&self) -> Vec<Value> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MulScalar(a, b)
            | Op::Matmul(a, b) => vec![a.clone(), b.clone()],
            Op::Scale(a, _)
            | Op::Shift(a)
            | Op::Softmax(a)
            | Op::CumsumFwd(a)
            | Op::CumsumBwd(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Ln(a)
            | Op::Clamp(a, _, _)
            | Op::Mean(a)
            | Op::Sum(a)
            | Op::Slice(a, _, _)
            | Op::RepeatChunks(a, _) => vec![a.clone()],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

impl std::fmt::Debug for Value {
    // Deliberately shallow: printing parents would walk the whole graph.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.node.borrow();
        f.debug_struct("Value")
            .field("shape", &n.shape)
            .field("data", &n.data)
            .field("tracked", &n.grad.is_some())
            .finish()
    }
}

fn dim_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Dimension {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl Value {
    fn from_node(node: Node) -> Self {
        Value {
            node: Rc::new(RefCell::new(node)),
        }
    }

    /// A leaf node. Tracked leaves accumulate gradients during backward.
    pub fn leaf(shape: Vec<usize>, data: Vec<f64>, tracked: bool) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Input(format!(
                "leaf shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        let grad = tracked.then(|| vec![0.0; data.len()]);
        Ok(Value::from_node(Node {
            shape,
            data,
            grad,
            op: Op::Leaf,
        }))
    }

    /// Untracked 1-D constant.
    pub fn constant(data: Vec<f64>) -> Self {
        let shape = vec![data.len()];
        Value::from_node(Node {
            shape,
            data,
            grad: None,
            op: Op::Leaf,
        })
    }

    /// Untracked length-1 constant.
    pub fn scalar(x: f64) -> Self {
        Value::constant(vec![x])
    }

    /// Untracked 1-D zero vector.
    pub fn zeros(n: usize) -> Self {
        Value::constant(vec![0.0; n])
    }

    pub fn shape(&self) -> Vec<usize> {
        self.node.borrow().shape.clone()
    }

    pub fn len(&self) -> usize {
        self.node.borrow().data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_tracked(&self) -> bool {
        self.node.borrow().grad.is_some()
    }

    /// Copy of the node's data.
    pub fn to_vec(&self) -> Vec<f64> {
        self.node.borrow().data.clone()
    }

    /// Borrow the node's data without copying.
    pub fn with_data<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.node.borrow().data)
    }

    /// The single entry of a length-1 value.
    pub fn item(&self) -> f64 {
        let n = self.node.borrow();
        debug_assert_eq!(n.data.len(), 1, "item() on non-scalar value");
        n.data[0]
    }

    /// Copy of the accumulated gradient, if tracked.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.node.borrow().grad.clone()
    }

    fn ptr(&self) -> *const RefCell<Node> {
        Rc::as_ptr(&self.node)
    }

    fn result(shape: Vec<usize>, data: Vec<f64>, op: Op) -> Value {
        let tracked = op.parents().iter().any(Value::is_tracked);
        let grad = tracked.then(|| vec![0.0; data.len()]);
        Value::from_node(Node {
            shape,
            data,
            grad,
            op,
        })
    }

    fn require_1d(&self, op: &'static str) -> Result<usize> {
        let n = self.node.borrow();
        if n.shape.len() != 1 {
            return Err(dim_err(op, &n.shape, &[]));
        }
        Ok(n.shape[0])
    }

    // ---- elementwise binary -------------------------------------------------

    fn zip_same_shape(
        &self,
        other: &Value,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        let a = self.node.borrow();
        let b = other.node.borrow();
        if a.shape != b.shape {
            return Err(dim_err(name, &a.shape, &b.shape));
        }
        let data = a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok((a.shape.clone(), data))
    }

    pub fn add(&self, other: &Value) -> Result<Value> {
        let (shape, data) = self.zip_same_shape(other, "add", |x, y| x + y)?;
        Ok(Value::result(shape, data, Op::Add(self.clone(), other.clone())))
    }

    pub fn sub(&self, other: &Value) -> Result<Value> {
        let (shape, data) = self.zip_same_shape(other, "sub", |x, y| x - y)?;
        Ok(Value::result(shape, data, Op::Sub(self.clone(), other.clone())))
    }

    /// Hadamard product.
    pub fn mul(&self, other: &Value) -> Result<Value> {
        let (shape, data) = self.zip_same_shape(other, "mul", |x, y| x * y)?;
        Ok(Value::result(shape, data, Op::Mul(self.clone(), other.clone())))
    }

    /// Broadcast multiply by a length-1 value.
    pub fn mul_scalar(&self, scalar: &Value) -> Result<Value> {
        if scalar.len() != 1 {
            return Err(dim_err("mul_scalar", &self.shape(), &scalar.shape()));
        }
        let s = scalar.item();
        let a = self.node.borrow();
        let data = a.data.iter().map(|&x| x * s).collect();
        let shape = a.shape.clone();
        drop(a);
        Ok(Value::result(
            shape,
            data,
            Op::MulScalar(self.clone(), scalar.clone()),
        ))
    }

    /// Multiply every entry by a compile-time constant.
    pub fn scale(&self, c: f64) -> Value {
        let a = self.node.borrow();
        let data = a.data.iter().map(|&x| x * c).collect();
        let shape = a.shape.clone();
        drop(a);
        Value::result(shape, data, Op::Scale(self.clone(), c))
    }

    /// Add a constant to every entry.
    pub fn shift(&self, c: f64) -> Value {
        let a = self.node.borrow();
        let data = a.data.iter().map(|&x| x + c).collect();
        let shape = a.shape.clone();
        drop(a);
        Value::result(shape, data, Op::Shift(self.clone()))
    }

    // ---- linear algebra -----------------------------------------------------

    /// Matrix product. `a` must be 2-D `[m, k]`; `b` is either 1-D `[k]`
    /// (returns `[m]`) or 2-D `[k, n]` (returns `[m, n]`).
    pub fn matmul(&self, other: &Value) -> Result<Value> {
        let a = self.node.borrow();
        let b = other.node.borrow();
        if a.shape.len() != 2 {
            return Err(dim_err("matmul", &a.shape, &b.shape));
        }
        let (m, k) = (a.shape[0], a.shape[1]);
        match b.shape.len() {
            1 => {
                if b.shape[0] != k {
                    return Err(dim_err("matmul", &a.shape, &b.shape));
                }
                let mut out = vec![0.0; m];
                for i in 0..m {
                    let row = &a.data[i * k..(i + 1) * k];
                    let mut acc = 0.0;
                    for j in 0..k {
                        acc += row[j] * b.data[j];
                    }
                    out[i] = acc;
                }
                drop(a);
                drop(b);
                Ok(Value::result(
                    vec![m],
                    out,
                    Op::Matmul(self.clone(), other.clone()),
                ))
            }
            2 => {
                if b.shape[0] != k {
                    return Err(dim_err("matmul", &a.shape, &b.shape));
                }
                let n = b.shape[1];
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..k {
                        let aij = a.data[i * k + j];
                        if aij == 0.0 {
                            continue;
                        }
                        for c in 0..n {
                            out[i * n + c] += aij * b.data[j * n + c];
                        }
                    }
                }
                drop(a);
                drop(b);
                Ok(Value::result(
                    vec![m, n],
                    out,
                    Op::Matmul(self.clone(), other.clone()),
                ))
            }
            _ => Err(dim_err("matmul", &a.shape, &b.shape)),
        }
    }

    // ---- nonlinearities -----------------------------------------------------

    /// Numerically stable softmax over a 1-D value.
    pub fn softmax(&self) -> Result<Value> {
        self.require_1d("softmax")?;
        let a = self.node.borrow();
        if a.data.is_empty() {
            return Err(Error::Input("softmax of empty vector".into()));
        }
        if a.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("softmax input contains non-finite entries".into()));
        }
        let max = a.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = a.data.iter().map(|&x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let data: Vec<f64> = exps.iter().map(|&e| e / total).collect();
        let shape = a.shape.clone();
        drop(a);
        Ok(Value::result(shape, data, Op::Softmax(self.clone())))
    }

    /// Forward cumulative sum: `out[i] = sum(v[..=i])`.
    pub fn cumsum_fwd(&self) -> Result<Value> {
        self.require_1d("cumsum_fwd")?;
        let a = self.node.borrow();
        let mut acc = 0.0;
        let data: Vec<f64> = a
            .data
            .iter()
            .map(|&x| {
                acc += x;
                acc
            })
            .collect();
        let shape = a.shape.clone();
        drop(a);
        Ok(Value::result(shape, data, Op::CumsumFwd(self.clone())))
    }

    /// Backward cumulative sum: `out[i] = sum(v[i..])`.
    pub fn cumsum_bwd(&self) -> Result<Value> {
        self.require_1d("cumsum_bwd")?;
        let a = self.node.borrow();
        let mut acc = 0.0;
        let mut data = vec![0.0; a.data.len()];
        for i in (0..a.data.len()).rev() {
            acc += a.data[i];
            data[i] = acc;
        }
        let shape = a.shape.clone();
        drop(a);
        Ok(Value::result(shape, data, Op::CumsumBwd(self.clone())))
    }

    pub fn sigmoid(&self) -> Value {
        let a = self.node.borrow();
        let data = a
            .data
            .iter()
            .map(|&x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            })
            .collect();
        let shape = a.shape.clone();
        drop(a);
        Value::result(shape, data, Op::Sigmoid(self.clone()))
    }

    pub fn tanh(&self) -> Value {
        let a = self.node.borrow();
        let data = a.data.iter().map(|&x| x.tanh()).collect();
        let shape = a.shape.clone();
        drop(a);
        Value::result(shape, data, Op::Tanh(self.clone()))
    }

    pub fn relu(&self) -> Value {
        let a = self.node.borrow();
        let data = a.data.iter().map(|&x| x.max(0.0)).collect();
        let shape = a.shape.clone();
        drop(a);
        Value::result(shape, data, Op::Relu(self.clone()))
    }

    /// Natural log. The caller is responsible for keeping inputs positive
    /// (losses clamp first).
    pub fn ln(&self) -> Value {
        let a = self.node.borrow();
        let data = a.data.iter().map(|&x| x.ln()).collect();
        let shape = a.shape.clone();
        drop(a);
        Value::result(shape, data, Op::Ln(self.clone()))
    }

    /// Clamp entries to `[lo, hi]`. Gradient passes only through
    /// unclamped entries.
    pub fn clamp(&self, lo: f64, hi: f64) -> Value {
        let a = self.node.borrow();
        let data = a.data.iter().map(|&x| x.clamp(lo, hi)).collect();
        let shape = a.shape.clone();
        drop(a);
        Value::result(shape, data, Op::Clamp(self.clone(), lo, hi))
    }

    // ---- reductions and reshapes -------------------------------------------

    pub fn mean(&self) -> Value {
        let a = self.node.borrow();
        let n = a.data.len().max(1);
        let total: f64 = a.data.iter().sum();
        drop(a);
        Value::result(vec![1], vec![total / n as f64], Op::Mean(self.clone()))
    }

    pub fn sum(&self) -> Value {
        let a = self.node.borrow();
        let total: f64 = a.data.iter().sum();
        drop(a);
        Value::result(vec![1], vec![total], Op::Sum(self.clone()))
    }

    /// 1-D slice of `len` entries starting at `start`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Value> {
        let n = self.require_1d("slice")?;
        if start + len > n {
            return Err(Error::Input(format!(
                "slice [{start}, {}) out of bounds for length {n}",
                start + len
            )));
        }
        let a = self.node.borrow();
        let data = a.data[start..start + len].to_vec();
        drop(a);
        Ok(Value::result(
            vec![len],
            data,
            Op::Slice(self.clone(), start, len),
        ))
    }

    /// Repeat each entry `c` consecutive times: `[1, 0] -> [1, 1, 0, 0]`
    /// for `c = 2`. Backward sums gradients within each chunk.
    pub fn repeat_chunks(&self, c: usize) -> Result<Value> {
        let n = self.require_1d("repeat_chunks")?;
        if c == 0 {
            return Err(Error::Input("repeat_chunks with c = 0".into()));
        }
        let a = self.node.borrow();
        let mut data = Vec::with_capacity(n * c);
        for &x in &a.data {
            data.extend(std::iter::repeat(x).take(c));
        }
        drop(a);
        Ok(Value::result(
            vec![n * c],
            data,
            Op::RepeatChunks(self.clone(), c),
        ))
    }

    // ---- backward -----------------------------------------------------------

    /// Reverse sweep from a scalar root. Gradients accumulate into every
    /// tracked node reachable from `self`; the visited graph is then
    /// detached so intermediates drop without deep recursion.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::Input(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape()
            )));
        }
        if !self.is_tracked() {
            return Err(Error::Input(
                "backward on an untracked value: no parameters to differentiate".into(),
            ));
        }
        let order = topo_order(self);
        self.node.borrow_mut().grad = Some(vec![1.0]);
        for v in order.iter().rev() {
            v.push_grad_to_parents();
        }
        // Detach: the graph is single-use.
        for v in &order {
            v.node.borrow_mut().op = Op::Leaf;
        }
        Ok(())
    }

    fn push_grad_to_parents(&self) {
        // Take a snapshot of this node's gradient, then accumulate into each
        // parent one at a time so aliased operands (e.g. x*x) stay sound.
        let (g, out_data) = {
            let n = self.node.borrow();
            let g = match &n.grad {
                Some(g) => g.clone(),
                None => return,
            };
            (g, n.data.clone())
        };
        let n = self.node.borrow();
        match &n.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(a, |ga| add_assign(ga, &g));
                accumulate(b, |gb| add_assign(gb, &g));
            }
            Op::Sub(a, b) => {
                accumulate(a, |ga| add_assign(ga, &g));
                accumulate(b, |gb| sub_assign(gb, &g));
            }
            Op::Mul(a, b) => {
                let ad = a.to_vec();
                let bd = b.to_vec();
                accumulate(a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * bd[i];
                    }
                });
                accumulate(b, |gb| {
                    for i in 0..gb.len() {
                        gb[i] += g[i] * ad[i];
                    }
                });
            }
            Op::MulScalar(a, s) => {
                let ad = a.to_vec();
                let sv = s.item();
                accumulate(a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * sv;
                    }
                });
                accumulate(s, |gs| {
                    let mut acc = 0.0;
                    for i in 0..ad.len() {
                        acc += g[i] * ad[i];
                    }
                    gs[0] += acc;
                });
            }
            Op::Scale(a, c) => {
                let c = *c;
                accumulate(a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * c;
                    }
                });
            }
            Op::Shift(a) => {
                accumulate(a, |ga| add_assign(ga, &g));
            }
            Op::Matmul(a, b) => {
                let (ashape, ad) = {
                    let an = a.node.borrow();
                    (an.shape.clone(), an.data.clone())
                };
                let (bshape, bd) = {
                    let bn = b.node.borrow();
                    (bn.shape.clone(), bn.data.clone())
                };
                let (m, k) = (ashape[0], ashape[1]);
                if bshape.len() == 1 {
                    accumulate(a, |ga| {
                        for i in 0..m {
                            for j in 0..k {
                                ga[i * k + j] += g[i] * bd[j];
                            }
                        }
                    });
                    accumulate(b, |gb| {
                        for i in 0..m {
                            let gi = g[i];
                            if gi == 0.0 {
                                continue;
                            }
                            for j in 0..k {
                                gb[j] += ad[i * k + j] * gi;
                            }
                        }
                    });
                } else {
                    let ncols = bshape[1];
                    accumulate(a, |ga| {
                        for i in 0..m {
                            for j in 0..k {
                                let mut acc = 0.0;
                                for c in 0..ncols {
                                    acc += g[i * ncols + c] * bd[j * ncols + c];
                                }
                                ga[i * k + j] += acc;
                            }
                        }
                    });
                    accumulate(b, |gb| {
                        for j in 0..k {
                            for c in 0..ncols {
                                let mut acc = 0.0;
                                for i in 0..m {
                                    acc += ad[i * k + j] * g[i * ncols + c];
                                }
                                gb[j * ncols + c] += acc;
                            }
                        }
                    });
                }
            }
            Op::Softmax(a) => {
                // dL/dx_i = y_i * (g_i - sum_j g_j y_j)
                let dot: f64 = g.iter().zip(out_data.iter()).map(|(&gi, &yi)| gi * yi).sum();
                accumulate(a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += out_data[i] * (g[i] - dot);
                    }
                });
            }
            Op::CumsumFwd(a) => {
                // Gradient is the backward cumsum of g.
                accumulate(a, |ga| {
                    let mut acc = 0.0;
                    for i in (0..g.len()).rev() {
                        acc += g[i];
                        ga[i] += acc;
                    }
                });
            }
            Op::CumsumBwd(a) => {
                accumulate(a, |ga| {
                    let mut acc = 0.0;
                    for i in 0..g.len() {
                        acc += g[i];
                        ga[i] += acc;
                    }
                });
            }
            Op::Sigmoid(a) => {
                accumulate(a, |ga| {
                    for i in 0..ga.len() {
                        let y = out_data[i];
                        ga[i] += g[i] * y * (1.0 - y);
                    }
                });
            }
            Op::Tanh(a) => {
                accumulate(a, |ga| {
                    for i in 0..ga.len() {
                        let y = out_data[i];
                        ga[i] += g[i] * (1.0 - y * y);
                    }
                });
            }
            Op::Relu(a) => {
                let ad = a.to_vec();
                accumulate(a, |ga| {
                    for i in 0..ga.len() {
                        if ad[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            Op::Ln(a) => {
                let ad = a.to_vec();
                accumulate(a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] / ad[i];
                    }
                });
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let ad = a.to_vec();
                accumulate(a, |ga| {
                    for i in 0..ga.len() {
                        if ad[i] > lo && ad[i] < hi {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            Op::Mean(a) => {
                let n = a.len().max(1) as f64;
                accumulate(a, |ga| {
                    let share = g[0] / n;
                    for x in ga.iter_mut() {
                        *x += share;
                    }
                });
            }
            Op::Sum(a) => {
                accumulate(a, |ga| {
                    for x in ga.iter_mut() {
                        *x += g[0];
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = p.len();
                    accumulate(p, |gp| {
                        for i in 0..len {
                            gp[i] += g[offset + i];
                        }
                    });
                    offset += len;
                }
            }
            Op::Slice(a, start, len) => {
                let (start, len) = (*start, *len);
                accumulate(a, |ga| {
                    for i in 0..len {
                        ga[start + i] += g[i];
                    }
                });
            }
            Op::RepeatChunks(a, c) => {
                let c = *c;
                accumulate(a, |ga| {
                    for (i, slot) in ga.iter_mut().enumerate() {
                        for r in 0..c {
                            *slot += g[i * c + r];
                        }
                    }
                });
            }
        }
        drop(n);
    }
}

fn accumulate(v: &Value, f: impl FnOnce(&mut Vec<f64>)) {
    let mut n = v.node.borrow_mut();
    if let Some(g) = n.grad.as_mut() {
        f(g);
    }
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn sub_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d -= s;
    }
}

/// Concatenate 1-D values in order. Gradient splits back to the parents.
pub fn concat(parts: &[Value]) -> Result<Value> {
    if parts.is_empty() {
        return Err(Error::Input("concat of zero values".into()));
    }
    let mut data = Vec::new();
    for p in parts {
        let n = p.node.borrow();
        if n.shape.len() != 1 {
            return Err(Error::Dimension {
                op: "concat",
                lhs: n.shape.clone(),
                rhs: vec![],
            });
        }
        data.extend_from_slice(&n.data);
    }
    let shape = vec![data.len()];
    Ok(Value::result(shape, data, Op::Concat(parts.to_vec())))
}

/// Iterative postorder over tracked nodes: parents appear before children.
fn topo_order(root: &Value) -> Vec<Value> {
    enum Frame {
        Enter(Value),
        Exit(Value),
    }
    let mut order = Vec::new();
    let mut visited: HashSet<*const RefCell<Node>> = HashSet::new();
    let mut stack = vec![Frame::Enter(root.clone())];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Enter(v) => {
                if !visited.insert(v.ptr()) {
                    continue;
                }
                stack.push(Frame::Exit(v.clone()));
                for p in v.node.borrow().op.parents() {
                    if p.is_tracked() && !visited.contains(&p.ptr()) {
                        stack.push(Frame::Enter(p));
                    }
                }
            }
            Frame::Exit(v) => order.push(v),
        }
    }
    order
}

/// Detach every node reachable from `roots`, tracked or not.
///
/// Used by inference paths that never call `backward`: long unrolls would
/// otherwise drop through a deep `Rc` chain and can overflow the stack.
pub fn free_graph(roots: &[&Value]) {
    let mut visited: HashSet<*const RefCell<Node>> = HashSet::new();
    let mut stack: Vec<Value> = roots.iter().map(|v| (*v).clone()).collect();
    while let Some(v) = stack.pop() {
        if !visited.insert(v.ptr()) {
            continue;
        }
        let parents = {
            let mut n = v.node.borrow_mut();
            let parents = n.op.parents();
            n.op = Op::Leaf;
            parents
        };
        stack.extend(parents);
    }
}
