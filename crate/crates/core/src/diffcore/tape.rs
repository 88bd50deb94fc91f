//! Reverse-mode automatic differentiation over small real arrays.
//!
//! A [`Tape`] is an append-only list of nodes. Each node holds the operation
//! that produced it, the ids of its operands (always earlier on the tape) and
//! its cached forward value. Leaves carry caller-supplied values; everything
//! else can be recomputed from the leaves with [`Tape::replay`].
//!
//! Binary elementwise operations broadcast a length-1 operand against a
//! longer one, which is enough to express scalar-times-vector terms.

use super::DiffError;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Neg(NodeId),
    Abs(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Sum(NodeId),
    Dot(NodeId, NodeId),
    /// Row-major `rows x cols` matrix times a length-`cols` vector.
    MatVec {
        w: NodeId,
        x: NodeId,
        rows: usize,
        cols: usize,
    },
    Slice {
        src: NodeId,
        start: usize,
        len: usize,
    },
    Concat(Vec<NodeId>),
    LogSoftmax(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node at or before it.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient with respect to `id`. Nodes that the root does not depend on
    /// yield an all-zero slice of the node's length.
    pub fn wrt(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }
}

fn broadcast_len(a: usize, b: usize) -> Option<usize> {
    match (a, b) {
        (x, y) if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    }
}

#[inline]
fn at(v: &[f64], i: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    z.iter().map(|&v| v - lse).collect()
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

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Value of a length-1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    pub fn leaf(&mut self, values: Vec<f64>) -> NodeId {
        self.push(Op::Leaf, values)
    }

    pub fn leaf_scalar(&mut self, value: f64) -> NodeId {
        self.leaf(vec![value])
    }

    /// Overwrites a leaf value. Call [`Tape::replay`] afterwards to refresh
    /// dependent nodes.
    pub fn set_leaf(&mut self, id: NodeId, values: &[f64]) -> Result<(), DiffError> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(DiffError::NotALeaf(id.0));
        }
        if node.value.len() != values.len() {
            return Err(DiffError::Shape {
                op: "set_leaf",
                expected: node.value.len(),
                got: values.len(),
            });
        }
        node.value.copy_from_slice(values);
        Ok(())
    }

    /// Recomputes every non-leaf node from the current leaf values.
    pub fn replay(&mut self) {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = self.eval(&self.nodes[i].op);
            self.nodes[i].value = value;
        }
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op) -> NodeId {
        let value = self.eval(&op);
        self.push(op, value)
    }

    fn len_of(&self, id: NodeId) -> usize {
        self.nodes[id.0].value.len()
    }

    fn eval(&self, op: &Op) -> Vec<f64> {
        let v = |id: &NodeId| -> &[f64] { &self.nodes[id.0].value };
        let zip = |a: &NodeId, b: &NodeId, f: fn(f64, f64) -> f64| -> Vec<f64> {
            let (a, b) = (v(a), v(b));
            let n = a.len().max(b.len());
            (0..n).map(|i| f(at(a, i), at(b, i))).collect()
        };
        let map = |a: &NodeId, f: fn(f64) -> f64| -> Vec<f64> { v(a).iter().map(|&x| f(x)).collect() };
        match op {
            Op::Leaf => unreachable!("leaves are not evaluated"),
            Op::Add(a, b) => zip(a, b, |x, y| x + y),
            Op::Sub(a, b) => zip(a, b, |x, y| x - y),
            Op::Mul(a, b) => zip(a, b, |x, y| x * y),
            Op::Scale(a, k) => v(a).iter().map(|&x| x * k).collect(),
            Op::Neg(a) => map(a, |x| -x),
            Op::Abs(a) => map(a, f64::abs),
            Op::Exp(a) => map(a, f64::exp),
            Op::Log(a) => map(a, f64::ln),
            Op::Sigmoid(a) => map(a, sigmoid),
            Op::Tanh(a) => map(a, f64::tanh),
            Op::Sum(a) => vec![v(a).iter().sum()],
            Op::Dot(a, b) => vec![v(a).iter().zip(v(b)).map(|(x, y)| x * y).sum()],
            Op::MatVec { w, x, rows, cols } => {
                let (w, x) = (v(w), v(x));
                (0..*rows)
                    .map(|r| w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
                    .collect()
            }
            Op::Slice { src, start, len } => v(src)[*start..start + len].to_vec(),
            Op::Concat(parts) => parts.iter().flat_map(|p| v(p).iter().copied()).collect(),
            Op::LogSoftmax(a) => log_softmax(v(a)),
        }
    }

    fn binary(&mut self, name: &'static str, a: NodeId, b: NodeId, op: Op) -> Result<NodeId, DiffError> {
        let (la, lb) = (self.len_of(a), self.len_of(b));
        broadcast_len(la, lb).ok_or(DiffError::Shape {
            op: name,
            expected: la,
            got: lb,
        })?;
        Ok(self.record(op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary("add", a, b, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary("sub", a, b, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary("mul", a, b, Op::Mul(a, b))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (la, lb) = (self.len_of(a), self.len_of(b));
        if la != lb {
            return Err(DiffError::Shape {
                op: "dot",
                expected: la,
                got: lb,
            });
        }
        Ok(self.record(Op::Dot(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.record(Op::Scale(a, k))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Neg(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Abs(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Log(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Tanh(a))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.record(Op::Sum(a))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        self.record(Op::LogSoftmax(a))
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId, rows: usize, cols: usize) -> Result<NodeId, DiffError> {
        if self.len_of(w) != rows * cols {
            return Err(DiffError::Shape {
                op: "matvec(weights)",
                expected: rows * cols,
                got: self.len_of(w),
            });
        }
        if self.len_of(x) != cols {
            return Err(DiffError::Shape {
                op: "matvec(input)",
                expected: cols,
                got: self.len_of(x),
            });
        }
        Ok(self.record(Op::MatVec { w, x, rows, cols }))
    }

    pub fn slice(&mut self, src: NodeId, start: usize, len: usize) -> Result<NodeId, DiffError> {
        let n = self.len_of(src);
        if start + len > n {
            return Err(DiffError::Shape {
                op: "slice",
                expected: n,
                got: start + len,
            });
        }
        Ok(self.record(Op::Slice { src, start, len }))
    }

    pub fn index(&mut self, src: NodeId, i: usize) -> Result<NodeId, DiffError> {
        self.slice(src, i, 1)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        self.record(Op::Concat(parts.to_vec()))
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, DiffError> {
        let root_len = self.len_of(root);
        if root_len != 1 {
            return Err(DiffError::NonScalarRoot(root_len));
        }
        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        grads[root.0][0] = 1.0;

        for i in (0..=root.0).rev() {
            if grads[i].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            let node = &self.nodes[i];
            let val = |id: &NodeId| -> &[f64] { &self.nodes[id.0].value };
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], &g, 1.0);
                    accumulate(&mut grads[b.0], &g, 1.0);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], &g, 1.0);
                    accumulate(&mut grads[b.0], &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(a).to_vec(), val(b).to_vec());
                    let ga: Vec<f64> = (0..g.len()).map(|k| g[k] * at(&vb, k)).collect();
                    let gb: Vec<f64> = (0..g.len()).map(|k| g[k] * at(&va, k)).collect();
                    accumulate(&mut grads[a.0], &ga, 1.0);
                    accumulate(&mut grads[b.0], &gb, 1.0);
                }
                Op::Scale(a, k) => accumulate(&mut grads[a.0], &g, *k),
                Op::Neg(a) => accumulate(&mut grads[a.0], &g, -1.0),
                Op::Abs(a) => {
                    let d: Vec<f64> = val(a)
                        .iter()
                        .zip(&g)
                        .map(|(x, gi)| gi * x.signum() * f64::from(*x != 0.0))
                        .collect();
                    accumulate(&mut grads[a.0], &d, 1.0);
                }
                Op::Exp(a) => {
                    let d: Vec<f64> = node.value.iter().zip(&g).map(|(y, gi)| gi * y).collect();
                    accumulate(&mut grads[a.0], &d, 1.0);
                }
                Op::Log(a) => {
                    let d: Vec<f64> = val(a).iter().zip(&g).map(|(x, gi)| gi / x).collect();
                    accumulate(&mut grads[a.0], &d, 1.0);
                }
                Op::Sigmoid(a) => {
                    let d: Vec<f64> = node.value.iter().zip(&g).map(|(y, gi)| gi * y * (1.0 - y)).collect();
                    accumulate(&mut grads[a.0], &d, 1.0);
                }
                Op::Tanh(a) => {
                    let d: Vec<f64> = node.value.iter().zip(&g).map(|(y, gi)| gi * (1.0 - y * y)).collect();
                    accumulate(&mut grads[a.0], &d, 1.0);
                }
                Op::Sum(a) => {
                    for x in grads[a.0].iter_mut() {
                        *x += g[0];
                    }
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (val(a).to_vec(), val(b).to_vec());
                    accumulate(&mut grads[a.0], &vb, g[0]);
                    accumulate(&mut grads[b.0], &va, g[0]);
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (vw, vx) = (val(w), val(x));
                    let gw = &mut grads[w.0];
                    for r in 0..*rows {
                        if g[r] == 0.0 {
                            continue;
                        }
                        for c in 0..*cols {
                            gw[r * cols + c] += g[r] * vx[c];
                        }
                    }
                    let gx = &mut grads[x.0];
                    for r in 0..*rows {
                        if g[r] == 0.0 {
                            continue;
                        }
                        for c in 0..*cols {
                            gx[c] += g[r] * vw[r * cols + c];
                        }
                    }
                }
                Op::Slice { src, start, len } => {
                    let gs = &mut grads[src.0][*start..start + len];
                    for (dst, gi) in gs.iter_mut().zip(&g) {
                        *dst += gi;
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.len_of(*p);
                        accumulate(&mut grads[p.0], &g[offset..offset + n], 1.0);
                        offset += n;
                    }
                }
                Op::LogSoftmax(a) => {
                    // d/dz_k sum_i g_i (z_i - lse) = g_k - softmax_k * sum(g)
                    let total: f64 = g.iter().sum();
                    let d: Vec<f64> = node
                        .value
                        .iter()
                        .zip(&g)
                        .map(|(ly, gi)| gi - ly.exp() * total)
                        .collect();
                    accumulate(&mut grads[a.0], &d, 1.0);
                }
            }
            grads[i] = g;
        }
        // Nodes after the root are unreachable from it.
        for g in grads.iter_mut().skip(root.0 + 1) {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
        Ok(Gradients { grads })
    }
}

/// `dst += k * src`, summing `src` into a length-1 `dst` when broadcast.
fn accumulate(dst: &mut [f64], src: &[f64], k: f64) {
    if dst.len() == src.len() {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += k * s;
        }
    } else {
        debug_assert_eq!(dst.len(), 1);
        dst[0] += k * src.iter().sum::<f64>();
    }
}
