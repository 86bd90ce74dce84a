//! Reverse-mode differentiation over an append-only operation record.
//!
//! A [`Tape`] records primitive operations in the order they are built;
//! values are computed eagerly on append, so shape errors surface at
//! construction time. [`Tape::backward`] walks the record once in reverse
//! and accumulates gradients into the [`ParamStore`] slots of every
//! parameter leaf the graph touches.
//!
//! Gradients always accumulate in append order, so identical graphs produce
//! bit-identical values and gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::tensor::{Shape, Tensor};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("log of non-positive value {value} at entry {index}")]
    LogDomain { value: f64, index: usize },
    #[error("backward requires a scalar output, got {0}")]
    NonScalarOutput(Shape),
    #[error("row {row} out of range for parameter {name} with {rows} rows")]
    RowOutOfRange {
        name: String,
        row: usize,
        rows: usize,
    },
    #[error("empty operand list for {0}")]
    EmptyOperands(&'static str),
}

/// Handle to a named tensor with a gradient slot in a [`ParamStore`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

struct ParamEntry {
    name: String,
    value: Tensor,
    grad: Tensor,
}

/// Named leaf tensors with additive gradient slots.
#[derive(Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    /// Registers a tensor under a unique name. Panics on duplicates: parameter
    /// names double as checkpoint keys.
    pub fn register(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        let grad = Tensor::zeros(value.shape());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].grad
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    /// Copies of all parameter values, in registration order.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.entries.iter().map(|e| e.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        assert_eq!(snapshot.len(), self.entries.len(), "snapshot size mismatch");
        for (e, t) in self.entries.iter_mut().zip(snapshot) {
            assert_eq!(e.value.shape(), t.shape(), "snapshot shape mismatch");
            e.value = t.clone();
        }
    }
}

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct NodeId(usize);

enum Op {
    Constant,
    Param(ParamId),
    GatherRow { param: ParamId, row: usize },
    MatVec(NodeId, NodeId),
    Concat(NodeId, NodeId),
    Add(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Dot(NodeId, NodeId),
    SumVectors(Vec<NodeId>),
    Log(NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    LogSigmoid(NodeId),
    BceWithLogits { logits: NodeId, labels: Tensor },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of primitive operations with cached forward values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(sigmoid(x)) without underflow for large negative x.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// -[y*log(sigmoid(z)) + (1-y)*log(1-sigmoid(z))] computed from the logit.
fn bce_term(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        debug_assert!(
            value.is_finite(),
            "non-finite forward value at node {}",
            self.nodes.len()
        );
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    /// Leaf referencing a whole parameter tensor; backward accumulates a dense
    /// gradient into its slot.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let value = store.value(id).clone();
        self.push(Op::Param(id), value)
    }

    /// Leaf referencing one row of a matrix parameter; backward touches only
    /// that row of the gradient slot.
    pub fn gather_row(
        &mut self,
        store: &ParamStore,
        id: ParamId,
        row: usize,
    ) -> Result<NodeId, GraphError> {
        let value = store.value(id);
        match value.shape() {
            Shape::Matrix(rows, _) if row < rows => {
                let v = Tensor::vector(value.row(row).to_vec());
                Ok(self.push(Op::GatherRow { param: id, row }, v))
            }
            Shape::Matrix(rows, _) => Err(GraphError::RowOutOfRange {
                name: store.name(id).to_string(),
                row,
                rows,
            }),
            shape => Err(GraphError::ShapeMismatch {
                op: "gather_row",
                lhs: shape,
                rhs: Shape::Matrix(0, 0),
            }),
        }
    }

    /// Matrix(m,n) times Vector(n) -> Vector(m).
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId, GraphError> {
        let (ws, xs) = (self.shape(w), self.shape(x));
        let (m, n) = match ws {
            Shape::Matrix(m, n) => (m, n),
            _ => {
                return Err(GraphError::ShapeMismatch {
                    op: "matvec",
                    lhs: ws,
                    rhs: xs,
                })
            }
        };
        if xs != Shape::Vector(n) {
            return Err(GraphError::ShapeMismatch {
                op: "matvec",
                lhs: ws,
                rhs: xs,
            });
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &wv.data()[i * n..(i + 1) * n];
            out[i] = row.iter().zip(xv.data()).map(|(a, b)| a * b).sum();
        }
        Ok(self.push(Op::MatVec(w, x), Tensor::vector(out)))
    }

    /// Vector(m) ++ Vector(n) -> Vector(m+n).
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        match (sa, sb) {
            (Shape::Vector(_), Shape::Vector(_)) => {
                let mut data = self.value(a).data().to_vec();
                data.extend_from_slice(self.value(b).data());
                Ok(self.push(Op::Concat(a, b), Tensor::vector(data)))
            }
            _ => Err(GraphError::ShapeMismatch {
                op: "concat",
                lhs: sa,
                rhs: sb,
            }),
        }
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(GraphError::ShapeMismatch {
                op: "add",
                lhs: sa,
                rhs: sb,
            });
        }
        let mut t = self.value(a).clone();
        t.add_assign(self.value(b));
        Ok(self.push(Op::Add(a, b), t))
    }

    fn unary<F: Fn(f64) -> f64>(&mut self, op: Op, x: NodeId, f: F) -> NodeId {
        let shape = self.shape(x);
        let mut out = Tensor::zeros(shape);
        for (o, v) in out.data_mut().iter_mut().zip(self.value(x).data()) {
            *o = f(*v);
        }
        self.push(op, out)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Relu(x), x, |v| v.max(0.0))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Sigmoid(x), x, sigmoid)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Tanh(x), x, f64::tanh)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Neg(x), x, |v| -v)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.unary(Op::Scale(x, c), x, |v| c * v)
    }

    pub fn log_sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::LogSigmoid(x), x, log_sigmoid)
    }

    /// Elementwise natural log; rejects non-positive entries.
    pub fn log(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        if let Some((index, &value)) = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .find(|(_, v)| **v <= 0.0)
        {
            return Err(GraphError::LogDomain { value, index });
        }
        Ok(self.unary(Op::Log(x), x, f64::ln))
    }

    /// Vector(n) . Vector(n) -> scalar.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        match (sa, sb) {
            (Shape::Vector(n), Shape::Vector(m)) if n == m => {
                let v: f64 = self
                    .value(a)
                    .data()
                    .iter()
                    .zip(self.value(b).data())
                    .map(|(x, y)| x * y)
                    .sum();
                Ok(self.push(Op::Dot(a, b), Tensor::scalar(v)))
            }
            _ => Err(GraphError::ShapeMismatch {
                op: "dot",
                lhs: sa,
                rhs: sb,
            }),
        }
    }

    /// Elementwise sum of one or more same-shape vectors, accumulated in the
    /// order given.
    pub fn sum_vectors(&mut self, xs: &[NodeId]) -> Result<NodeId, GraphError> {
        let first = *xs.first().ok_or(GraphError::EmptyOperands("sum_vectors"))?;
        let shape = self.shape(first);
        for &x in &xs[1..] {
            if self.shape(x) != shape {
                return Err(GraphError::ShapeMismatch {
                    op: "sum_vectors",
                    lhs: shape,
                    rhs: self.shape(x),
                });
            }
        }
        let mut out = Tensor::zeros(shape);
        for &x in xs {
            out.add_assign(self.value(x));
        }
        Ok(self.push(Op::SumVectors(xs.to_vec()), out))
    }

    /// Mean of one or more scalar nodes.
    pub fn mean_scalars(&mut self, xs: &[NodeId]) -> Result<NodeId, GraphError> {
        let sum = self.sum_vectors(xs)?;
        Ok(self.scale(sum, 1.0 / xs.len() as f64))
    }

    /// Mean binary cross-entropy of a logit vector against fixed binary
    /// labels, computed in the numerically stable logit form.
    pub fn bce_with_logits(
        &mut self,
        logits: NodeId,
        labels: Tensor,
    ) -> Result<NodeId, GraphError> {
        let sl = self.shape(logits);
        if sl != labels.shape() || !matches!(sl, Shape::Vector(_)) {
            return Err(GraphError::ShapeMismatch {
                op: "bce_with_logits",
                lhs: sl,
                rhs: labels.shape(),
            });
        }
        let n = sl.len() as f64;
        let total: f64 = self
            .value(logits)
            .data()
            .iter()
            .zip(labels.data())
            .map(|(&z, &y)| bce_term(z, y))
            .sum();
        Ok(self.push(
            Op::BceWithLogits { logits, labels },
            Tensor::scalar(total / n),
        ))
    }

    /// Recomputes every node value from the leaves; parameter leaves re-read
    /// the store. Used by [`Tape::grad_check`] after perturbing parameters.
    pub fn evaluate(&mut self, store: &ParamStore, output: NodeId) -> Result<Tensor, GraphError> {
        for i in 0..self.nodes.len() {
            let value = match &self.nodes[i].op {
                Op::Constant => continue,
                Op::Param(id) => store.value(*id).clone(),
                Op::GatherRow { param, row } => {
                    Tensor::vector(store.value(*param).row(*row).to_vec())
                }
                Op::MatVec(w, x) => {
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    let (m, n) = match wv.shape() {
                        Shape::Matrix(m, n) => (m, n),
                        _ => unreachable!("checked at construction"),
                    };
                    let mut out = vec![0.0; m];
                    for (r, o) in out.iter_mut().enumerate() {
                        *o = wv.data()[r * n..(r + 1) * n]
                            .iter()
                            .zip(xv.data())
                            .map(|(a, b)| a * b)
                            .sum();
                    }
                    Tensor::vector(out)
                }
                Op::Concat(a, b) => {
                    let mut data = self.nodes[a.0].value.data().to_vec();
                    data.extend_from_slice(self.nodes[b.0].value.data());
                    Tensor::vector(data)
                }
                Op::Add(a, b) => {
                    let mut t = self.nodes[a.0].value.clone();
                    t.add_assign(&self.nodes[b.0].value);
                    t
                }
                Op::Relu(x) => remap(&self.nodes[x.0].value, |v| v.max(0.0)),
                Op::Sigmoid(x) => remap(&self.nodes[x.0].value, sigmoid),
                Op::Tanh(x) => remap(&self.nodes[x.0].value, f64::tanh),
                Op::Neg(x) => remap(&self.nodes[x.0].value, |v| -v),
                Op::Scale(x, c) => {
                    let c = *c;
                    remap(&self.nodes[x.0].value, move |v| c * v)
                }
                Op::LogSigmoid(x) => remap(&self.nodes[x.0].value, log_sigmoid),
                Op::Log(x) => {
                    let xv = &self.nodes[x.0].value;
                    if let Some((index, &value)) =
                        xv.data().iter().enumerate().find(|(_, v)| **v <= 0.0)
                    {
                        return Err(GraphError::LogDomain { value, index });
                    }
                    remap(xv, f64::ln)
                }
                Op::Dot(a, b) => {
                    let v = self.nodes[a.0]
                        .value
                        .data()
                        .iter()
                        .zip(self.nodes[b.0].value.data())
                        .map(|(x, y)| x * y)
                        .sum();
                    Tensor::scalar(v)
                }
                Op::SumVectors(xs) => {
                    let mut out = Tensor::zeros(self.nodes[xs[0].0].value.shape());
                    for x in xs {
                        out.add_assign(&self.nodes[x.0].value);
                    }
                    out
                }
                Op::BceWithLogits { logits, labels } => {
                    let z = &self.nodes[logits.0].value;
                    let total: f64 = z
                        .data()
                        .iter()
                        .zip(labels.data())
                        .map(|(&z, &y)| bce_term(z, y))
                        .sum();
                    Tensor::scalar(total / labels.len() as f64)
                }
            };
            self.nodes[i].value = value;
        }
        Ok(self.nodes[output.0].value.clone())
    }

    /// Reverse sweep from a scalar output. Gradients of parameter leaves
    /// accumulate additively into the store; calling twice without
    /// [`ParamStore::zero_grads`] doubles them.
    pub fn backward(&self, output: NodeId, store: &mut ParamStore) -> Result<(), GraphError> {
        let out_shape = self.shape(output);
        if !out_shape.is_scalar() {
            return Err(GraphError::NonScalarOutput(out_shape));
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        grads[output.0].set(0, 1.0);

        for i in (0..self.nodes.len()).rev() {
            if grads[i].data().iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[i].clone();
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(id) => store.grad_mut(*id).add_assign(&g),
                Op::GatherRow { param, row } => {
                    let grow = store.grad_mut(*param).row_mut(*row);
                    for (a, b) in grow.iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                Op::MatVec(w, x) => {
                    let (m, n) = match self.nodes[w.0].value.shape() {
                        Shape::Matrix(m, n) => (m, n),
                        _ => unreachable!(),
                    };
                    let wv = self.nodes[w.0].value.clone();
                    let xv = self.nodes[x.0].value.clone();
                    {
                        let gw = grads[w.0].data_mut();
                        for r in 0..m {
                            let gr = g.get(r);
                            for c in 0..n {
                                gw[r * n + c] += gr * xv.get(c);
                            }
                        }
                    }
                    {
                        let gx = grads[x.0].data_mut();
                        for r in 0..m {
                            let gr = g.get(r);
                            for (c, gxc) in gx.iter_mut().enumerate() {
                                *gxc += gr * wv.data()[r * n + c];
                            }
                        }
                    }
                }
                Op::Concat(a, b) => {
                    let na = self.nodes[a.0].value.len();
                    let (a, b) = (*a, *b);
                    {
                        let ga = grads[a.0].data_mut();
                        for (j, v) in ga.iter_mut().enumerate() {
                            *v += g.get(j);
                        }
                    }
                    {
                        let gb = grads[b.0].data_mut();
                        for (j, v) in gb.iter_mut().enumerate() {
                            *v += g.get(na + j);
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    grads[a.0].add_assign(&g);
                    grads[b.0].add_assign(&g);
                }
                Op::Relu(x) => {
                    let xv = self.nodes[x.0].value.clone();
                    let gx = grads[x.0].data_mut();
                    for (j, v) in gx.iter_mut().enumerate() {
                        // Subgradient at exactly 0 is taken as 0.
                        if xv.get(j) > 0.0 {
                            *v += g.get(j);
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let sv = self.nodes[i].value.clone();
                    let gx = grads[x.0].data_mut();
                    for (j, v) in gx.iter_mut().enumerate() {
                        let s = sv.get(j);
                        *v += g.get(j) * s * (1.0 - s);
                    }
                }
                Op::Tanh(x) => {
                    let tv = self.nodes[i].value.clone();
                    let gx = grads[x.0].data_mut();
                    for (j, v) in gx.iter_mut().enumerate() {
                        let t = tv.get(j);
                        *v += g.get(j) * (1.0 - t * t);
                    }
                }
                Op::Dot(a, b) => {
                    let g0 = g.get(0);
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    let (a, b) = (*a, *b);
                    {
                        let ga = grads[a.0].data_mut();
                        for (j, v) in ga.iter_mut().enumerate() {
                            *v += g0 * bv.get(j);
                        }
                    }
                    {
                        let gb = grads[b.0].data_mut();
                        for (j, v) in gb.iter_mut().enumerate() {
                            *v += g0 * av.get(j);
                        }
                    }
                }
                Op::SumVectors(xs) => {
                    for x in xs.clone() {
                        grads[x.0].add_assign(&g);
                    }
                }
                Op::Log(x) => {
                    let xv = self.nodes[x.0].value.clone();
                    let gx = grads[x.0].data_mut();
                    for (j, v) in gx.iter_mut().enumerate() {
                        *v += g.get(j) / xv.get(j);
                    }
                }
                Op::Neg(x) => {
                    let gx = grads[x.0].data_mut();
                    for (j, v) in gx.iter_mut().enumerate() {
                        *v -= g.get(j);
                    }
                }
                Op::Scale(x, c) => {
                    let c = *c;
                    let gx = grads[x.0].data_mut();
                    for (j, v) in gx.iter_mut().enumerate() {
                        *v += c * g.get(j);
                    }
                }
                Op::LogSigmoid(x) => {
                    let xv = self.nodes[x.0].value.clone();
                    let gx = grads[x.0].data_mut();
                    for (j, v) in gx.iter_mut().enumerate() {
                        *v += g.get(j) * sigmoid(-xv.get(j));
                    }
                }
                Op::BceWithLogits { logits, labels } => {
                    let g0 = g.get(0);
                    let n = labels.len() as f64;
                    let zv = self.nodes[logits.0].value.clone();
                    let labels = labels.clone();
                    let gz = grads[logits.0].data_mut();
                    for (j, v) in gz.iter_mut().enumerate() {
                        *v += g0 * (sigmoid(zv.get(j)) - labels.get(j)) / n;
                    }
                }
            }
        }
        Ok(())
    }

    /// Central-difference check of every parameter gradient.
    ///
    /// Zeroes the store's gradient slots, runs one backward pass, then
    /// compares each (sampled) parameter entry against
    /// `(f(p+h) - f(p-h)) / 2h`. Parameter values are restored afterwards and
    /// gradient slots are left zeroed.
    pub fn grad_check(
        &mut self,
        output: NodeId,
        store: &mut ParamStore,
        opts: &GradCheckOptions,
    ) -> Result<GradCheckReport, GraphError> {
        let out_shape = self.shape(output);
        if !out_shape.is_scalar() {
            return Err(GraphError::NonScalarOutput(out_shape));
        }
        store.zero_grads();
        self.evaluate(store, output)?;
        self.backward(output, store)?;
        let analytic: Vec<Tensor> = store.ids().map(|id| store.grad(id).clone()).collect();
        store.zero_grads();

        let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
        let mut params = Vec::new();
        for id in store.ids().collect::<Vec<_>>() {
            let numel = store.value(id).len();
            let indices: Vec<usize> = if opts.sample_limit > 0 && numel > opts.sample_limit {
                let mut v = sample(&mut rng, numel, opts.sample_limit).into_vec();
                v.sort_unstable();
                v
            } else {
                (0..numel).collect()
            };
            let mut max_rel = 0.0f64;
            for &j in &indices {
                let orig = store.value(id).get(j);
                store.value_mut(id).set(j, orig + opts.step);
                let f_plus = self.evaluate(store, output)?.scalar_value();
                store.value_mut(id).set(j, orig - opts.step);
                let f_minus = self.evaluate(store, output)?.scalar_value();
                store.value_mut(id).set(j, orig);
                let numeric = (f_plus - f_minus) / (2.0 * opts.step);
                let a = analytic[id.index()].get(j);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                max_rel = max_rel.max(rel);
            }
            params.push(ParamCheck {
                name: store.name(id).to_string(),
                checked: indices.len(),
                max_rel_err: max_rel,
                pass: max_rel < opts.tolerance,
            });
        }
        self.evaluate(store, output)?;
        Ok(GradCheckReport {
            tolerance: opts.tolerance,
            params,
        })
    }
}

fn remap<F: Fn(f64) -> f64>(t: &Tensor, f: F) -> Tensor {
    let mut out = Tensor::zeros(t.shape());
    for (o, v) in out.data_mut().iter_mut().zip(t.data()) {
        *o = f(*v);
    }
    out
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Entries checked per parameter; 0 means all. Larger tensors are
    /// subsampled with a seeded draw.
    pub sample_limit: usize,
    pub seed: u64,
}

impl GradCheckOptions {
    pub fn new(step: f64, tolerance: f64) -> Self {
        GradCheckOptions {
            step,
            tolerance,
            sample_limit: 64,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.params.iter().all(|p| p.pass)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&ParamCheck> {
        self.params.iter().filter(|p| !p.pass).collect()
    }
}
