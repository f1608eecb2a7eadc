use alloc::rc::Rc;
use alloc::vec::Vec;

use super::{Matrix, NumericError, SparseRows};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Relu(Var),
    SoftmaxRows(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    StackRows(Vec<Var>),
    SelectRows(Var, Vec<usize>),
    MeanRows(Var),
    Sum(Var),
    SparseLeft(Rc<SparseRows>, Var),
    CrossEntropy(Var, Rc<[usize]>),
    GradReverse(Var, f64),
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
    tracked: bool,
}

/// Reverse-mode recording of one forward pass.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order. [`Tape::backward`] may run once; a second call fails.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar loss with respect to every tracked parameter.
///
/// Parameters the loss does not depend on get an all-zero gradient.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for a parameter created with [`Tape::param`].
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Number of tracked parameters carried.
    pub fn len(&self) -> usize {
        self.grads.iter().filter(|g| g.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
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

    /// Records a trainable leaf whose gradient [`Tape::backward`] reports.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push_node(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            tracked: true,
        })
    }

    /// Records a leaf that gradients do not flow into.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_node(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
            tracked: false,
        })
    }

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    fn push_node(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    fn check(&self, var: Var) -> Result<&Node, NumericError> {
        self.nodes.get(var.0).ok_or(NumericError::UnknownVar {
            index: var.0,
            len: self.nodes.len(),
        })
    }

    fn push(&mut self, value: Matrix, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(Node {
            value,
            op,
            requires_grad,
            tracked: false,
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.matmul(&self.check(b)?.value)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.add(&self.check(b)?.value)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.sub(&self.check(b)?.value)?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.hadamard(&self.check(b)?.value)?;
        Ok(self.push(value, Op::Hadamard(a, b), &[a, b]))
    }

    /// `a + row` with `row` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.add_row(&self.check(row)?.value)?;
        Ok(self.push(value, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.scale(factor);
        Ok(self.push(value, Op::Scale(a, factor), &[a]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.transpose();
        Ok(self.push(value, Op::Transpose(a), &[a]))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.relu();
        Ok(self.push(value, Op::Relu(a), &[a]))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.softmax_rows();
        Ok(self.push(value, Op::SoftmaxRows(a), &[a]))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.concat_cols(&self.check(b)?.value)?;
        Ok(self.push(value, Op::ConcatCols(a, b), &[a, b]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.slice_cols(start, end)?;
        Ok(self.push(value, Op::SliceCols(a, start), &[a]))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let mats = parts
            .iter()
            .map(|&v| self.check(v).map(|n| &n.value))
            .collect::<Result<Vec<_>, _>>()?;
        let value = Matrix::stack_rows(&mats)?;
        Ok(self.push(value, Op::StackRows(parts.to_vec()), parts))
    }

    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.select_rows(indices)?;
        Ok(self.push(value, Op::SelectRows(a, indices.to_vec()), &[a]))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var, NumericError> {
        let value = self.check(a)?.value.mean_rows();
        Ok(self.push(value, Op::MeanRows(a), &[a]))
    }

    /// Sum of all entries as a `1 x 1` value.
    pub fn sum(&mut self, a: Var) -> Result<Var, NumericError> {
        let value = Matrix::scalar(self.check(a)?.value.sum());
        Ok(self.push(value, Op::Sum(a), &[a]))
    }

    /// `sparse · a` for a fixed sparse left operand.
    pub fn sparse_left(&mut self, sparse: Rc<SparseRows>, a: Var) -> Result<Var, NumericError> {
        let value = sparse.mul_dense(&self.check(a)?.value)?;
        Ok(self.push(value, Op::SparseLeft(sparse, a), &[a]))
    }

    /// Mean softmax cross-entropy of `logits` rows against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, NumericError> {
        let z = &self.check(logits)?.value;
        if z.rows() != targets.len() || z.rows() == 0 {
            return Err(NumericError::TargetCount {
                rows: z.rows(),
                targets: targets.len(),
            });
        }
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = z.row(r);
            if t >= row.len() {
                return Err(NumericError::TargetClass {
                    class: t,
                    classes: row.len(),
                });
            }
            total += log_sum_exp(row) - row[t];
        }
        let value = Matrix::scalar(total / targets.len() as f64);
        Ok(self.push(value, Op::CrossEntropy(logits, targets.into()), &[logits]))
    }

    /// Identity forward; backward scales the upstream gradient by `-lambda`.
    pub fn grad_reverse(&mut self, a: Var, lambda: f64) -> Result<Var, NumericError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(NumericError::InvalidReversal(lambda));
        }
        let value = self.check(a)?.value.clone();
        Ok(self.push(value, Op::GradReverse(a, lambda), &[a]))
    }

    /// Propagates d(loss)/d(node) back through the recording.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, NumericError> {
        if self.consumed {
            return Err(NumericError::BackwardTwice);
        }
        let shape = self.check(loss)?.value.shape();
        if shape != (1, 1) {
            return Err(NumericError::NonScalarLoss { shape });
        }
        self.consumed = true;

        let mut grads: Vec<Option<Matrix>> = alloc::vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.tracked {
                grads[i] = Some(g);
                continue;
            }
            if !node.requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads)?;
        }

        let out = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                node.tracked.then(|| {
                    g.unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()))
                })
            })
            .collect();
        Ok(Gradients { grads: out })
    }

    fn propagate(
        &self,
        i: usize,
        g: &Matrix,
        grads: &mut [Option<Matrix>],
    ) -> Result<(), NumericError> {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let mut send = |v: Var, contrib: Matrix| -> Result<(), NumericError> {
            if !nodes[v.0].requires_grad {
                return Ok(());
            }
            match &mut grads[v.0] {
                Some(acc) => {
                    for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                        *a += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
            Ok(())
        };

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                send(*a, g.matmul(&val(*b).transpose())?)?;
                send(*b, val(*a).transpose().matmul(g)?)?;
            }
            Op::Add(a, b) => {
                send(*a, g.clone())?;
                send(*b, g.clone())?;
            }
            Op::Sub(a, b) => {
                send(*a, g.clone())?;
                send(*b, g.scale(-1.0))?;
            }
            Op::Hadamard(a, b) => {
                send(*a, g.hadamard(val(*b))?)?;
                send(*b, g.hadamard(val(*a))?)?;
            }
            Op::AddRow(a, row) => {
                send(*a, g.clone())?;
                send(*row, column_sums(g))?;
            }
            Op::Scale(a, f) => send(*a, g.scale(*f))?,
            Op::Transpose(a) => send(*a, g.transpose())?,
            Op::Relu(a) => {
                let x = val(*a);
                let d = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                send(*a, Matrix::from_vec(x.rows(), x.cols(), d))?;
            }
            Op::SoftmaxRows(a) => {
                let y = &nodes[i].value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for c in 0..y.cols() {
                        d.set(r, c, yr[c] * (gr[c] - dot));
                    }
                }
                send(*a, d)?;
            }
            Op::ConcatCols(a, b) => {
                let split = val(*a).cols();
                send(*a, g.slice_cols(0, split)?)?;
                send(*b, g.slice_cols(split, g.cols())?)?;
            }
            Op::SliceCols(a, start) => {
                let x = val(*a);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        d.set(r, start + c, g.get(r, c));
                    }
                }
                send(*a, d)?;
            }
            Op::StackRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let rows = val(p).rows();
                    let idx: Vec<usize> = (offset..offset + rows).collect();
                    send(p, g.select_rows(&idx)?)?;
                    offset += rows;
                }
            }
            Op::SelectRows(a, indices) => {
                let x = val(*a);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for (r, &src) in indices.iter().enumerate() {
                    for c in 0..x.cols() {
                        let v = d.get(src, c);
                        d.set(src, c, v + g.get(r, c));
                    }
                }
                send(*a, d)?;
            }
            Op::MeanRows(a) => {
                let x = val(*a);
                let n = x.rows().max(1) as f64;
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    for c in 0..x.cols() {
                        d.set(r, c, g.get(0, c) / n);
                    }
                }
                send(*a, d)?;
            }
            Op::Sum(a) => {
                let x = val(*a);
                send(*a, Matrix::filled(x.rows(), x.cols(), g.get(0, 0)))?;
            }
            Op::SparseLeft(sparse, a) => send(*a, sparse.transpose_mul_dense(g)?)?,
            Op::CrossEntropy(logits, targets) => {
                let p = val(*logits).softmax_rows();
                let scale = g.get(0, 0) / targets.len() as f64;
                let mut d = p;
                for (r, &t) in targets.iter().enumerate() {
                    let v = d.get(r, t);
                    d.set(r, t, v - 1.0);
                }
                send(*logits, d.scale(scale))?;
            }
            Op::GradReverse(a, lambda) => {
                // λ = 0 decouples the branch entirely: nothing is delivered.
                if *lambda != 0.0 {
                    send(*a, g.scale(-lambda))?;
                }
            }
        }
        Ok(())
    }
}

fn column_sums(g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, g.cols());
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            let v = out.get(0, c);
            out.set(0, c, v + g.get(r, c));
        }
    }
    out
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = row.iter().map(|&x| crate::math::exp(x - max)).sum();
    max + crate::math::ln(total)
}
