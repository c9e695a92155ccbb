//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in execution
//! order, so node ids are already topologically sorted. [`Graph::backward`]
//! walks the record once in reverse and consumes it.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `scalar · tensor`, the single broadcast the graph supports.
    ScalarMul { scalar: Var, tensor: Var },
    AddBias(Var, Var),
    Relu(Var),
    Tanh(Var),
    Square(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Mean(Var),
    Sum(Var),
    Transpose(Var),
    Reshape(Var),
    RowNorm(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::ScalarMul { .. } => "scalar_mul",
            Op::AddBias(..) => "add_bias",
            Op::Relu(_) => "relu",
            Op::Tanh(_) => "tanh",
            Op::Square(_) => "square",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Mean(_) => "mean",
            Op::Sum(_) => "sum",
            Op::Transpose(_) => "transpose",
            Op::Reshape(_) => "reshape",
            Op::RowNorm(_) => "row_norm",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Leaf that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Leaf whose gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if self.consumed {
            return Err(Error::State(format!(
                "cannot record {} after backward",
                op.name()
            )));
        }
        if cfg!(debug_assertions) && !value.all_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddBias(a, b)
            | Op::ScalarMul {
                scalar: a,
                tensor: b,
            } => self.requires_grad(*a) || self.requires_grad(*b),
            Op::Relu(a)
            | Op::Tanh(a)
            | Op::Square(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Mean(a)
            | Op::Sum(a)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::RowNorm(a) => self.requires_grad(*a),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dimension(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    /// Elementwise product. Either operand may be a one-element tensor, in
    /// which case it scales the other.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) == self.shape(b) {
            let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
            return self.push(value, Op::Mul(a, b));
        }
        let (scalar, tensor) = if self.value(a).is_scalar() {
            (a, b)
        } else if self.value(b).is_scalar() {
            (b, a)
        } else {
            return Err(Error::dimension("mul", self.shape(a), self.shape(b)));
        };
        let s = self.value(scalar).data()[0];
        let value = self.value(tensor).map(|x| s * x);
        self.push(value, Op::ScalarMul { scalar, tensor })
    }

    /// Adds a `1×n` (or length-`n`) bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(bias);
        if !av.is_matrix() || bv.numel() != av.shape()[1] {
            return Err(Error::dimension("add_bias", av.shape(), bv.shape()));
        }
        let n = bv.numel();
        let mut value = av.clone();
        for row in value.data_mut().chunks_mut(n) {
            for (x, b) in row.iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        self.push(value, Op::AddBias(a, bias))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x * x);
        self.push(value, Op::Square(a))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let value = self.value(a).map(|x| factor * x);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x + offset);
        self.push(value, Op::AddScalar(a))
    }

    /// Mean over every entry, as a one-element tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).mean());
        self.push(value, Op::Mean(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        self.push(value, Op::Transpose(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if shape.iter().product::<usize>() != av.numel() {
            return Err(Error::dimension("reshape", av.shape(), shape));
        }
        let value = av.reshape(shape)?;
        self.push(value, Op::Reshape(a))
    }

    /// Euclidean norm of each row of a matrix, as an `m×1` column.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if !av.is_matrix() {
            return Err(Error::dimension("row_norm", av.shape(), &[]));
        }
        let rows = av.rows();
        let data = (0..rows)
            .map(|i| av.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        self.push(Tensor::matrix(rows, 1, data), Op::RowNorm(a))
    }

    /// Reverse pass from a scalar `loss`. Gradients are summed over every path
    /// and reported for each node that requires them. The record is consumed.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::State("backward already ran on this graph".into()));
        }
        let loss_shape = self.shape(loss).to_vec();
        if !self.value(loss).is_scalar() {
            return Err(Error::Rank {
                op: "backward",
                shape: loss_shape,
            });
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(&loss_shape, 1.0));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }

        // Only report nodes that actually asked for gradients.
        for (node, grad) in self.nodes.iter().zip(grads.iter_mut()) {
            if !node.requires_grad {
                *grad = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        let mut send = |var: Var, contribution: Tensor| {
            match &mut grads[var.0] {
                Some(acc) => acc.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            };
        };
        let wants = |var: Var| self.nodes[var.0].requires_grad;

        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(a) {
                    send(a, g.matmul_nt(self.value(b))?);
                }
                if wants(b) {
                    send(b, self.value(a).matmul_tn(g)?);
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    send(a, g.clone());
                }
                if wants(b) {
                    send(b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    send(a, g.clone());
                }
                if wants(b) {
                    send(b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    send(a, g.zip_map(self.value(b), |x, y| x * y));
                }
                if wants(b) {
                    send(b, g.zip_map(self.value(a), |x, y| x * y));
                }
            }
            Op::ScalarMul { scalar, tensor } => {
                let t = self.value(tensor);
                if wants(scalar) {
                    let s: f64 = g.data().iter().zip(t.data()).map(|(x, y)| x * y).sum();
                    let shape = self.shape(scalar).to_vec();
                    send(scalar, Tensor::new(shape, vec![s])?);
                }
                if wants(tensor) {
                    let s = self.value(scalar).data()[0];
                    send(tensor, g.map(|x| s * x));
                }
            }
            Op::AddBias(a, bias) => {
                if wants(a) {
                    send(a, g.clone());
                }
                if wants(bias) {
                    let n = self.value(bias).numel();
                    let mut acc = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (s, x) in acc.iter_mut().zip(row) {
                            *s += x;
                        }
                    }
                    let shape = self.shape(bias).to_vec();
                    send(bias, Tensor::new(shape, acc)?);
                }
            }
            Op::Relu(a) => {
                // Subgradient 0 at exactly 0.
                send(a, g.zip_map(self.value(a), |x, v| if v > 0.0 { x } else { 0.0 }));
            }
            Op::Tanh(a) => {
                send(a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y)));
            }
            Op::Square(a) => {
                send(a, g.zip_map(self.value(a), |x, v| 2.0 * v * x));
            }
            Op::Scale(a, factor) => send(a, g.map(|x| factor * x)),
            Op::AddScalar(a) => send(a, g.clone()),
            Op::Mean(a) => {
                let av = self.value(a);
                let share = g.data()[0] / av.numel() as f64;
                send(a, Tensor::full(av.shape(), share));
            }
            Op::Sum(a) => send(a, Tensor::full(self.shape(a), g.data()[0])),
            Op::Transpose(a) => send(a, g.transpose()?),
            Op::Reshape(a) => send(a, g.reshape(self.shape(a))?),
            Op::RowNorm(a) => {
                let av = self.value(a);
                let cols = av.cols();
                let mut out = Tensor::zeros_like(av);
                for i in 0..av.rows() {
                    let norm = node.value.data()[i];
                    if norm == 0.0 {
                        continue;
                    }
                    let gi = g.data()[i];
                    let src = av.row(i);
                    for (o, x) in out.data_mut()[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                        *o = gi * (x / norm);
                    }
                }
                send(a, out);
            }
        }
        Ok(())
    }
}
