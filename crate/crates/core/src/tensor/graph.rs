use super::ops::{self, ConvGeometry};
use super::Tensor;
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul,
    AddRowBias,
    Conv2d(ConvGeometry),
    MaxPool { argmax: Vec<u32> },
    Relu,
    Softmax,
    Mse,
    CrossEntropy { targets: Vec<usize> },
    Reshape,
    Sum,
    Mul,
}

#[derive(Debug)]
struct Node {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only tape of operations.
///
/// Nodes are pushed in evaluation order, so the tape is topologically sorted
/// by construction. [`Graph::backward`] walks it in reverse and leaves one
/// gradient per reachable trainable leaf.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, Vec::new(), value, true)
    }

    /// Non-trainable leaf (inputs, targets).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, Vec::new(), value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last [`backward`](Self::backward) loss with respect
    /// to a trainable leaf; `None` if the leaf was unreachable.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, inputs: &[Var]) -> bool {
        inputs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn unary(&mut self, op: Op, x: Var, value: Tensor) -> Var {
        let rg = self.needs(&[x]);
        self.push(op, vec![x], value, rg)
    }

    fn binary(&mut self, op: Op, a: Var, b: Var, value: Tensor) -> Var {
        let rg = self.needs(&[a, b]);
        self.push(op, vec![a, b], value, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.binary(Op::MatMul, a, b, value))
    }

    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let value = ops::add_row_bias(self.value(x), self.value(bias))?;
        Ok(self.binary(Op::AddRowBias, x, bias, value))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernels: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let geom = ConvGeometry::new(
            self.value(input).shape(),
            self.value(kernels).shape(),
            self.value(bias).shape(),
            stride,
            padding,
        )?;
        let value = ops::conv2d(
            self.value(input),
            self.value(kernels),
            self.value(bias),
            stride,
            padding,
        )?;
        let rg = self.needs(&[input, kernels, bias]);
        Ok(self.push(Op::Conv2d(geom), vec![input, kernels, bias], value, rg))
    }

    pub fn maxpool2d(&mut self, x: Var, k: usize, stride: usize) -> Result<Var> {
        let (value, argmax) = ops::maxpool2d_with_argmax(self.value(x), k, stride)?;
        Ok(self.unary(Op::MaxPool { argmax }, x, value))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = ops::relu(self.value(x));
        self.unary(Op::Relu, x, value)
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let value = ops::softmax(self.value(x));
        self.unary(Op::Softmax, x, value)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.unary(Op::Reshape, x, value))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        self.unary(Op::Sum, x, Tensor::scalar(total as f32))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return dim_err(format!("mul of {:?} and {:?}", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.binary(Op::Mul, a, b, value))
    }

    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let value = ops::mse_loss(self.value(pred), self.value(target))?;
        Ok(self.binary(Op::Mse, pred, target, value))
    }

    pub fn cross_entropy_loss(&mut self, probs: Var, targets: &[usize]) -> Result<Var> {
        let value = ops::cross_entropy_loss(self.value(probs), targets)?;
        Ok(self.unary(
            Op::CrossEntropy {
                targets: targets.to_vec(),
            },
            probs,
            value,
        ))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Gradients from a previous call are discarded first, so calling twice
    /// yields the same result rather than doubling it.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {loss_shape:?}"
            )));
        }
        self.grads.clear();
        self.grads.resize_with(self.nodes.len(), || None);
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(Tensor::full(&loss_shape, 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let upstream = match self.grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            let contributions = self.local_grads(id, &upstream);
            for (input, g) in self.nodes[id].inputs.clone().into_iter().zip(contributions) {
                if let Some(g) = g {
                    match &mut self.grads[input.0] {
                        Some(acc) => acc.add_assign(&g),
                        slot @ None => *slot = Some(g),
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradient contributions for each input of node `id` (None where the
    /// input needs no gradient).
    fn local_grads(&self, id: usize, g: &Tensor) -> Vec<Option<Tensor>> {
        let node = &self.nodes[id];
        let need = |i: usize| self.nodes[node.inputs[i].0].requires_grad;
        let input = |i: usize| &self.nodes[node.inputs[i].0].value;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul => {
                let (ga, gb) = ops::matmul_backward(input(0), input(1), g, need(0), need(1));
                vec![ga, gb]
            }
            Op::AddRowBias => vec![
                need(0).then(|| g.clone()),
                need(1).then(|| ops::row_sums(g)),
            ],
            Op::Conv2d(geom) => {
                let (dx, dk, db) = ops::conv2d_backward(input(0), input(1), g, geom, need(0));
                vec![dx, need(1).then_some(dk), need(2).then_some(db)]
            }
            Op::MaxPool { argmax } => {
                vec![Some(ops::maxpool2d_backward(input(0).shape(), argmax, g))]
            }
            Op::Relu => vec![Some(ops::relu_backward(input(0), g))],
            Op::Softmax => vec![Some(ops::softmax_backward(&node.value, g))],
            Op::Reshape => vec![Some(g.clone().reshape(input(0).shape()).unwrap())],
            Op::Sum => {
                let s = g.data()[0];
                vec![Some(Tensor::full(input(0).shape(), s))]
            }
            Op::Mul => {
                let prod = |x: &Tensor| {
                    let data = x.data().iter().zip(g.data()).map(|(a, b)| a * b).collect();
                    Tensor::new(x.shape().to_vec(), data).unwrap()
                };
                vec![need(0).then(|| prod(input(1))), need(1).then(|| prod(input(0)))]
            }
            Op::Mse => {
                let gp = ops::mse_backward(input(0), input(1), g.data()[0]);
                let gt = need(1).then(|| {
                    let data = gp.data().iter().map(|v| -v).collect();
                    Tensor::new(input(1).shape().to_vec(), data).unwrap()
                });
                vec![need(0).then_some(gp), gt]
            }
            Op::CrossEntropy { targets } => {
                vec![Some(ops::cross_entropy_backward(input(0), targets, g.data()[0]))]
            }
        }
    }
}
