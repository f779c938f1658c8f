//! Reverse-mode automatic differentiation over a per-batch tape.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and `backward` is a single reverse sweep.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::activation::Activation;
use crate::ops::{self, ConvDims};
use crate::tensor::Tensor;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    Conv2d { input: NodeId, kernel: NodeId, dims: ConvDims },
    MaxPool2d { input: NodeId, argmax: Vec<usize> },
    Reshape { input: NodeId },
    Concat { left: NodeId, right: NodeId },
    Linear { input: NodeId, weight: NodeId, bias: NodeId },
    Act { input: NodeId, kind: Activation },
    PRelu { input: NodeId, slope: NodeId, inner: usize },
    SumSquares { input: NodeId },
    RelativeRmse { pred: NodeId, target: Vec<f64> },
    Rmse { pred: NodeId, target: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape of operations for one forward pass.
#[derive(Debug, Clone, Default)]
pub struct ComputeGraph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar node with respect to every node on its path.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, node: NodeId) -> Option<&[f64]> {
        self.grads.get(node).and_then(|g| g.as_deref())
    }
}

impl ComputeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad });
        self.nodes.len() - 1
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// Leaf for model parameter `index`. Frozen parameters get no gradient.
    pub fn param(&mut self, index: usize, value: &Tensor, trainable: bool) -> NodeId {
        let mut v = value.clone();
        v.clear_grad();
        self.push(v, Op::Param(index), trainable)
    }

    /// `[B,C,H,W] * [O,C,kH,kW] -> [B,O,H-kH+1,W-kW+1]`.
    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId) -> Result<NodeId> {
        let dims = ConvDims::from_shapes(self.value(input).shape(), self.value(kernel).shape())?;
        let mut out = vec![0.0; dims.batch * dims.out_ch * dims.out_h() * dims.out_w()];
        ops::conv2d(&dims, self.value(input).data(), self.value(kernel).data(), &mut out);
        let t = Tensor::new(vec![dims.batch, dims.out_ch, dims.out_h(), dims.out_w()], out)?;
        let rg = self.rg(input) || self.rg(kernel);
        Ok(self.push(t, Op::Conv2d { input, kernel, dims }, rg))
    }

    /// Max pooling over the last two axes.
    pub fn maxpool2d(&mut self, input: NodeId, window: usize, stride: usize) -> Result<NodeId> {
        let (pooled, argmax) = ops::maxpool2d_forward(self.value(input), window, stride)?;
        let rg = self.rg(input);
        Ok(self.push(pooled, Op::MaxPool2d { input, argmax }, rg))
    }

    /// `[B, ...] -> [B, prod(...)]`.
    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId> {
        let v = self.value(input);
        let b = *v.shape().first().ok_or_else(|| Error::Contract("flatten of a scalar".into()))?;
        let f = v.len() / b.max(1);
        let t = v.clone().reshape(vec![b, f])?;
        let rg = self.rg(input);
        Ok(self.push(t, Op::Reshape { input }, rg))
    }

    /// Concatenates two `[B,n]`, `[B,m]` tensors along the feature axis.
    pub fn concat(&mut self, left: NodeId, right: NodeId) -> Result<NodeId> {
        let (l, r) = (self.value(left), self.value(right));
        let (b, n) = two_d(l.shape(), "concat")?;
        let (b2, m) = two_d(r.shape(), "concat")?;
        if b != b2 {
            return Err(Error::Dimension { op: "concat", axis: "batch", expected: b, found: b2 });
        }
        let mut out = Vec::with_capacity(b * (n + m));
        for i in 0..b {
            out.extend_from_slice(&l.data()[i * n..][..n]);
            out.extend_from_slice(&r.data()[i * m..][..m]);
        }
        let t = Tensor::new(vec![b, n + m], out)?;
        let rg = self.rg(left) || self.rg(right);
        Ok(self.push(t, Op::Concat { left, right }, rg))
    }

    /// `[B,n] x [m,n]^T + [m] -> [B,m]`.
    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (b, n) = two_d(self.value(input).shape(), "linear")?;
        let ws = self.value(weight).shape();
        if ws.len() != 2 || ws[1] != n {
            return Err(Error::Dimension {
                op: "linear",
                axis: "features",
                expected: n,
                found: ws.get(1).copied().unwrap_or(0),
            });
        }
        let m = ws[0];
        if self.value(bias).len() != m {
            return Err(Error::Dimension { op: "linear", axis: "bias", expected: m, found: self.value(bias).len() });
        }
        let mut out = vec![0.0; b * m];
        ops::linear(b, n, m, self.value(input).data(), self.value(weight).data(), self.value(bias).data(), &mut out);
        let t = Tensor::new(vec![b, m], out)?;
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        Ok(self.push(t, Op::Linear { input, weight, bias }, rg))
    }

    /// Elementwise fixed activation.
    pub fn activation(&mut self, input: NodeId, kind: Activation) -> NodeId {
        let v = self.value(input);
        let data = v.data().iter().map(|&x| kind.apply(x)).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(input);
        self.push(t, Op::Act { input, kind }, rg)
    }

    /// PReLU with one slope per channel (axis 1 of `[B,C,...]`).
    pub fn prelu(&mut self, input: NodeId, slope: NodeId) -> Result<NodeId> {
        let v = self.value(input);
        let s = self.value(slope);
        let shape = v.shape();
        if shape.len() < 2 || shape[1] != s.len() {
            return Err(Error::Dimension {
                op: "prelu",
                axis: "channels",
                expected: s.len(),
                found: shape.get(1).copied().unwrap_or(0),
            });
        }
        let ch = shape[1];
        let inner: usize = shape[2..].iter().product();
        let slopes = s.data();
        let data = v
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| crate::nn::activation::prelu(x, slopes[(i / inner) % ch]))
            .collect();
        let t = Tensor::new(shape.to_vec(), data)?;
        let rg = self.rg(input) || self.rg(slope);
        Ok(self.push(t, Op::PRelu { input, slope, inner }, rg))
    }

    /// `sum(x^2)` as a scalar.
    pub fn sum_squares(&mut self, input: NodeId) -> NodeId {
        let s = self.value(input).data().iter().map(|x| x * x).sum();
        let rg = self.rg(input);
        self.push(Tensor::scalar(s), Op::SumSquares { input }, rg)
    }

    /// `sqrt(mean(((p - t) / t)^2))`. Every target must be nonzero.
    pub fn relative_rmse(&mut self, pred: NodeId, target: &[f64]) -> Result<NodeId> {
        let p = self.value(pred).data();
        if p.len() != target.len() {
            return Err(Error::Dimension { op: "relative_rmse", axis: "batch", expected: p.len(), found: target.len() });
        }
        let loss = crate::training::loss::relative_rmse(p, target)?;
        let rg = self.rg(pred);
        Ok(self.push(Tensor::scalar(loss), Op::RelativeRmse { pred, target: target.to_vec() }, rg))
    }

    /// `sqrt(mean((p - t)^2))`.
    pub fn rmse(&mut self, pred: NodeId, target: &[f64]) -> Result<NodeId> {
        let p = self.value(pred).data();
        if p.len() != target.len() {
            return Err(Error::Dimension { op: "rmse", axis: "batch", expected: p.len(), found: target.len() });
        }
        let loss = crate::training::loss::rmse_coordinate(p, target)?;
        let rg = self.rg(pred);
        Ok(self.push(Tensor::scalar(loss), Op::Rmse { pred, target: target.to_vec() }, rg))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let root = &self.nodes[loss].value;
        if root.len() != 1 {
            return Err(Error::Contract(alloc::format!(
                "backward needs a scalar loss, node {loss} has {} elements",
                root.len()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(vec![1.0]);
        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Vec<f64>>], id: NodeId) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[id].requires_grad {
            return None;
        }
        let n = self.nodes[id].value.len();
        Some(grads[id].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&self, id: NodeId, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Conv2d { input, kernel, dims } => {
                let (x, k) = (self.value(*input).data(), self.value(*kernel).data());
                if let Some(gk) = self.slot(grads, *kernel) {
                    ops::conv2d_backward(dims, x, k, g, Some(gk), None);
                }
                if let Some(gi) = self.slot(grads, *input) {
                    ops::conv2d_backward(dims, x, k, g, None, Some(gi));
                }
            }
            Op::MaxPool2d { input, argmax } => {
                if let Some(gi) = self.slot(grads, *input) {
                    for (&src, &gv) in argmax.iter().zip(g) {
                        gi[src] += gv;
                    }
                }
            }
            Op::Reshape { input } => {
                if let Some(gi) = self.slot(grads, *input) {
                    gi.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
            Op::Concat { left, right } => {
                let (b, n) = two_d(self.value(*left).shape(), "concat").expect("checked");
                let m = self.value(*right).shape()[1];
                if let Some(gl) = self.slot(grads, *left) {
                    for i in 0..b {
                        for j in 0..n {
                            gl[i * n + j] += g[i * (n + m) + j];
                        }
                    }
                }
                if let Some(gr) = self.slot(grads, *right) {
                    for i in 0..b {
                        for j in 0..m {
                            gr[i * m + j] += g[i * (n + m) + n + j];
                        }
                    }
                }
            }
            Op::Linear { input, weight, bias } => {
                let (b, n) = two_d(self.value(*input).shape(), "linear").expect("checked");
                let m = self.value(*weight).shape()[0];
                let x = self.value(*input).data();
                let w = self.value(*weight).data();
                if let Some(gw) = self.slot(grads, *weight) {
                    ops::linear_backward(b, n, m, x, w, g, Some(gw), None, None);
                }
                if let Some(gb) = self.slot(grads, *bias) {
                    ops::linear_backward(b, n, m, x, w, g, None, Some(gb), None);
                }
                if let Some(gi) = self.slot(grads, *input) {
                    ops::linear_backward(b, n, m, x, w, g, None, None, Some(gi));
                }
            }
            Op::Act { input, kind } => {
                let x = self.value(*input).data();
                if let Some(gi) = self.slot(grads, *input) {
                    for ((a, &xv), &gv) in gi.iter_mut().zip(x).zip(g) {
                        *a += gv * kind.derivative(xv);
                    }
                }
            }
            Op::PRelu { input, slope, inner } => {
                let x = self.value(*input).data();
                let s = self.value(*slope).data();
                let ch = s.len();
                if let Some(gs) = self.slot(grads, *slope) {
                    for (i, (&xv, &gv)) in x.iter().zip(g).enumerate() {
                        if xv <= 0.0 {
                            gs[(i / inner) % ch] += gv * xv;
                        }
                    }
                }
                if let Some(gi) = self.slot(grads, *input) {
                    for (i, (&xv, &gv)) in x.iter().zip(g).enumerate() {
                        gi[i] += if xv > 0.0 { gv } else { gv * s[(i / inner) % ch] };
                    }
                }
            }
            Op::SumSquares { input } => {
                let x = self.value(*input).data();
                if let Some(gi) = self.slot(grads, *input) {
                    for (a, &xv) in gi.iter_mut().zip(x) {
                        *a += g[0] * 2.0 * xv;
                    }
                }
            }
            Op::RelativeRmse { pred, target } => {
                let loss = node.value.data()[0];
                let p = self.value(*pred).data();
                if let Some(gp) = self.slot(grads, *pred) {
                    if loss > 0.0 {
                        let n = p.len() as f64;
                        for ((a, &pv), &t) in gp.iter_mut().zip(p).zip(target) {
                            let r = (pv - t) / t;
                            *a += g[0] * r / (n * loss * t);
                        }
                    }
                }
            }
            Op::Rmse { pred, target } => {
                let loss = node.value.data()[0];
                let p = self.value(*pred).data();
                if let Some(gp) = self.slot(grads, *pred) {
                    if loss > 0.0 {
                        let n = p.len() as f64;
                        for ((a, &pv), &t) in gp.iter_mut().zip(p).zip(target) {
                            *a += g[0] * (pv - t) / (n * loss);
                        }
                    }
                }
            }
        }
    }

    /// `(parameter index, gradient)` for every trainable parameter leaf.
    pub fn param_grads<'a>(&'a self, grads: &'a Gradients) -> impl Iterator<Item = (usize, &'a [f64])> + 'a {
        self.nodes.iter().enumerate().filter_map(move |(id, n)| match n.op {
            Op::Param(index) if n.requires_grad => Some((index, grads.get(id).unwrap_or(&[]))),
            _ => None,
        })
    }
}

fn two_d(shape: &[usize], op: &'static str) -> Result<(usize, usize)> {
    match shape {
        [b, n] => Ok((*b, *n)),
        other => Err(Error::Dimension { op, axis: "rank", expected: 2, found: other.len() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut g = ComputeGraph::new();
        let w = g.param(0, &Tensor::new(vec![2], vec![1.0, 2.0]).unwrap(), true);
        let loss = g.sum_squares(w);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn parameter_off_the_loss_path_gets_zero() {
        let mut g = ComputeGraph::new();
        let w = g.param(0, &Tensor::new(vec![2], vec![1.0, 2.0]).unwrap(), true);
        let _unused = g.param(1, &Tensor::new(vec![3], vec![5.0; 3]).unwrap(), true);
        let loss = g.sum_squares(w);
        let grads = g.backward(loss).unwrap();
        let collected: Vec<_> = g.param_grads(&grads).collect();
        assert_eq!(collected.len(), 2);
        assert!(collected[1].1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = ComputeGraph::new();
        let w = g.param(0, &Tensor::new(vec![2], vec![1.0, 2.0]).unwrap(), true);
        assert!(matches!(g.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax_only() {
        let mut g = ComputeGraph::new();
        let x = g.param(0, &Tensor::new(vec![1, 1, 2, 2], vec![1.0, 3.0, 3.0, 2.0]).unwrap(), true);
        let p = g.maxpool2d(x, 2, 2).unwrap();
        let l = g.sum_squares(p);
        let grads = g.backward(l).unwrap();
        // first maximal element in row-major order takes it all
        assert_eq!(grads.get(x).unwrap(), &[0.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn frozen_params_are_skipped() {
        let mut g = ComputeGraph::new();
        let x = g.param(0, &Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap(), false);
        let w = g.param(1, &Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap(), true);
        let b = g.param(2, &Tensor::zeros(vec![1]), true);
        let y = g.linear(x, w, b).unwrap();
        let l = g.sum_squares(y);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(x).is_none());
        assert_eq!(grads.get(w).unwrap(), &[3.0, 6.0]);
    }
}
