use std::fmt;

use super::kernels::{self, ConvGeom};
use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp {
    Relu,
    /// `min(max(x, 0), 1)`; gradient passes only where `0 < x < 1`.
    Clamp01,
    Scale(f32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

/// A single-input differentiable operation defined outside this module.
///
/// The caller computes the forward value and hands it to [`Graph::apply`]
/// together with the function, which keeps whatever state it needs for the
/// backward pass.
pub trait Function: Send + Sync {
    fn name(&self) -> &'static str;

    /// Accumulates the input gradient into `grad_input` given the output gradient.
    fn backward(&self, input: &Tensor, output: &Tensor, grad_output: &[f32], grad_input: &mut [f32]);
}

enum Op {
    Leaf,
    Unary {
        x: NodeId,
        op: UnaryOp,
    },
    Binary {
        a: NodeId,
        b: NodeId,
        op: BinaryOp,
    },
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
    },
    MaxPool {
        x: NodeId,
        argmax: Vec<u32>,
    },
    AvgPool {
        x: NodeId,
        k: usize,
        stride: usize,
    },
    Softmax {
        x: NodeId,
    },
    ChannelAffine {
        x: NodeId,
        scale: Vec<f32>,
    },
    Resize {
        x: NodeId,
    },
    Sum {
        x: NodeId,
    },
    Mean {
        x: NodeId,
    },
    Custom {
        x: NodeId,
        f: Box<dyn Function>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Unary { op, .. } => match op {
                UnaryOp::Relu => "relu",
                UnaryOp::Clamp01 => "clamp01",
                UnaryOp::Scale(_) => "scale",
            },
            Op::Binary { op, .. } => match op {
                BinaryOp::Add => "add",
                BinaryOp::Sub => "sub",
                BinaryOp::Mul => "mul",
            },
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool { .. } => "max_pool",
            Op::AvgPool { .. } => "avg_pool",
            Op::Softmax { .. } => "softmax_channels",
            Op::ChannelAffine { .. } => "channel_affine",
            Op::Resize { .. } => "resize_bilinear",
            Op::Sum { .. } => "sum",
            Op::Mean { .. } => "mean",
            Op::Custom { f, .. } => f.name(),
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// A recorded forward computation. Nodes are appended in execution order, so
/// the node list is already topologically sorted.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.nodes.iter().map(|n| (n.op.name(), n.value.shape())))
            .finish()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Takes ownership of one gradient.
    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

fn shape_err(op: &str, a: Shape, b: Shape) -> Error {
    Error::config(format!("{op}: shape mismatch {a} vs {b}"))
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].value.shape()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Result<NodeId> {
        value.ensure_finite(op.name())?;
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<NodeId> {
        self.push(Op::Leaf, t, false)
    }

    /// A leaf whose gradient is populated by [`Graph::backward`].
    pub fn param(&mut self, t: Tensor) -> Result<NodeId> {
        self.push(Op::Leaf, t, true)
    }

    pub fn unary(&mut self, x: NodeId, op: UnaryOp) -> Result<NodeId> {
        let v = self.value(x);
        let out = match op {
            UnaryOp::Relu => v.map(|a| a.max(0.0)),
            UnaryOp::Clamp01 => v.map(|a| a.clamp(0.0, 1.0)),
            UnaryOp::Scale(s) => v.map(|a| a * s),
        };
        let rg = self.requires_grad(x);
        self.push(Op::Unary { x, op }, out, rg)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, UnaryOp::Relu)
    }

    pub fn clamp01(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, UnaryOp::Clamp01)
    }

    pub fn scale(&mut self, x: NodeId, s: f32) -> Result<NodeId> {
        self.unary(x, UnaryOp::Scale(s))
    }

    pub fn binary(&mut self, a: NodeId, b: NodeId, op: BinaryOp) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(binary_name(op), va.shape(), vb.shape()));
        }
        let data: Vec<f32> = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&p, &q)| match op {
                BinaryOp::Add => p + q,
                BinaryOp::Sub => p - q,
                BinaryOp::Mul => p * q,
            })
            .collect();
        let out = Tensor::new(va.shape(), data)?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(Op::Binary { a, b, op }, out, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, BinaryOp::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, BinaryOp::Sub)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, BinaryOp::Mul)
    }

    /// Cross-correlation with zero padding. `weight` is (out, in, kh, kw);
    /// `bias`, when given, has `out` elements.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let is = self.shape(x);
        let ws = self.shape(weight);
        if stride == 0 {
            return Err(Error::config("conv2d: stride must be at least 1"));
        }
        if ws.c != is.c {
            return Err(Error::config(format!(
                "conv2d: input has {} channels but weight {} expects {}",
                is.c, ws, ws.c
            )));
        }
        if let Some(b) = bias {
            if self.value(b).numel() != ws.n {
                return Err(Error::config(format!(
                    "conv2d: bias has {} values for {} output channels",
                    self.value(b).numel(),
                    ws.n
                )));
            }
        }
        let (oh, ow) = match (
            kernels::conv_out_extent(is.h, ws.h, stride, padding),
            kernels::conv_out_extent(is.w, ws.w, stride, padding),
        ) {
            (Some(h), Some(w)) => (h, w),
            _ => {
                return Err(Error::config(format!(
                    "conv2d: kernel {}x{} larger than padded input {}",
                    ws.h, ws.w, is
                )))
            }
        };
        let geom = ConvGeom {
            input: is,
            weight: ws,
            output: Shape::new(is.n, ws.n, oh, ow),
            stride,
            pad: padding,
        };
        let data = kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
        );
        let out = Tensor::new(geom.output, data)?;
        let rg = self.requires_grad(x)
            || self.requires_grad(weight)
            || bias.is_some_and(|b| self.requires_grad(b));
        self.push(
            Op::Conv2d {
                x,
                w: weight,
                b: bias,
                stride,
                pad: padding,
            },
            out,
            rg,
        )
    }

    pub fn pool2d(&mut self, x: NodeId, kind: PoolKind, k: usize, stride: usize) -> Result<NodeId> {
        let is = self.shape(x);
        if k == 0 || stride == 0 {
            return Err(Error::config("pool2d: kernel and stride must be at least 1"));
        }
        if is.h < k || is.w < k {
            return Err(Error::config(format!(
                "pool2d: spatial extent {}x{} smaller than kernel {k}",
                is.h, is.w
            )));
        }
        let os = Shape::new(is.n, is.c, (is.h - k) / stride + 1, (is.w - k) / stride + 1);
        let rg = self.requires_grad(x);
        match kind {
            PoolKind::Max => {
                let (data, argmax) = kernels::max_pool_forward(is, os, k, stride, self.value(x).data());
                let out = Tensor::new(os, data)?;
                self.push(Op::MaxPool { x, argmax }, out, rg)
            }
            PoolKind::Avg => {
                let data = kernels::avg_pool_forward(is, os, k, stride, self.value(x).data());
                let out = Tensor::new(os, data)?;
                self.push(Op::AvgPool { x, k, stride }, out, rg)
            }
        }
    }

    /// Softmax across channels, independently at every (batch, y, x).
    pub fn softmax_channels(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x);
        let data = kernels::softmax_channels_forward(s, self.value(x).data());
        let out = Tensor::new(s, data)?;
        let rg = self.requires_grad(x);
        self.push(Op::Softmax { x }, out, rg)
    }

    /// `y[c] = x[c] * scale[c] + shift[c]` with constant per-channel coefficients.
    pub fn channel_affine(&mut self, x: NodeId, scale: &[f32], shift: &[f32]) -> Result<NodeId> {
        let s = self.shape(x);
        if scale.len() != s.c || shift.len() != s.c {
            return Err(Error::config(format!(
                "channel_affine: {} scale / {} shift values for {} channels",
                scale.len(),
                shift.len(),
                s.c
            )));
        }
        let plane = s.plane();
        let mut data = self.value(x).data().to_vec();
        for (i, chunk) in data.chunks_mut(plane).enumerate() {
            let c = i % s.c;
            for v in chunk {
                *v = *v * scale[c] + shift[c];
            }
        }
        let out = Tensor::new(s, data)?;
        let rg = self.requires_grad(x);
        self.push(
            Op::ChannelAffine {
                x,
                scale: scale.to_vec(),
            },
            out,
            rg,
        )
    }

    /// Bilinear resize of every plane to `h x w` (half-pixel centers).
    pub fn resize_bilinear(&mut self, x: NodeId, h: usize, w: usize) -> Result<NodeId> {
        let is = self.shape(x);
        if h == 0 || w == 0 || is.h == 0 || is.w == 0 {
            return Err(Error::config("resize_bilinear: empty extent"));
        }
        let os = Shape::new(is.n, is.c, h, w);
        let data = kernels::resize_forward(is, os, self.value(x).data());
        let out = Tensor::new(os, data)?;
        let rg = self.requires_grad(x);
        self.push(Op::Resize { x }, out, rg)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let total: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        let rg = self.requires_grad(x);
        self.push(Op::Sum { x }, Tensor::scalar(total as f32), rg)
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let total: f64 = v.data().iter().map(|&a| a as f64).sum();
        let mean = total / v.numel().max(1) as f64;
        let rg = self.requires_grad(x);
        self.push(Op::Mean { x }, Tensor::scalar(mean as f32), rg)
    }

    /// Records an externally computed single-input operation.
    pub fn apply(&mut self, x: NodeId, output: Tensor, f: Box<dyn Function>) -> Result<NodeId> {
        let rg = self.requires_grad(x);
        self.push(Op::Custom { x, f }, output, rg)
    }

    /// Reverse-mode sweep from a scalar `loss`. Every node that requires a
    /// gradient and is reachable from `loss` gets one of its own shape.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let ls = self.shape(loss);
        if !ls.is_scalar() {
            return Err(Error::config(format!(
                "backward: loss must be scalar, got shape {ls}"
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.backward_node(node, &g, &mut grads);
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.filter(|_| node.requires_grad)
                    .map(|g| Tensor::new(node.value.shape(), g).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let wants = |id: NodeId| self.nodes[id.0].requires_grad;
        let accumulate = |grads: &mut [Option<Vec<f32>>], id: NodeId, f: &mut dyn FnMut(&mut [f32])| {
            let len = self.nodes[id.0].value.numel();
            let slot = grads[id.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };

        match &node.op {
            Op::Leaf => {}
            Op::Unary { x, op } => {
                if !wants(*x) {
                    return;
                }
                let xv = self.value(*x).data();
                accumulate(grads, *x, &mut |dst| match op {
                    UnaryOp::Relu => {
                        for ((d, &gi), &xi) in dst.iter_mut().zip(g).zip(xv) {
                            if xi > 0.0 {
                                *d += gi;
                            }
                        }
                    }
                    UnaryOp::Clamp01 => {
                        for ((d, &gi), &xi) in dst.iter_mut().zip(g).zip(xv) {
                            if xi > 0.0 && xi < 1.0 {
                                *d += gi;
                            }
                        }
                    }
                    UnaryOp::Scale(s) => {
                        for (d, &gi) in dst.iter_mut().zip(g) {
                            *d += gi * s;
                        }
                    }
                });
            }
            Op::Binary { a, b, op } => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if wants(*a) {
                    accumulate(grads, *a, &mut |dst| {
                        for (i, d) in dst.iter_mut().enumerate() {
                            *d += match op {
                                BinaryOp::Add | BinaryOp::Sub => g[i],
                                BinaryOp::Mul => g[i] * vb[i],
                            };
                        }
                    });
                }
                if wants(*b) {
                    accumulate(grads, *b, &mut |dst| {
                        for (i, d) in dst.iter_mut().enumerate() {
                            *d += match op {
                                BinaryOp::Add => g[i],
                                BinaryOp::Sub => -g[i],
                                BinaryOp::Mul => g[i] * va[i],
                            };
                        }
                    });
                }
            }
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            } => {
                let geom = ConvGeom {
                    input: self.shape(*x),
                    weight: self.shape(*w),
                    output: node.value.shape(),
                    stride: *stride,
                    pad: *pad,
                };
                if wants(*x) {
                    let gx = kernels::conv2d_backward_input(&geom, g, self.value(*w).data());
                    accumulate(grads, *x, &mut |dst| add_into(dst, &gx));
                }
                let want_b = b.is_some_and(|b| wants(b));
                if wants(*w) || want_b {
                    let (gw, gb) = kernels::conv2d_backward_params(&geom, g, self.value(*x).data());
                    if wants(*w) {
                        accumulate(grads, *w, &mut |dst| add_into(dst, &gw));
                    }
                    if let (Some(b), true) = (b, want_b) {
                        accumulate(grads, *b, &mut |dst| add_into(dst, &gb));
                    }
                }
            }
            Op::MaxPool { x, argmax } => {
                if wants(*x) {
                    accumulate(grads, *x, &mut |dst| {
                        for (&src, &gi) in argmax.iter().zip(g) {
                            dst[src as usize] += gi;
                        }
                    });
                }
            }
            Op::AvgPool { x, k, stride } => {
                if wants(*x) {
                    let gx = kernels::avg_pool_backward(self.shape(*x), node.value.shape(), *k, *stride, g);
                    accumulate(grads, *x, &mut |dst| add_into(dst, &gx));
                }
            }
            Op::Softmax { x } => {
                if wants(*x) {
                    let gx = kernels::softmax_channels_backward(node.value.shape(), node.value.data(), g);
                    accumulate(grads, *x, &mut |dst| add_into(dst, &gx));
                }
            }
            Op::ChannelAffine { x, scale } => {
                if wants(*x) {
                    let s = node.value.shape();
                    let plane = s.plane();
                    accumulate(grads, *x, &mut |dst| {
                        for (i, (d, gc)) in dst.chunks_mut(plane).zip(g.chunks(plane)).enumerate() {
                            let k = scale[i % s.c];
                            for (di, &gi) in d.iter_mut().zip(gc) {
                                *di += gi * k;
                            }
                        }
                    });
                }
            }
            Op::Resize { x } => {
                if wants(*x) {
                    let gx = kernels::resize_backward(self.shape(*x), node.value.shape(), g);
                    accumulate(grads, *x, &mut |dst| add_into(dst, &gx));
                }
            }
            Op::Sum { x } => {
                if wants(*x) {
                    accumulate(grads, *x, &mut |dst| dst.iter_mut().for_each(|d| *d += g[0]));
                }
            }
            Op::Mean { x } => {
                if wants(*x) {
                    let k = g[0] / self.value(*x).numel().max(1) as f32;
                    accumulate(grads, *x, &mut |dst| dst.iter_mut().for_each(|d| *d += k));
                }
            }
            Op::Custom { x, f } => {
                if wants(*x) {
                    let input = self.value(*x);
                    accumulate(grads, *x, &mut |dst| f.backward(input, &node.value, g, dst));
                }
            }
        }
    }
}

fn binary_name(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Add => "add",
        BinaryOp::Sub => "sub",
        BinaryOp::Mul => "mul",
    }
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
