//! Trainable parameters and a tape for reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass as a node that
//! owns its output value. Nodes are appended in evaluation order, so the
//! tape is already a topological order and [`Graph::backward`] walks it
//! once from the back.

use std::fmt;

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{Element, Tensor};

/// Sub-network a parameter belongs to. Each group has its own learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Embedding,
    Rm,
    Fc,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Embedding, Group::Rm, Group::Fc];

    pub fn name(self) -> &'static str {
        match self {
            Group::Embedding => "embedding",
            Group::Rm => "rm",
            Group::Fc => "fc",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A trainable tensor and its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    name: String,
    group: Group,
    value: Tensor<T>,
    grad: Tensor<T>,
}

impl<T: Element> Parameter<T> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn grad(&self) -> &Tensor<T> {
        &self.grad
    }

    pub(crate) fn value_mut(&mut self) -> &mut [T] {
        self.value.data_mut()
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [T], &mut [T]) {
        (self.value.data_mut(), self.grad.data_mut())
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Every parameter of a model, addressable by id or by stable path name.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, group: Group, value: Tensor<T>) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            group,
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Replace a parameter value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if value.shape() != p.value.shape() {
            return Err(Error::dim(format!(
                "parameter {} has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Same parameters in another element type. Gradients start at zero.
    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.add(p.name.clone(), p.group, p.value.cast());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Batch statistics observed by a train-mode batch norm, to be folded into
/// the running statistics of normalization layer `layer` once the step is
/// committed.
#[derive(Clone, Debug)]
pub struct NormUpdate<T> {
    pub layer: usize,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// How a batch-norm node normalizes.
pub enum NormMode<'a, T> {
    /// Batch statistics; the observed statistics are recorded for `layer`.
    Train { layer: usize },
    /// Fixed running statistics.
    Eval { mean: &'a [T], var: &'a [T] },
}

enum Op<T> {
    Input,
    Param(ParamId),
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
    },
    MaxPool {
        x: NodeId,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Tensor<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    ConcatChannels {
        a: NodeId,
        b: NodeId,
    },
    ConcatBatch(Vec<NodeId>),
    NarrowBatch {
        x: NodeId,
        start: usize,
    },
    SelectBatch {
        x: NodeId,
        indices: Vec<usize>,
    },
    Reshape(NodeId),
    SquaredError {
        x: NodeId,
        target: Tensor<T>,
    },
    CrossEntropy {
        p: NodeId,
        target: Tensor<T>,
    },
    WeightedSum(Vec<(NodeId, T)>),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Floor applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// Batch-mean squared error: `(1/B) Σ_i Σ_j (x_ij − y_ij)²` for `[B, K]`.
pub fn squared_error<T: Element>(x: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if x.ndim() != 2 || x.shape() != target.shape() {
        return Err(Error::dim(format!(
            "squared error of {:?} against {:?}",
            x.shape(),
            target.shape()
        )));
    }
    let mut s = T::zero();
    for (&a, &b) in x.data().iter().zip(target.data()) {
        let d = a - b;
        s += d * d;
    }
    Ok(s / T::from_usize(x.shape()[0]).unwrap())
}

/// Batch-mean cross entropy of probability rows against targets, with the
/// log argument clamped below at [`LOG_FLOOR`].
pub fn cross_entropy<T: Element>(p: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if p.ndim() != 2 || p.shape() != target.shape() {
        return Err(Error::dim(format!(
            "cross entropy of {:?} against {:?}",
            p.shape(),
            target.shape()
        )));
    }
    let floor = T::from_f64_lossy(LOG_FLOOR);
    let mut s = T::zero();
    for (&pv, &y) in p.data().iter().zip(target.data()) {
        if y != T::zero() {
            // Written as a comparison so that a NaN probability stays NaN.
            let clamped = if pv < floor { floor } else { pv };
            s += y * clamped.ln();
        }
    }
    Ok(-s / T::from_usize(p.shape()[0]).unwrap())
}

/// A recorded forward computation.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    norm_updates: Vec<NormUpdate<T>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            norm_updates: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Running-statistic updates collected by train-mode batch norms.
    pub fn norm_updates(&self) -> &[NormUpdate<T>] {
        &self.norm_updates
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[NodeId]) -> NodeId {
        let needs_grad = match op {
            Op::Input => false,
            Op::Param(_) => true,
            _ => inputs.iter().any(|i| self.nodes[i.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant leaf. It never receives a gradient.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Input, &[])
    }

    /// A leaf holding a copy of a parameter's current value.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        self.push(store.get(id).value.clone(), Op::Param(id), &[])
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let v = kernels::conv2d(self.value(x), self.value(w), self.value(b), stride, padding)?;
        Ok(self.push(
            v,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                padding,
            },
            &[x, w, b],
        ))
    }

    pub fn maxpool2x2(&mut self, x: NodeId) -> Result<NodeId> {
        let (v, argmax) = kernels::maxpool2x2(self.value(x))?;
        Ok(self.push(v, Op::MaxPool { x, argmax }, &[x]))
    }

    pub fn batchnorm2d(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: T,
        mode: NormMode<'_, T>,
    ) -> Result<NodeId> {
        let (v, xhat, inv_std, train) = match mode {
            NormMode::Train { layer } => {
                let (v, xhat, stats) =
                    kernels::batchnorm2d_train(self.value(x), self.value(gamma), self.value(beta), eps)?;
                self.norm_updates.push(NormUpdate {
                    layer,
                    mean: stats.mean,
                    var: stats.var,
                });
                (v, xhat, stats.inv_std, true)
            }
            NormMode::Eval { mean, var } => {
                let (v, xhat, inv_std) = kernels::batchnorm2d_eval(
                    self.value(x),
                    self.value(gamma),
                    self.value(beta),
                    mean,
                    var,
                    eps,
                )?;
                (v, xhat, inv_std, false)
            }
        };
        Ok(self.push(
            v,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let v = kernels::linear(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(v, Op::Linear { x, w, b }, &[x, w, b]))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = kernels::relu(self.value(x));
        self.push(v, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = kernels::sigmoid(self.value(x));
        self.push(v, Op::Sigmoid(x), &[x])
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = kernels::softmax_rows(self.value(x))?;
        Ok(self.push(v, Op::Softmax(x), &[x]))
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = kernels::concat_channels(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::ConcatChannels { a, b }, &[a, b]))
    }

    pub fn concat_batch(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::cat_batch(&values)?;
        Ok(self.push(v, Op::ConcatBatch(parts.to_vec()), parts))
    }

    pub fn narrow_batch(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(x).narrow_batch(start, len)?;
        Ok(self.push(v, Op::NarrowBatch { x, start }, &[x]))
    }

    pub fn select_batch(&mut self, x: NodeId, indices: &[usize]) -> Result<NodeId> {
        let v = self.value(x).select_batch(indices)?;
        Ok(self.push(
            v,
            Op::SelectBatch {
                x,
                indices: indices.to_vec(),
            },
            &[x],
        ))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(x).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x), &[x]))
    }

    /// Scalar `(1/B) Σ (x − target)²` over a `[B, K]` node.
    pub fn squared_error(&mut self, x: NodeId, target: &Tensor<T>) -> Result<NodeId> {
        let v = squared_error(self.value(x), target)?;
        Ok(self.push(
            Tensor::scalar(v),
            Op::SquaredError {
                x,
                target: target.clone(),
            },
            &[x],
        ))
    }

    /// Scalar `−(1/B) Σ_i target_iᵀ log p_i` over a `[B, K]` probability node.
    pub fn cross_entropy(&mut self, p: NodeId, target: &Tensor<T>) -> Result<NodeId> {
        let v = cross_entropy(self.value(p), target)?;
        Ok(self.push(
            Tensor::scalar(v),
            Op::CrossEntropy {
                p,
                target: target.clone(),
            },
            &[p],
        ))
    }

    /// Scalar `Σ w_i · x_i` of scalar nodes, accumulated left to right.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, T)]) -> Result<NodeId> {
        if terms.is_empty() {
            return Err(Error::dim("weighted sum of no terms"));
        }
        let mut acc = T::zero();
        for &(id, w) in terms {
            let v = self.value(id);
            if v.len() != 1 {
                return Err(Error::dim(format!(
                    "weighted sum term has shape {:?}, expected a scalar",
                    v.shape()
                )));
            }
            acc += w * v.item();
        }
        let inputs: Vec<NodeId> = terms.iter().map(|t| t.0).collect();
        Ok(self.push(Tensor::scalar(acc), Op::WeightedSum(terms.to_vec()), &inputs))
    }

    /// Fingerprint of the active linear piece: the sign of every ReLU input
    /// and every max-pool argmax. Two evaluations with equal signatures lie
    /// on the same smooth piece of the network function.
    pub fn kink_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for &v in self.value(*x).data() {
                        feed(u64::from(v > T::zero()));
                    }
                }
                Op::MaxPool { argmax, .. } => argmax.iter().for_each(|&i| feed(i as u64)),
                _ => {}
            }
        }
        h
    }

    /// Accumulate `∂root/∂p` into the gradient of every parameter `p`
    /// reachable from `root`.
    pub fn backward(&self, root: NodeId, store: &mut ParamStore<T>) -> Result<()> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar root, got shape {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::from_parts(rv.shape().to_vec(), vec![T::one()]));

        for idx in (0..=root.0).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let wants = |id: NodeId| self.nodes[id.0].needs_grad;
            let send = |id: NodeId, g: Tensor<T>, grads: &mut Vec<Option<Tensor<T>>>| {
                if !self.nodes[id.0].needs_grad {
                    return;
                }
                match &mut grads[id.0] {
                    Some(acc) => {
                        for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(pid) => {
                    let p = store.get_mut(*pid);
                    for (a, &b) in p.grad.data_mut().iter_mut().zip(gy.data()) {
                        *a += b;
                    }
                }
                Op::Conv2d {
                    x,
                    w,
                    b,
                    stride,
                    padding,
                } => {
                    let g = kernels::conv2d_backward(
                        self.value(*x),
                        self.value(*w),
                        &gy,
                        *stride,
                        *padding,
                        wants(*x),
                    )?;
                    if let Some(dx) = g.input {
                        send(*x, dx, &mut grads);
                    }
                    send(*w, g.weight, &mut grads);
                    send(*b, g.bias, &mut grads);
                }
                Op::MaxPool { x, argmax } => {
                    let dx = kernels::maxpool2x2_backward(self.value(*x).shape(), argmax, &gy);
                    send(*x, dx, &mut grads);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    train,
                } => {
                    let g = if *train {
                        kernels::batchnorm2d_train_backward(xhat, self.value(*gamma), inv_std, &gy)
                    } else {
                        kernels::batchnorm2d_eval_backward(xhat, self.value(*gamma), inv_std, &gy)
                    };
                    send(*x, g.input, &mut grads);
                    send(*gamma, g.gamma, &mut grads);
                    send(*beta, g.beta, &mut grads);
                }
                Op::Linear { x, w, b } => {
                    let g = kernels::linear_backward(self.value(*x), self.value(*w), &gy, wants(*x));
                    if let Some(dx) = g.input {
                        send(*x, dx, &mut grads);
                    }
                    send(*w, g.weight, &mut grads);
                    send(*b, g.bias, &mut grads);
                }
                Op::Relu(x) => {
                    let dx = kernels::relu_backward(self.value(*x), &gy);
                    send(*x, dx, &mut grads);
                }
                Op::Sigmoid(x) => {
                    let dx = kernels::sigmoid_backward(&node.value, &gy);
                    send(*x, dx, &mut grads);
                }
                Op::Softmax(x) => {
                    let dx = kernels::softmax_rows_backward(&node.value, &gy);
                    send(*x, dx, &mut grads);
                }
                Op::ConcatChannels { a, b } => {
                    let (ga, gb) = kernels::split_channels(&gy, self.value(*a).shape()[1]);
                    send(*a, ga, &mut grads);
                    send(*b, gb, &mut grads);
                }
                Op::ConcatBatch(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let n = self.value(p).shape()[0];
                        send(p, gy.narrow_batch(start, n)?, &mut grads);
                        start += n;
                    }
                }
                Op::NarrowBatch { x, start } => {
                    let xv = self.value(*x);
                    let (_, row) = xv.rows();
                    let mut dx = Tensor::zeros(xv.shape());
                    dx.data_mut()[start * row..start * row + gy.len()].copy_from_slice(gy.data());
                    send(*x, dx, &mut grads);
                }
                Op::SelectBatch { x, indices } => {
                    let xv = self.value(*x);
                    let (_, row) = xv.rows();
                    let mut dx = Tensor::zeros(xv.shape());
                    let d = dx.data_mut();
                    for (k, &i) in indices.iter().enumerate() {
                        for (a, &b) in d[i * row..(i + 1) * row]
                            .iter_mut()
                            .zip(&gy.data()[k * row..(k + 1) * row])
                        {
                            *a += b;
                        }
                    }
                    send(*x, dx, &mut grads);
                }
                Op::Reshape(x) => {
                    let dx = gy.reshape(self.value(*x).shape())?;
                    send(*x, dx, &mut grads);
                }
                Op::SquaredError { x, target } => {
                    let xv = self.value(*x);
                    let scale = gy.item() * T::from_f64_lossy(2.0) / T::from_usize(xv.shape()[0]).unwrap();
                    let dx = Tensor::from_parts(
                        xv.shape().to_vec(),
                        xv.data()
                            .iter()
                            .zip(target.data())
                            .map(|(&a, &b)| scale * (a - b))
                            .collect(),
                    );
                    send(*x, dx, &mut grads);
                }
                Op::CrossEntropy { p, target } => {
                    let pv = self.value(*p);
                    let floor = T::from_f64_lossy(LOG_FLOOR);
                    let scale = -gy.item() / T::from_usize(pv.shape()[0]).unwrap();
                    let dp = Tensor::from_parts(
                        pv.shape().to_vec(),
                        pv.data()
                            .iter()
                            .zip(target.data())
                            .map(|(&pr, &y)| {
                                if y != T::zero() && pr > floor {
                                    scale * y / pr
                                } else {
                                    T::zero()
                                }
                            })
                            .collect(),
                    );
                    send(*p, dp, &mut grads);
                }
                Op::WeightedSum(terms) => {
                    for &(id, w) in terms {
                        send(id, Tensor::scalar(w * gy.item()), &mut grads);
                    }
                }
            }
        }
        Ok(())
    }
}
