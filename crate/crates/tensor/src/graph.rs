use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{dim_err, Result, TensorError};
use crate::ops::broadcast::{broadcast_shape, for_each_pair};
use crate::ops::conv::{conv2d_backward, conv2d_forward, ConvGeom};
use crate::ops::norm::{batch_norm_backward, batch_norm_forward, BatchStats};
use crate::ops::pool::{maxpool2x2_backward, maxpool2x2_forward};
use crate::ops::resize::ResizePlan;
use crate::ops::softmax::{softmax_backward, softmax_forward, split_axis};
use crate::scalar::Float;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Operator family of a recorded node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    LogSoftmax,
    Conv2d,
    MaxPool2x2,
    BatchNorm,
    Linear,
    BilinearResize,
    Reshape,
    Transpose,
    Concat,
    Slice,
    SumAll,
    SumAxis,
    Gather,
}

impl OpKind {
    pub const ALL: [OpKind; 22] = [
        OpKind::Leaf,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::Relu,
        OpKind::Tanh,
        OpKind::Sigmoid,
        OpKind::Softmax,
        OpKind::LogSoftmax,
        OpKind::Conv2d,
        OpKind::MaxPool2x2,
        OpKind::BatchNorm,
        OpKind::Linear,
        OpKind::BilinearResize,
        OpKind::Reshape,
        OpKind::Transpose,
        OpKind::Concat,
        OpKind::Slice,
        OpKind::SumAll,
        OpKind::SumAxis,
        OpKind::Gather,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softmax => "softmax",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::Conv2d => "conv2d",
            OpKind::MaxPool2x2 => "maxpool2x2",
            OpKind::BatchNorm => "batch_norm",
            OpKind::Linear => "linear",
            OpKind::BilinearResize => "bilinear_resize",
            OpKind::Reshape => "reshape",
            OpKind::Transpose => "transpose",
            OpKind::Concat => "concat",
            OpKind::Slice => "slice",
            OpKind::SumAll => "sum",
            OpKind::SumAxis => "sum_axis",
            OpKind::Gather => "gather",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

/// Batch-norm statistics source.
#[derive(Clone, Copy, Debug)]
pub enum BnMode<'a, T> {
    /// Normalize with the statistics of the current batch.
    Train,
    /// Normalize with fixed running statistics.
    Eval { mean: &'a [T], var: &'a [T] },
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax { x: Var, axis: usize, log: bool },
    Conv2d { x: Var, w: Var, geom: ConvGeom },
    MaxPool { x: Var, argmax: Vec<usize> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, train: bool },
    Linear { x: Var, w: Var },
    Resize { x: Var, plan: ResizePlan },
    Reshape(Var),
    Transpose(Var),
    Concat { xs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    SumAll(Var),
    SumAxis { x: Var, axis: usize },
    Gather { x: Var, index: usize },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Relu(_) => OpKind::Relu,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Softmax { log: false, .. } => OpKind::Softmax,
            Op::Softmax { log: true, .. } => OpKind::LogSoftmax,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::MaxPool { .. } => OpKind::MaxPool2x2,
            Op::BatchNorm { .. } => OpKind::BatchNorm,
            Op::Linear { .. } => OpKind::Linear,
            Op::Resize { .. } => OpKind::BilinearResize,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Concat { .. } => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::SumAll(_) => OpKind::SumAll,
            Op::SumAxis { .. } => OpKind::SumAxis,
            Op::Gather { .. } => OpKind::Gather,
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Tape of recorded operations. Nodes are appended in evaluation order, so
/// the tape is always topologically sorted.
pub struct Graph<T: Float> {
    nodes: Vec<Node<T>>,
    /// Faulty operator kind and the first node id no longer affected.
    sign_fault: Option<(OpKind, usize)>,
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by leaf.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Float> Gradients<T> {
    /// Gradient of a leaf; `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            sign_fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Negates every gradient contribution produced by operators of `kind`.
    /// Exists so that gradient checks can be shown to catch a broken rule.
    #[doc(hidden)]
    pub fn inject_sign_fault(&mut self, kind: OpKind) {
        self.sign_fault = Some((kind, usize::MAX));
    }

    /// Exempts every node recorded from now on from an injected fault.
    #[doc(hidden)]
    pub fn seal_sign_fault(&mut self) {
        if let Some((_, end)) = &mut self.sign_fault {
            *end = (*end).min(self.nodes.len());
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out_shape = broadcast_shape(&sa, &sb)?;
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); out_shape.iter().product()];
        for_each_pair(&sa, &sb, &out_shape, |o, i, j| out[o] = f(xa[i], xb[j]));
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(out_shape, out)?, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, k: T) -> Var {
        let v = self.value(x);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| a * k).collect())
            .expect("same shape");
        let rg = self.needs(&[x]);
        self.push(out, Op::Scale(x, k), rg)
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let v = self.value(x);
        let f: fn(T) -> T = match kind {
            Activation::Relu => |a| if a > T::zero() { a } else { T::zero() },
            Activation::Tanh => |a| a.tanh(),
            Activation::Sigmoid => |a| T::one() / (T::one() + (-a).exp()),
        };
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| f(a)).collect())
            .expect("same shape");
        let op = match kind {
            Activation::Relu => Op::Relu(x),
            Activation::Tanh => Op::Tanh(x),
            Activation::Sigmoid => Op::Sigmoid(x),
        };
        let rg = self.needs(&[x]);
        self.push(out, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    fn softmax_impl(&mut self, x: Var, axis: usize, log: bool) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return dim_err(format!("softmax axis {} out of range for {:?}", axis, shape));
        }
        let out = softmax_forward(self.value(x).data(), &shape, axis, log);
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { x, axis, log }, rg))
    }

    /// Softmax along `axis`, with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(x, axis, false)
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(x, axis, true)
    }

    /// Cross-correlation of NCHW input with a KCHW kernel. No bias.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(w), stride, pad)?;
        let out = conv2d_forward(&geom, self.value(x).data(), self.value(w).data());
        let shape = vec![geom.n, geom.k, geom.oh, geom.ow];
        let rg = self.needs(&[x, w]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Conv2d { x, w, geom }, rg))
    }

    pub fn maxpool2x2(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (out, argmax) = maxpool2x2_forward(self.value(x).data(), &shape)?;
        let out_shape = vec![shape[0], shape[1], shape[2] / 2, shape[3] / 2];
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(out_shape, out)?, Op::MaxPool { x, argmax }, rg))
    }

    /// Per-channel batch normalization over N, H and W. In train mode the
    /// batch statistics are returned so the caller can update running
    /// estimates.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_, T>,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let shape = self.shape(x).to_vec();
        let running = match mode {
            BnMode::Train => None,
            BnMode::Eval { mean, var } => Some((mean, var)),
        };
        let fwd = batch_norm_forward(
            self.value(x).data(),
            &shape,
            self.value(gamma).data(),
            self.value(beta).data(),
            running,
        )?;
        let rg = self.needs(&[x, gamma, beta]);
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat: fwd.xhat,
            inv_std: fwd.inv_std,
            train: running.is_none(),
        };
        let v = self.push(Tensor::new(shape, fwd.out)?, op, rg);
        Ok((v, fwd.stats))
    }

    /// `x·wᵀ` over the trailing axis of `x`; `w` is `[E, D]`. No bias.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || xs.is_empty() || *xs.last().unwrap() != ws[1] {
            return dim_err(format!("linear: input {:?} does not match weight {:?}", xs, ws));
        }
        let (e, d) = (ws[0], ws[1]);
        let rows = self.value(x).numel() / d.max(1);
        let mut out = vec![T::zero(); rows * e];
        T::gemm(rows, d, e, T::one(), self.value(x).data(), d, 1, self.value(w).data(), 1, d, T::zero(), &mut out, e, 1);
        let mut out_shape = xs;
        *out_shape.last_mut().unwrap() = e;
        let rg = self.needs(&[x, w]);
        Ok(self.push(Tensor::new(out_shape, out)?, Op::Linear { x, w }, rg))
    }

    /// Bilinear resampling of the two trailing axes of NCHW input.
    pub fn bilinear_resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 {
            return dim_err(format!("bilinear_resize expects NCHW input, got {:?}", shape));
        }
        if out_h == 0 || out_w == 0 || shape[2] == 0 || shape[3] == 0 {
            return dim_err("bilinear_resize extents must be positive");
        }
        let plan = ResizePlan::new(shape[0] * shape[1], shape[2], shape[3], out_h, out_w);
        let out = plan.forward(self.value(x).data());
        let rg = self.needs(&[x]);
        let out_shape = vec![shape[0], shape[1], out_h, out_w];
        Ok(self.push(Tensor::new(out_shape, out)?, Op::Resize { x, plan }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return dim_err(format!("transpose expects rank 2, got {:?}", shape));
        }
        let (r, c) = (shape[0], shape[1]);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(x), rg))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        if xs.is_empty() {
            return dim_err("concat of zero tensors");
        }
        let first = self.shape(xs[0]).to_vec();
        if axis >= first.len() {
            return dim_err(format!("concat axis {} out of range for {:?}", axis, first));
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            if s.len() != first.len()
                || s.iter().zip(&first).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return dim_err(format!("concat shape mismatch: {:?} vs {:?}", s, first));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let len = self.shape(v)[axis];
                let src = self.value(v).data();
                out.extend_from_slice(&src[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = self.needs(xs);
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat { xs: xs.to_vec(), axis }, rg))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return dim_err(format!(
                "slice [{}..{}) on axis {} out of range for {:?}",
                start,
                start + len,
                axis,
                shape
            ));
        }
        let (outer, full, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(out_shape, out)?, Op::Slice { x, axis, start }, rg))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    /// Sum along `axis`, removing it.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return dim_err(format!("sum axis {} out of range for {:?}", axis, shape));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let row = &src[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(out_shape, out)?, Op::SumAxis { x, axis }, rg))
    }

    /// Element at flat `index` as a rank-0 tensor.
    pub fn gather(&mut self, x: Var, index: usize) -> Result<Var> {
        let n = self.value(x).numel();
        if index >= n {
            return dim_err(format!("gather index {} out of range for {} elements", index, n));
        }
        let v = self.value(x).data()[index];
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::scalar(v), Op::Gather { x, index }, rg))
    }

    /// Hash of every piecewise-linear branch taken in the recorded pass
    /// (ReLU signs and max-pool winners). Two passes with equal signatures
    /// evaluated the same smooth piece of the function.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for chunk in self.nodes[x.0].value.data().chunks(64) {
                        let bits = chunk.iter().enumerate().fold(0u64, |b, (i, &v)| b | (u64::from(v > T::zero()) << i));
                        bits.hash(&mut h);
                    }
                }
                Op::MaxPool { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse-mode pass from a one-element `loss`. Gradients of leaves that
    /// appear several times are accumulated additively.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(root.value.shape().to_vec(), T::one()));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                grads[id] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let contributions = self.local_grads(node, &g);
            let flip = self.sign_fault.is_some_and(|(kind, end)| kind == node.op.kind() && id < end);
            for (v, mut t) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                if flip {
                    t.data_mut().iter_mut().for_each(|x| *x = -*x);
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn like(&self, v: Var, data: Vec<T>) -> Tensor<T> {
        Tensor::new(self.shape(v).to_vec(), data).expect("gradient matches input shape")
    }

    fn broadcast_grads(&self, a: Var, b: Var, g: &Tensor<T>, op: OpKind) -> Vec<(Var, Tensor<T>)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let gd = g.data();
        let mut ga = vec![T::zero(); xa.len()];
        let mut gb = vec![T::zero(); xb.len()];
        for_each_pair(sa, sb, g.shape(), |o, i, j| match op {
            OpKind::Add => {
                ga[i] += gd[o];
                gb[j] += gd[o];
            }
            OpKind::Sub => {
                ga[i] += gd[o];
                gb[j] -= gd[o];
            }
            _ => {
                ga[i] += gd[o] * xb[j];
                gb[j] += gd[o] * xa[i];
            }
        });
        vec![(a, self.like(a, ga)), (b, self.like(b, gb))]
    }

    fn local_grads(&self, node: &Node<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let gd = g.data();
        let y = node.value.data();
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => self.broadcast_grads(*a, *b, g, OpKind::Add),
            Op::Sub(a, b) => self.broadcast_grads(*a, *b, g, OpKind::Sub),
            Op::Mul(a, b) => self.broadcast_grads(*a, *b, g, OpKind::Mul),
            Op::Scale(x, k) => vec![(*x, self.like(*x, gd.iter().map(|&v| v * *k).collect()))],
            Op::Relu(x) => {
                let xs = self.value(*x).data();
                let d = xs
                    .iter()
                    .zip(gd)
                    .map(|(&a, &gv)| if a > T::zero() { gv } else { T::zero() })
                    .collect();
                vec![(*x, self.like(*x, d))]
            }
            Op::Tanh(x) => {
                let d = y.iter().zip(gd).map(|(&t, &gv)| gv * (T::one() - t * t)).collect();
                vec![(*x, self.like(*x, d))]
            }
            Op::Sigmoid(x) => {
                let d = y.iter().zip(gd).map(|(&s, &gv)| gv * s * (T::one() - s)).collect();
                vec![(*x, self.like(*x, d))]
            }
            Op::Softmax { x, axis, log } => {
                let d = softmax_backward(y, gd, node.value.shape(), *axis, *log);
                vec![(*x, self.like(*x, d))]
            }
            Op::Conv2d { x, w, geom } => {
                let (dx, dw) = conv2d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gd,
                    self.wants(*x),
                    self.wants(*w),
                );
                let mut out = Vec::new();
                if let Some(dx) = dx {
                    out.push((*x, self.like(*x, dx)));
                }
                if let Some(dw) = dw {
                    out.push((*w, self.like(*w, dw)));
                }
                out
            }
            Op::MaxPool { x, argmax } => {
                let d = maxpool2x2_backward(argmax, gd, self.value(*x).numel());
                vec![(*x, self.like(*x, d))]
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                let (dx, dgamma, dbeta) = batch_norm_backward(
                    self.shape(*x),
                    xhat,
                    inv_std,
                    self.value(*gamma).data(),
                    gd,
                    *train,
                );
                vec![
                    (*x, self.like(*x, dx)),
                    (*gamma, self.like(*gamma, dgamma)),
                    (*beta, self.like(*beta, dbeta)),
                ]
            }
            Op::Linear { x, w } => {
                let ws = self.shape(*w);
                let (e, d) = (ws[0], ws[1]);
                let rows = self.value(*x).numel() / d.max(1);
                let mut out = Vec::new();
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); rows * d];
                    T::gemm(rows, e, d, T::one(), gd, e, 1, self.value(*w).data(), d, 1, T::zero(), &mut dx, d, 1);
                    out.push((*x, self.like(*x, dx)));
                }
                if self.wants(*w) {
                    let mut dw = vec![T::zero(); e * d];
                    T::gemm(e, rows, d, T::one(), gd, 1, e, self.value(*x).data(), d, 1, T::zero(), &mut dw, d, 1);
                    out.push((*w, self.like(*w, dw)));
                }
                out
            }
            Op::Resize { x, plan } => vec![(*x, self.like(*x, plan.backward(gd)))],
            Op::Reshape(x) => vec![(*x, self.like(*x, gd.to_vec()))],
            Op::Transpose(x) => {
                let s = self.shape(*x);
                let (r, c) = (s[0], s[1]);
                let mut d = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[i * c + j] = gd[j * r + i];
                    }
                }
                vec![(*x, self.like(*x, d))]
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = split_axis(g.shape(), *axis);
                let mut offset = 0;
                let mut out = Vec::with_capacity(xs.len());
                for &v in xs {
                    let len = self.shape(v)[*axis];
                    let mut d = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let base = o * total * inner + offset * inner;
                        d.extend_from_slice(&gd[base..base + len * inner]);
                    }
                    offset += len;
                    out.push((v, self.like(v, d)));
                }
                out
            }
            Op::Slice { x, axis, start } => {
                let (outer, full, inner) = split_axis(self.shape(*x), *axis);
                let len = g.shape()[*axis];
                let mut d = vec![T::zero(); outer * full * inner];
                for o in 0..outer {
                    let base = o * full * inner + start * inner;
                    d[base..base + len * inner]
                        .copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                vec![(*x, self.like(*x, d))]
            }
            Op::SumAll(x) => {
                let n = self.value(*x).numel();
                vec![(*x, self.like(*x, vec![gd[0]; n]))]
            }
            Op::SumAxis { x, axis } => {
                let (outer, len, inner) = split_axis(self.shape(*x), *axis);
                let mut d = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    for l in 0..len {
                        d[(o * len + l) * inner..(o * len + l + 1) * inner]
                            .copy_from_slice(&gd[o * inner..(o + 1) * inner]);
                    }
                }
                vec![(*x, self.like(*x, d))]
            }
            Op::Gather { x, index } => {
                let mut d = vec![T::zero(); self.value(*x).numel()];
                d[*index] = gd[0];
                vec![(*x, self.like(*x, d))]
            }
        }
    }
}
