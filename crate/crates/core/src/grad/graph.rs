//! Static computation graphs over dense tensors.
//!
//! A graph is built once (shapes are inferred and checked at build time),
//! then evaluated any number of times against fresh leaf bindings. The
//! forward pass retains every intermediate activation; the backward pass
//! replays the node list in reverse exactly once and only visits nodes on
//! a path from a trainable leaf to the output, so frozen parameters cost
//! nothing and never receive gradients.

use std::collections::BTreeMap;

use super::kernels as k;
use super::kernels::ConvDims;
use super::scalar::Scalar;
use super::tensor::Tensor;
use super::GradError;

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf { trainable: bool },
    Const { data: Vec<f32> },
    MatMul,
    Conv2d { stride: usize, pad: usize },
    BiasAdd,
    Relu,
    Sigmoid,
    Add,
    Mul,
    GlobalMean,
    Film,
    MeanAbsErr,
    SoftmaxXent { target: usize },
    Upsample2x,
    Crop2d,
    Reshape,
    OverlapAdd { hop: usize, norm: Vec<f32>, offset: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub shape: Vec<usize>,
    pub label: String,
    pub needs_grad: bool,
}

/// Leaf bindings for one evaluation.
pub type Bindings = BTreeMap<NodeId, Tensor>;

#[derive(Debug, Clone, Default)]
struct ExecState {
    values: Vec<Vec<f32>>,
    ready: bool,
}

#[derive(Debug, Clone)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    output: Option<NodeId>,
    state: ExecState,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), output: None, state: ExecState::default() }
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, shape: Vec<usize>, label: String) -> NodeId {
        let needs_grad = match op {
            Op::Leaf { trainable } => trainable,
            Op::Const { .. } => false,
            _ => inputs.iter().any(|&i| self.nodes[i].needs_grad),
        };
        self.nodes.push(Node { op, inputs, shape, label, needs_grad });
        self.nodes.len() - 1
    }

    fn shape_err(&self, op: &str, label: &str, detail: String) -> GradError {
        GradError::Shape { node: format!("{label} ({op})"), detail }
    }

    // ── builders ─────────────────────────────────────────────────────

    /// An input slot bound at evaluation time. Trainable leaves are the
    /// only nodes that receive gradients from `backpropagate`.
    pub fn leaf(&mut self, name: &str, shape: &[usize], trainable: bool) -> NodeId {
        self.push(Op::Leaf { trainable }, vec![], shape.to_vec(), name.to_string())
    }

    /// A constant baked into the graph.
    pub fn constant(&mut self, name: &str, shape: &[usize], data: Vec<f32>) -> Result<NodeId, GradError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(self.shape_err("const", name, format!("shape {:?} vs {} values", shape, data.len())));
        }
        Ok(self.push(Op::Const { data }, vec![], shape.to_vec(), name.to_string()))
    }

    /// (m,k)·(k,n) → (m,n), or (m,k)·(k) → (m).
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let sa = self.nodes[a].shape.clone();
        let sb = self.nodes[b].shape.clone();
        let label = format!("matmul#{}", self.nodes.len());
        let (shape, ok) = match (sa.as_slice(), sb.as_slice()) {
            ([m, ka], [kb, n]) => (vec![*m, *n], ka == kb),
            ([m, ka], [kb]) => (vec![*m], ka == kb),
            _ => (vec![], false),
        };
        if !ok {
            return Err(self.shape_err("matmul", &label, format!("{sa:?} x {sb:?}")));
        }
        Ok(self.push(Op::MatMul, vec![a, b], shape, label))
    }

    /// input (C_in,H,W) with kernel (C_out,C_in,kh,kw), zero padding.
    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, stride: usize, pad: usize) -> Result<NodeId, GradError> {
        let si = self.nodes[input].shape.clone();
        let sk = self.nodes[kernel].shape.clone();
        let label = format!("conv2d#{}", self.nodes.len());
        let ([ci, h, w], [co, ck, kh, kw]) = (
            <[usize; 3]>::try_from(si.as_slice())
                .map_err(|_| self.shape_err("conv2d", &label, format!("input {si:?} not 3-d")))?,
            <[usize; 4]>::try_from(sk.as_slice())
                .map_err(|_| self.shape_err("conv2d", &label, format!("kernel {sk:?} not 4-d")))?,
        );
        if ci != ck {
            return Err(self.shape_err("conv2d", &label, format!("input channels {ci} vs kernel {ck}")));
        }
        if stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(self.shape_err("conv2d", &label, format!("kernel {kh}x{kw} too large for {h}x{w} pad {pad}")));
        }
        let d = ConvDims { c_in: ci, h_in: h, w_in: w, c_out: co, kh, kw, stride, pad };
        Ok(self.push(Op::Conv2d { stride, pad }, vec![input, kernel], vec![co, d.h_out(), d.w_out()], label))
    }

    /// x (C,...) + bias (C), bias broadcast over trailing dims.
    pub fn bias_add(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, GradError> {
        let sx = self.nodes[x].shape.clone();
        let sb = self.nodes[bias].shape.clone();
        let label = format!("bias_add#{}", self.nodes.len());
        if sb.len() != 1 || sb[0] != sx[0] {
            return Err(self.shape_err("bias_add", &label, format!("x {sx:?} vs bias {sb:?}")));
        }
        Ok(self.push(Op::BiasAdd, vec![x, bias], sx, label))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let shape = self.nodes[x].shape.clone();
        let label = format!("relu#{}", self.nodes.len());
        self.push(Op::Relu, vec![x], shape, label)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let shape = self.nodes[x].shape.clone();
        let label = format!("sigmoid#{}", self.nodes.len());
        self.push(Op::Sigmoid, vec![x], shape, label)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.same_shape_binary(a, b, Op::Add, "add")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        self.same_shape_binary(a, b, Op::Mul, "mul")
    }

    fn same_shape_binary(&mut self, a: NodeId, b: NodeId, op: Op, name: &str) -> Result<NodeId, GradError> {
        let sa = self.nodes[a].shape.clone();
        let sb = self.nodes[b].shape.clone();
        let label = format!("{name}#{}", self.nodes.len());
        if sa != sb {
            return Err(self.shape_err(name, &label, format!("{sa:?} vs {sb:?}")));
        }
        Ok(self.push(op, vec![a, b], sa, label))
    }

    /// Per-channel mean over all time-frequency positions: (C,H,W) → (C).
    pub fn global_mean(&mut self, x: NodeId) -> Result<NodeId, GradError> {
        let sx = self.nodes[x].shape.clone();
        let label = format!("global_mean#{}", self.nodes.len());
        if sx.len() != 3 {
            return Err(self.shape_err("global_mean", &label, format!("{sx:?} not 3-d")));
        }
        Ok(self.push(Op::GlobalMean, vec![x], vec![sx[0]], label))
    }

    /// Per-channel affine modulation: x (C,H,W), scale (C), shift (C).
    pub fn film(&mut self, x: NodeId, scale: NodeId, shift: NodeId) -> Result<NodeId, GradError> {
        let sx = self.nodes[x].shape.clone();
        let ss = self.nodes[scale].shape.clone();
        let st = self.nodes[shift].shape.clone();
        let label = format!("film#{}", self.nodes.len());
        if sx.len() != 3 || ss != vec![sx[0]] || st != vec![sx[0]] {
            return Err(self.shape_err("film", &label, format!("x {sx:?} scale {ss:?} shift {st:?}")));
        }
        Ok(self.push(Op::Film, vec![x, scale, shift], sx, label))
    }

    /// mean |a − b| → scalar.
    pub fn mean_abs_err(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let sa = self.nodes[a].shape.clone();
        let sb = self.nodes[b].shape.clone();
        let label = format!("mean_abs_err#{}", self.nodes.len());
        if sa != sb {
            return Err(self.shape_err("mean_abs_err", &label, format!("{sa:?} vs {sb:?}")));
        }
        Ok(self.push(Op::MeanAbsErr, vec![a, b], vec![1], label))
    }

    /// −log softmax(logits)[target] → scalar.
    pub fn softmax_xent(&mut self, logits: NodeId, target: usize) -> Result<NodeId, GradError> {
        let sl = self.nodes[logits].shape.clone();
        let label = format!("softmax_xent#{}", self.nodes.len());
        if sl.len() != 1 || target >= sl[0] {
            return Err(self.shape_err("softmax_xent", &label, format!("logits {sl:?}, target {target}")));
        }
        Ok(self.push(Op::SoftmaxXent { target }, vec![logits], vec![1], label))
    }

    /// Nearest-neighbour 2x upsample: (C,H,W) → (C,2H,2W).
    pub fn upsample2x(&mut self, x: NodeId) -> Result<NodeId, GradError> {
        let sx = self.nodes[x].shape.clone();
        let label = format!("upsample2x#{}", self.nodes.len());
        if sx.len() != 3 {
            return Err(self.shape_err("upsample2x", &label, format!("{sx:?} not 3-d")));
        }
        Ok(self.push(Op::Upsample2x, vec![x], vec![sx[0], 2 * sx[1], 2 * sx[2]], label))
    }

    /// Top-left crop of the two trailing dims: (C,H,W) → (C,h,w).
    pub fn crop2d(&mut self, x: NodeId, h: usize, w: usize) -> Result<NodeId, GradError> {
        let sx = self.nodes[x].shape.clone();
        let label = format!("crop2d#{}", self.nodes.len());
        if sx.len() != 3 || h == 0 || w == 0 || h > sx[1] || w > sx[2] {
            return Err(self.shape_err("crop2d", &label, format!("{sx:?} to ({h},{w})")));
        }
        Ok(self.push(Op::Crop2d, vec![x], vec![sx[0], h, w], label))
    }

    /// Reinterpret the element order under a new shape (same element count).
    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, GradError> {
        let sx = self.nodes[x].shape.clone();
        let label = format!("reshape#{}", self.nodes.len());
        if shape.iter().product::<usize>() != sx.iter().product::<usize>() {
            return Err(self.shape_err("reshape", &label, format!("{sx:?} to {shape:?}")));
        }
        Ok(self.push(Op::Reshape, vec![x], shape.to_vec(), label))
    }

    /// Overlap-add fold of time-domain frames (F, frame_len) at stride
    /// `hop` over a padded timeline of `norm.len()` samples, dividing by
    /// `norm` and slicing [offset, offset+out_len).
    pub fn overlap_add(
        &mut self,
        frames: NodeId,
        hop: usize,
        norm: Vec<f32>,
        offset: usize,
        out_len: usize,
    ) -> Result<NodeId, GradError> {
        let sf = self.nodes[frames].shape.clone();
        let label = format!("overlap_add#{}", self.nodes.len());
        if sf.len() != 2 {
            return Err(self.shape_err("overlap_add", &label, format!("frames {sf:?} not 2-d")));
        }
        let needed = (sf[0] - 1) * hop + sf[1];
        if norm.len() < needed || offset + out_len > norm.len() {
            return Err(self.shape_err(
                "overlap_add",
                &label,
                format!("timeline {} too short for {} frames (need {needed}) or slice {offset}+{out_len}", norm.len(), sf[0]),
            ));
        }
        Ok(self.push(Op::OverlapAdd { hop, norm, offset }, vec![frames], vec![out_len], label))
    }

    /// Designate the node whose value `evaluate` returns.
    pub fn set_output(&mut self, id: NodeId) {
        self.output = Some(id);
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    pub fn node_shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].shape
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Ids of all leaves, in insertion order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_trainable_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes[id].op, Op::Leaf { trainable: true })
    }

    // ── execution ────────────────────────────────────────────────────

    /// Run the forward pass against `bindings` and return the output
    /// value. Intermediate activations are retained for `backpropagate`.
    pub fn evaluate(&mut self, bindings: &Bindings) -> Result<Tensor, GradError> {
        let out = self.output.ok_or_else(|| GradError::Shape {
            node: "graph".into(),
            detail: "no output node designated".into(),
        })?;
        self.check_bindings(bindings)?;
        self.state.ready = false;
        if self.state.values.len() != self.nodes.len() {
            self.state.values = vec![Vec::new(); self.nodes.len()];
        }
        let mut values = std::mem::take(&mut self.state.values);
        let r = exec_pass::<f32, _>(
            &self.nodes,
            |id| bindings.get(&id).map(|t| BoundSlice::Wide(t.data())),
            &mut values,
        );
        self.state.values = values;
        r?;
        self.state.ready = true;
        Tensor::new(&self.nodes[out].shape, self.state.values[out].clone())
    }

    /// Reverse pass from the retained activations. `upstream` must match
    /// the output shape; pass `[1.0]` for scalar losses. Returns gradients
    /// for exactly the trainable leaves.
    pub fn backpropagate(&mut self, upstream: &Tensor) -> Result<BTreeMap<NodeId, Tensor>, GradError> {
        if !self.state.ready {
            return Err(GradError::BackwardBeforeForward);
        }
        let out = self.output.expect("ready state implies output");
        if upstream.shape() != self.nodes[out].shape.as_slice() {
            return Err(GradError::Shape {
                node: "upstream".into(),
                detail: format!("{:?} vs output {:?}", upstream.shape(), self.nodes[out].shape),
            });
        }
        let grads = backward_pass::<f32>(&self.nodes, &self.state.values, out, upstream.data())?;
        grads
            .into_iter()
            .map(|(id, g)| Tensor::new(&self.nodes[id].shape, g).map(|t| (id, t)))
            .collect()
    }

    fn check_bindings(&self, bindings: &Bindings) -> Result<(), GradError> {
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { .. } = node.op {
                match bindings.get(&id) {
                    None => return Err(GradError::UnboundLeaf(node.label.clone())),
                    Some(t) if t.shape() != node.shape.as_slice() => {
                        return Err(GradError::Shape {
                            node: node.label.clone(),
                            detail: format!("bound {:?}, declared {:?}", t.shape(), node.shape),
                        });
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Forward pass at f64 precision without touching retained state.
    /// Used by the finite-difference harness.
    pub(crate) fn eval_f64(&self, bindings: &BTreeMap<NodeId, Vec<f64>>) -> Result<Vec<Vec<f64>>, GradError> {
        let mut values = vec![Vec::new(); self.nodes.len()];
        exec_pass::<f64, _>(
            &self.nodes,
            |id| bindings.get(&id).map(|v| BoundSlice::Native(v.as_slice())),
            &mut values,
        )?;
        Ok(values)
    }

    pub(crate) fn backward_f64(
        &self,
        values: &[Vec<f64>],
        upstream: &[f64],
    ) -> Result<BTreeMap<NodeId, Vec<f64>>, GradError> {
        let out = self.output.ok_or(GradError::BackwardBeforeForward)?;
        backward_pass::<f64>(&self.nodes, values, out, upstream)
    }
}

// ── generic forward ──────────────────────────────────────────────────

fn exec_pass<'a, T, F>(nodes: &[Node], binding: F, values: &mut [Vec<T>]) -> Result<(), GradError>
where
    T: Scalar,
    F: Fn(NodeId) -> Option<BoundSlice<'a, T>>,
{
    for (id, node) in nodes.iter().enumerate() {
        let numel: usize = node.shape.iter().product();
        // split_at_mut: inputs always precede the node being written
        let (prior, rest) = values.split_at_mut(id);
        let out = &mut rest[0];
        out.clear();
        out.resize(numel, T::ZERO);
        let input = |i: usize| -> &[T] { &prior[node.inputs[i]] };
        match &node.op {
            Op::Leaf { .. } => {
                let bound = binding(id).ok_or_else(|| GradError::UnboundLeaf(node.label.clone()))?;
                bound.write_to(out);
            }
            Op::Const { data } => {
                for (o, &v) in out.iter_mut().zip(data) {
                    *o = T::from_f32(v);
                }
            }
            Op::MatMul => {
                let sa = &nodes[node.inputs[0]].shape;
                let (m, kk) = (sa[0], sa[1]);
                let n = nodes[node.inputs[1]].shape.get(1).copied().unwrap_or(1);
                k::matmul(input(0), input(1), m, kk, n, out);
            }
            Op::Conv2d { stride, pad } => {
                let d = conv_dims(nodes, node, *stride, *pad);
                k::conv2d(input(0), input(1), d, out);
            }
            Op::BiasAdd => {
                let block = block_of(&node.shape);
                k::bias_add(input(0), input(1), block, out);
            }
            Op::Relu => k::relu(input(0), out),
            Op::Sigmoid => k::sigmoid(input(0), out),
            Op::Add => k::add(input(0), input(1), out),
            Op::Mul => k::mul(input(0), input(1), out),
            Op::GlobalMean => {
                let s = &nodes[node.inputs[0]].shape;
                k::global_mean(input(0), s[1] * s[2], out);
            }
            Op::Film => {
                let s = &nodes[node.inputs[0]].shape;
                k::film(input(0), input(1), input(2), s[1] * s[2], out);
            }
            Op::MeanAbsErr => out[0] = k::mean_abs_err(input(0), input(1)),
            Op::SoftmaxXent { target } => out[0] = k::softmax_xent(input(0), *target),
            Op::Upsample2x => {
                let s = &nodes[node.inputs[0]].shape;
                k::upsample2x(input(0), s[0], s[1], s[2], out);
            }
            Op::Crop2d => {
                let s = &nodes[node.inputs[0]].shape;
                k::crop2d(input(0), s[0], s[1], s[2], node.shape[1], node.shape[2], out);
            }
            Op::Reshape => out.copy_from_slice(input(0)),
            Op::OverlapAdd { hop, norm, offset } => {
                let s = &nodes[node.inputs[0]].shape;
                k::overlap_add(input(0), s[0], s[1], *hop, norm, *offset, node.shape[0], out);
            }
        }
    }
    Ok(())
}

/// A bound leaf value: either f32 tensor data (production) or native
/// slices (f64 verification).
pub(crate) enum BoundSlice<'a, T> {
    Native(&'a [T]),
    Wide(&'a [f32]),
}

impl<'a, T: Scalar> BoundSlice<'a, T> {
    fn write_to(&self, out: &mut [T]) {
        match self {
            BoundSlice::Native(s) => out.copy_from_slice(s),
            BoundSlice::Wide(s) => {
                for (o, &v) in out.iter_mut().zip(*s) {
                    *o = T::from_f32(v);
                }
            }
        }
    }
}

// ── generic backward ─────────────────────────────────────────────────

fn backward_pass<T: Scalar>(
    nodes: &[Node],
    values: &[Vec<T>],
    out: NodeId,
    upstream: &[T],
) -> Result<BTreeMap<NodeId, Vec<T>>, GradError> {
    let mut adjoints: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
    adjoints[out] = Some(upstream.to_vec());

    for id in (0..nodes.len()).rev() {
        let node = &nodes[id];
        if !node.needs_grad {
            continue;
        }
        let Some(dout) = adjoints[id].take() else { continue };
        let needs = |i: usize| nodes[node.inputs[i]].needs_grad;
        // allocate adjoint buffers for inputs that participate
        for &inp in &node.inputs {
            if nodes[inp].needs_grad && adjoints[inp].is_none() {
                adjoints[inp] = Some(vec![T::ZERO; values[inp].len()]);
            }
        }
        macro_rules! adj {
            ($i:expr) => {
                adjoints[node.inputs[$i]].as_mut().unwrap()
            };
        }
        let val = |i: usize| -> &[T] { &values[node.inputs[i]] };
        match &node.op {
            Op::Leaf { .. } | Op::Const { .. } => {
                adjoints[id] = Some(dout); // keep leaf gradient for collection
            }
            Op::MatMul => {
                let sa = &nodes[node.inputs[0]].shape;
                let (m, kk) = (sa[0], sa[1]);
                let n = nodes[node.inputs[1]].shape.get(1).copied().unwrap_or(1);
                if needs(0) {
                    k::matmul_back_a(&dout, val(1), m, kk, n, adj!(0));
                }
                if needs(1) {
                    k::matmul_back_b(&dout, val(0), m, kk, n, adj!(1));
                }
            }
            Op::Conv2d { stride, pad } => {
                let d = conv_dims(nodes, node, *stride, *pad);
                if needs(0) {
                    k::conv2d_back_input(&dout, val(1), d, adj!(0));
                }
                if needs(1) {
                    k::conv2d_back_kernel(&dout, val(0), d, adj!(1));
                }
            }
            Op::BiasAdd => {
                let block = block_of(&node.shape);
                if needs(0) {
                    for (a, &u) in adj!(0).iter_mut().zip(&dout) {
                        *a = *a + u;
                    }
                }
                if needs(1) {
                    k::bias_add_back_bias(&dout, block, adj!(1));
                }
            }
            Op::Relu => {
                if needs(0) {
                    k::relu_back(&dout, val(0), adj!(0));
                }
            }
            Op::Sigmoid => {
                if needs(0) {
                    k::sigmoid_back(&dout, &values[id], adj!(0));
                }
            }
            Op::Add => {
                for i in 0..2 {
                    if needs(i) {
                        for (a, &u) in adjoints[node.inputs[i]].as_mut().unwrap().iter_mut().zip(&dout) {
                            *a = *a + u;
                        }
                    }
                }
            }
            Op::Mul => {
                if needs(0) {
                    k::mul_back(&dout, val(1), adj!(0));
                }
                if needs(1) {
                    k::mul_back(&dout, val(0), adj!(1));
                }
            }
            Op::GlobalMean => {
                if needs(0) {
                    let s = &nodes[node.inputs[0]].shape;
                    k::global_mean_back(&dout, s[1] * s[2], adj!(0));
                }
            }
            Op::Film => {
                let s = &nodes[node.inputs[0]].shape;
                let block = s[1] * s[2];
                let (n0, n1, n2) = (needs(0), needs(1), needs(2));
                // borrow the three adjoint slots disjointly
                let (x_id, s_id, t_id) = (node.inputs[0], node.inputs[1], node.inputs[2]);
                let mut dx = if n0 { adjoints[x_id].take() } else { None };
                let mut ds = if n1 { adjoints[s_id].take() } else { None };
                let mut dt = if n2 { adjoints[t_id].take() } else { None };
                k::film_back(
                    &dout,
                    val(0),
                    val(1),
                    block,
                    dx.as_deref_mut(),
                    ds.as_deref_mut(),
                    dt.as_deref_mut(),
                );
                if let Some(v) = dx {
                    adjoints[x_id] = Some(v);
                }
                if let Some(v) = ds {
                    adjoints[s_id] = Some(v);
                }
                if let Some(v) = dt {
                    adjoints[t_id] = Some(v);
                }
            }
            Op::MeanAbsErr => {
                let (a_id, b_id) = (node.inputs[0], node.inputs[1]);
                let mut da = if needs(0) { adjoints[a_id].take() } else { None };
                let mut db = if needs(1) { adjoints[b_id].take() } else { None };
                k::mean_abs_err_back(dout[0], val(0), val(1), da.as_deref_mut(), db.as_deref_mut());
                if let Some(v) = da {
                    adjoints[a_id] = Some(v);
                }
                if let Some(v) = db {
                    adjoints[b_id] = Some(v);
                }
            }
            Op::SoftmaxXent { target } => {
                if needs(0) {
                    k::softmax_xent_back(dout[0], val(0), *target, adj!(0));
                }
            }
            Op::Upsample2x => {
                if needs(0) {
                    let s = &nodes[node.inputs[0]].shape;
                    k::upsample2x_back(&dout, s[0], s[1], s[2], adj!(0));
                }
            }
            Op::Crop2d => {
                if needs(0) {
                    let s = &nodes[node.inputs[0]].shape;
                    k::crop2d_back(&dout, s[0], s[1], s[2], node.shape[1], node.shape[2], adj!(0));
                }
            }
            Op::Reshape => {
                if needs(0) {
                    for (a, &u) in adj!(0).iter_mut().zip(&dout) {
                        *a = *a + u;
                    }
                }
            }
            Op::OverlapAdd { hop, norm, offset } => {
                if needs(0) {
                    let s = &nodes[node.inputs[0]].shape;
                    k::overlap_add_back(&dout, s[0], s[1], *hop, norm, *offset, node.shape[0], adj!(0));
                }
            }
        }
    }

    let mut grads = BTreeMap::new();
    for (id, node) in nodes.iter().enumerate() {
        if let Op::Leaf { trainable: true } = node.op {
            if let Some(g) = adjoints[id].take() {
                grads.insert(id, g);
            } else {
                // trainable leaf not on any path to the output
                grads.insert(id, vec![T::ZERO; values[id].len()]);
            }
        }
    }
    Ok(grads)
}

fn conv_dims(nodes: &[Node], node: &Node, stride: usize, pad: usize) -> ConvDims {
    let si = &nodes[node.inputs[0]].shape;
    let sk = &nodes[node.inputs[1]].shape;
    ConvDims {
        c_in: si[0],
        h_in: si[1],
        w_in: si[2],
        c_out: sk[0],
        kh: sk[2],
        kw: sk[3],
        stride,
        pad,
    }
}

fn block_of(shape: &[usize]) -> usize {
    shape[1..].iter().product::<usize>().max(1)
}
