//! Tape-based reverse-mode differentiation over small dense vectors.
//!
//! A [`Graph`] borrows a [`ParameterStore`] and records every operation applied
//! to its nodes. Parameters enter the tape once per graph (see [`Graph::param`])
//! and are read in place, never copied. [`Graph::backward`] replays the tape in
//! reverse and returns one gradient tensor per trainable parameter.

use std::collections::HashMap;

use super::params::ParameterStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param(usize),
    /// `x · w + b` with `w` stored `[in, out]`.
    Affine {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Concat(Vec<NodeId>),
    Slice {
        x: NodeId,
        start: usize,
    },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    /// Inverted dropout; `mask` already carries the `1/(1-p)` factor.
    Dropout {
        x: NodeId,
        mask: Vec<T>,
    },
    /// Segment `k` of `x` multiplied by scalar `weights[k]`.
    ScaleSegments {
        x: NodeId,
        weights: NodeId,
    },
    /// Sum over segments of `proj` (each `len(out)` long) weighted by `weights`.
    WeightedSegmentSum {
        proj: NodeId,
        weights: NodeId,
    },
    Softmax(NodeId),
    Gather {
        table: NodeId,
        row: usize,
    },
    /// Fused LSTM cell. `state` and the output are `[h; c]`. Without `w_ih`,
    /// `x` is an already projected `4H` vector.
    LstmCell {
        x: NodeId,
        state: NodeId,
        w_ih: Option<NodeId>,
        w_hh: NodeId,
        b: NodeId,
        /// Post-activation gates `i f g o` followed by `tanh(c')`.
        cache: Vec<T>,
    },
    /// Rows of `w` (`[5·D, out]`, viewed as `k` blocks) applied to each
    /// segment of `x` separately: output `k·out`.
    SegmentProject {
        x: NodeId,
        w: NodeId,
        segments: usize,
    },
    Sum(NodeId),
    AddScalars(Vec<NodeId>),
    /// Mean over masked steps of `-log softmax(logits)[target]`.
    CrossEntropy {
        logits: Vec<NodeId>,
        targets: Vec<usize>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<'p, T: Scalar> {
    params: &'p ParameterStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<usize, NodeId>,
}

/// One gradient tensor per parameter of the store the graph was built on.
/// Non-trainable and unreachable parameters carry zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap<T> {
    names: Vec<String>,
    grads: Vec<Tensor<T>>,
}

impl<T: Scalar> GradientMap<T> {
    pub fn zeros_like(params: &ParameterStore<T>) -> Self {
        Self {
            names: params.names().map(str::to_owned).collect(),
            grads: params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.grads[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.grads[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.grads.iter())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// `self += other`, names must line up.
    pub fn accumulate(&mut self, other: &GradientMap<T>) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Contract("gradient maps over different parameter sets".into()));
        }
        for (dst, src) in self.grads.iter_mut().zip(&other.grads) {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += *s;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for g in &mut self.grads {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor::is_finite)
    }

    pub fn max_abs(&self) -> T {
        self.grads
            .iter()
            .flat_map(|g| g.data().iter())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], id: NodeId, n: usize) -> &mut [T] {
    grads[id.0].get_or_insert_with(|| vec![T::zero(); n]).as_mut_slice()
}

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// `out += x · w` for `w` stored row-major `[x.len(), out.len()]`.
#[inline]
pub(crate) fn matvec_acc<T: Scalar>(x: &[T], w: &[T], out: &mut [T]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), x.len() * cols);
    for (i, &xi) in x.iter().enumerate() {
        if xi == T::zero() {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xi * wv;
        }
    }
}

/// `dx += w · g` and `dw += x ⊗ g`.
#[inline]
fn matvec_backward<T: Scalar>(x: &[T], w: &[T], g: &[T], dx: Option<&mut [T]>, dw: Option<&mut [T]>) {
    let cols = g.len();
    if let Some(dx) = dx {
        for (i, d) in dx.iter_mut().enumerate() {
            let row = &w[i * cols..(i + 1) * cols];
            let mut s = T::zero();
            for (&wv, &gv) in row.iter().zip(g) {
                s += wv * gv;
            }
            *d += s;
        }
    }
    if let Some(dw) = dw {
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let row = &mut dw[i * cols..(i + 1) * cols];
            for (d, &gv) in row.iter_mut().zip(g) {
                *d += xi * gv;
            }
        }
    }
}

/// `log softmax(v)[target]` computed with the max shift.
pub(crate) fn log_softmax_at<T: Scalar>(v: &[T], target: usize) -> T {
    let m = v.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let lse = v.iter().map(|&x| (x - m).exp()).sum::<T>().ln() + m;
    v[target] - lse
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParameterStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParameterStore<T> {
        self.params
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        match self.nodes[id.0].op {
            Op::Param(i) => self.params.entry(i).tensor.data(),
            _ => &self.nodes[id.0].value,
        }
    }

    pub fn len_of(&self, id: NodeId) -> usize {
        self.value(id).len()
    }

    pub fn scalar(&self, id: NodeId) -> T {
        self.value(id)[0]
    }

    fn push(&mut self, value: Vec<T>, op: Op<T>, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Vec<T>) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Constant,
            requires_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Node for a named parameter; the same node is returned on every call.
    pub fn param(&mut self, name: &str) -> Result<NodeId> {
        let idx = self
            .params
            .index_of(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))?;
        if let Some(&id) = self.param_nodes.get(&idx) {
            return Ok(id);
        }
        self.nodes.push(Node {
            value: Vec::new(),
            op: Op::Param(idx),
            requires_grad: self.params.entry(idx).trainable,
        });
        let id = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(idx, id);
        Ok(id)
    }

    fn param_shape(&self, id: NodeId) -> Option<&[usize]> {
        match self.nodes[id.0].op {
            Op::Param(i) => Some(self.params.entry(i).tensor.shape()),
            _ => None,
        }
    }

    /// Treats `w` as `[x.len(), out]`; `out` comes from the parameter shape
    /// when `w` is a parameter, otherwise from `b`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, context: &str) -> Result<NodeId> {
        let in_dim = self.len_of(x);
        let w_len = self.len_of(w);
        let out = match self.param_shape(w) {
            Some(s) if s.len() == 2 => {
                if s[0] != in_dim {
                    return Err(Error::shape(context, &[s[0]], &[in_dim]));
                }
                s[1]
            }
            _ => {
                if in_dim == 0 || !w_len.is_multiple_of(in_dim) {
                    return Err(Error::shape(context, &[in_dim], &[w_len]));
                }
                w_len / in_dim
            }
        };
        let mut v = match b {
            Some(b) => {
                let bv = self.value(b);
                if bv.len() != out {
                    return Err(Error::shape(format!("{context} bias"), &[out], &[bv.len()]));
                }
                bv.to_vec()
            }
            None => vec![T::zero(); out],
        };
        matvec_acc(self.value(x), self.value(w), &mut v);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(v, Op::Affine { x, w, b }, &inputs))
    }

    fn check_same_len(&self, a: NodeId, b: NodeId, context: &str) -> Result<()> {
        let (la, lb) = (self.len_of(a), self.len_of(b));
        if la != lb {
            return Err(Error::shape(context, &[la], &[lb]));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_len(a, b, "add")?;
        let v = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_len(a, b, "mul")?;
        let v = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: NodeId, c: T) -> NodeId {
        let v = self.value(x).iter().map(|&v| v * c).collect();
        self.push(v, Op::Scale(x, c), &[x])
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = Vec::with_capacity(parts.iter().map(|&p| self.len_of(p)).sum());
        for &p in parts {
            v.extend_from_slice(self.value(p));
        }
        self.push(v, Op::Concat(parts.to_vec()), parts)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let n = self.len_of(x);
        if start + len > n {
            return Err(Error::shape("slice", &[start + len], &[n]));
        }
        let v = self.value(x)[start..start + len].to_vec();
        Ok(self.push(v, Op::Slice { x, start }, &[x]))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(v, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).iter().map(|&v| v.tanh()).collect();
        self.push(v, Op::Tanh(x), &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).iter().map(|&v| v.max(T::zero())).collect();
        self.push(v, Op::Relu(x), &[x])
    }

    /// Multiplies by a precomputed mask (entries `0` or `1/(1-p)`).
    pub fn dropout_mask(&mut self, x: NodeId, mask: Vec<T>) -> Result<NodeId> {
        let n = self.len_of(x);
        if mask.len() != n {
            return Err(Error::shape("dropout mask", &[n], &[mask.len()]));
        }
        let v = self.value(x).iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        Ok(self.push(v, Op::Dropout { x, mask }, &[x]))
    }

    pub fn scale_segments(&mut self, x: NodeId, weights: NodeId) -> Result<NodeId> {
        let k = self.len_of(weights);
        let n = self.len_of(x);
        if k == 0 || !n.is_multiple_of(k) {
            return Err(Error::shape("scale_segments", &[k], &[n]));
        }
        let seg = n / k;
        let w = self.value(weights);
        let v = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &a)| a * w[i / seg])
            .collect();
        Ok(self.push(v, Op::ScaleSegments { x, weights }, &[x, weights]))
    }

    pub fn weighted_segment_sum(&mut self, proj: NodeId, weights: NodeId) -> Result<NodeId> {
        let k = self.len_of(weights);
        let n = self.len_of(proj);
        if k == 0 || !n.is_multiple_of(k) {
            return Err(Error::shape("weighted_segment_sum", &[k], &[n]));
        }
        let seg = n / k;
        let mut v = vec![T::zero(); seg];
        let p = self.value(proj);
        for (s, &wk) in self.value(weights).iter().enumerate() {
            for (o, &pv) in v.iter_mut().zip(&p[s * seg..(s + 1) * seg]) {
                *o += wk * pv;
            }
        }
        Ok(self.push(v, Op::WeightedSegmentSum { proj, weights }, &[proj, weights]))
    }

    /// Projects each of `segments` equal slices of `x` through the matching
    /// row block of `w` (`[x.len(), out]`).
    pub fn segment_project(&mut self, x: NodeId, w: NodeId, segments: usize) -> Result<NodeId> {
        let n = self.len_of(x);
        let wl = self.len_of(w);
        if segments == 0 || !n.is_multiple_of(segments) || n == 0 || !wl.is_multiple_of(n) {
            return Err(Error::shape("segment_project", &[n], &[wl]));
        }
        let out = wl / n;
        let seg = n / segments;
        let xv = self.value(x);
        let wv = self.value(w);
        let mut v = vec![T::zero(); segments * out];
        for s in 0..segments {
            matvec_acc(
                &xv[s * seg..(s + 1) * seg],
                &wv[s * seg * out..(s + 1) * seg * out],
                &mut v[s * out..(s + 1) * out],
            );
        }
        Ok(self.push(v, Op::SegmentProject { x, w, segments }, &[x, w]))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let v = super::functional::softmax(self.value(x));
        self.push(v, Op::Softmax(x), &[x])
    }

    pub fn gather(&mut self, table: NodeId, row: usize, cols: usize) -> Result<NodeId> {
        let n = self.len_of(table);
        if cols == 0 || (row + 1) * cols > n {
            return Err(Error::shape("gather", &[(row + 1) * cols], &[n]));
        }
        let v = self.value(table)[row * cols..(row + 1) * cols].to_vec();
        Ok(self.push(v, Op::Gather { table, row }, &[table]))
    }

    /// One LSTM step. With `w_ih = None`, `x` must already be the `4H` input
    /// projection.
    pub fn lstm_cell(
        &mut self,
        x: NodeId,
        state: NodeId,
        w_ih: Option<NodeId>,
        w_hh: NodeId,
        b: NodeId,
        context: &str,
    ) -> Result<NodeId> {
        let two_h = self.len_of(state);
        let h = two_h / 2;
        if h == 0 || !two_h.is_multiple_of(2) {
            return Err(Error::shape(format!("{context} state"), &[2 * h.max(1)], &[two_h]));
        }
        let g4 = 4 * h;
        if self.len_of(b) != g4 {
            return Err(Error::shape(format!("{context} bias"), &[g4], &[self.len_of(b)]));
        }
        if self.len_of(w_hh) != h * g4 {
            return Err(Error::shape(format!("{context} w_hh"), &[h, g4], &[self.len_of(w_hh)]));
        }
        let mut z = self.value(b).to_vec();
        match w_ih {
            Some(w) => {
                let xin = self.len_of(x);
                if self.len_of(w) != xin * g4 {
                    return Err(Error::shape(
                        format!("{context} w_ih"),
                        &[xin, g4],
                        &[self.len_of(w) / g4.max(1), g4],
                    ));
                }
                matvec_acc(self.value(x), self.value(w), &mut z);
            }
            None => {
                if self.len_of(x) != g4 {
                    return Err(Error::shape(format!("{context} projected input"), &[g4], &[self.len_of(x)]));
                }
                for (zv, &xv) in z.iter_mut().zip(self.value(x)) {
                    *zv += xv;
                }
            }
        }
        let st = self.value(state);
        matvec_acc(&st[..h], self.value(w_hh), &mut z);
        let mut cache = vec![T::zero(); 5 * h];
        let mut out = vec![T::zero(); two_h];
        for j in 0..h {
            let i_g = sigmoid(z[j]);
            let f_g = sigmoid(z[h + j]);
            let g_g = z[2 * h + j].tanh();
            let o_g = sigmoid(z[3 * h + j]);
            let c_new = f_g * st[h + j] + i_g * g_g;
            let tc = c_new.tanh();
            cache[j] = i_g;
            cache[h + j] = f_g;
            cache[2 * h + j] = g_g;
            cache[3 * h + j] = o_g;
            cache[4 * h + j] = tc;
            out[j] = o_g * tc;
            out[h + j] = c_new;
        }
        let mut inputs = vec![x, state, w_hh, b];
        inputs.extend(w_ih);
        Ok(self.push(
            out,
            Op::LstmCell {
                x,
                state,
                w_ih,
                w_hh,
                b,
                cache,
            },
            &inputs,
        ))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).iter().copied().sum();
        self.push(vec![s], Op::Sum(x), &[x])
    }

    pub fn add_scalars(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let mut s = T::zero();
        for &x in xs {
            if self.len_of(x) != 1 {
                return Err(Error::shape("add_scalars", &[1], &[self.len_of(x)]));
            }
            s += self.scalar(x);
        }
        Ok(self.push(vec![s], Op::AddScalars(xs.to_vec()), xs))
    }

    /// Mean of `-log softmax(logits_j)[target_j]` over steps with `mask_j`.
    /// Masked-out steps contribute neither value nor gradient.
    pub fn cross_entropy(&mut self, logits: &[NodeId], targets: &[usize], mask: &[bool]) -> Result<NodeId> {
        if logits.len() != targets.len() || logits.len() != mask.len() {
            return Err(Error::shape(
                "cross_entropy steps",
                &[logits.len(), logits.len()],
                &[targets.len(), mask.len()],
            ));
        }
        let mut kept_logits = Vec::new();
        let mut kept_targets = Vec::new();
        for ((&l, &t), &m) in logits.iter().zip(targets).zip(mask) {
            if !m {
                continue;
            }
            if t >= self.len_of(l) {
                return Err(Error::InvalidToken {
                    id: t,
                    vocab_size: self.len_of(l),
                });
            }
            kept_logits.push(l);
            kept_targets.push(t);
        }
        if kept_logits.is_empty() {
            return Err(Error::DegenerateBatch("no unmasked target in cross-entropy".into()));
        }
        let count = kept_logits.len();
        let total: T = kept_logits
            .iter()
            .zip(&kept_targets)
            .map(|(&l, &t)| -log_softmax_at(self.value(l), t))
            .sum();
        let v = total / T::from_usize_exact(count);
        let inputs = kept_logits.clone();
        Ok(self.push(
            vec![v],
            Op::CrossEntropy {
                logits: kept_logits,
                targets: kept_targets,
                count,
            },
            &inputs,
        ))
    }

    /// Reverse-mode gradients of scalar `loss` w.r.t. every parameter in the
    /// store.
    pub fn backward(&self, loss: NodeId) -> Result<GradientMap<T>> {
        if self.len_of(loss) != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node has {} elements",
                self.len_of(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Param(_) | Op::Constant) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
        }

        let mut out = GradientMap::zeros_like(self.params);
        for (&pidx, &nid) in &self.param_nodes {
            if let Some(g) = grads[nid.0].take() {
                out.grads[pidx].data_mut().copy_from_slice(&g);
            }
        }
        Ok(out)
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        macro_rules! acc {
            ($id:expr) => {{
                let id: NodeId = $id;
                let n = self.len_of(id);
                grads[id.0].get_or_insert_with(|| vec![T::zero(); n]).as_mut_slice()
            }};
        }
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::Affine { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                if self.wants(*x) {
                    matvec_backward(xv, wv, g, Some(acc!(*x)), None);
                }
                if self.wants(*w) {
                    matvec_backward(xv, wv, g, None, Some(acc!(*w)));
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        for (d, &gv) in acc!(*b).iter_mut().zip(g) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for id in [*a, *b] {
                    if self.wants(id) {
                        for (d, &gv) in acc!(id).iter_mut().zip(g) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let bv = self.value(*b);
                    for ((d, &gv), &o) in acc!(*a).iter_mut().zip(g).zip(bv) {
                        *d += gv * o;
                    }
                }
                if self.wants(*b) {
                    let av = self.value(*a);
                    for ((d, &gv), &o) in acc!(*b).iter_mut().zip(g).zip(av) {
                        *d += gv * o;
                    }
                }
            }
            Op::Scale(x, c) => {
                for (d, &gv) in acc!(*x).iter_mut().zip(g) {
                    *d += gv * *c;
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.len_of(p);
                    if self.wants(p) {
                        for (d, &gv) in acc!(p).iter_mut().zip(&g[off..off + n]) {
                            *d += gv;
                        }
                    }
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                let d = acc!(*x);
                for (k, &gv) in g.iter().enumerate() {
                    d[start + k] += gv;
                }
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                for ((d, &gv), &yv) in acc!(*x).iter_mut().zip(g).zip(y) {
                    *d += gv * yv * (T::one() - yv);
                }
            }
            Op::Tanh(x) => {
                let y = &node.value;
                for ((d, &gv), &yv) in acc!(*x).iter_mut().zip(g).zip(y) {
                    *d += gv * (T::one() - yv * yv);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                for ((d, &gv), &a) in acc!(*x).iter_mut().zip(g).zip(xv) {
                    if a > T::zero() {
                        *d += gv;
                    }
                }
            }
            Op::Dropout { x, mask } => {
                for ((d, &gv), &m) in acc!(*x).iter_mut().zip(g).zip(mask) {
                    *d += gv * m;
                }
            }
            Op::ScaleSegments { x, weights } => {
                let k = self.len_of(*weights);
                let seg = g.len() / k;
                if self.wants(*x) {
                    let w = self.value(*weights);
                    for (idx, (d, &gv)) in acc!(*x).iter_mut().zip(g).enumerate() {
                        *d += gv * w[idx / seg];
                    }
                }
                if self.wants(*weights) {
                    let xv = self.value(*x);
                    let d = acc!(*weights);
                    for (idx, (&gv, &a)) in g.iter().zip(xv).enumerate() {
                        d[idx / seg] += gv * a;
                    }
                }
            }
            Op::WeightedSegmentSum { proj, weights } => {
                let seg = g.len();
                if self.wants(*proj) {
                    let w = self.value(*weights);
                    let d = acc!(*proj);
                    for (s, &wk) in w.iter().enumerate() {
                        for (dv, &gv) in d[s * seg..(s + 1) * seg].iter_mut().zip(g) {
                            *dv += wk * gv;
                        }
                    }
                }
                if self.wants(*weights) {
                    let p = self.value(*proj);
                    let d = acc!(*weights);
                    for (s, dv) in d.iter_mut().enumerate() {
                        let mut sacc = T::zero();
                        for (&pv, &gv) in p[s * seg..(s + 1) * seg].iter().zip(g) {
                            sacc += pv * gv;
                        }
                        *dv += sacc;
                    }
                }
            }
            Op::SegmentProject { x, w, segments } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let seg = xv.len() / segments;
                let out = g.len() / segments;
                if self.wants(*x) {
                    let d = acc!(*x);
                    for s in 0..*segments {
                        matvec_backward(
                            &xv[s * seg..(s + 1) * seg],
                            &wv[s * seg * out..(s + 1) * seg * out],
                            &g[s * out..(s + 1) * out],
                            Some(&mut d[s * seg..(s + 1) * seg]),
                            None,
                        );
                    }
                }
                if self.wants(*w) {
                    let d = acc!(*w);
                    for s in 0..*segments {
                        matvec_backward(
                            &xv[s * seg..(s + 1) * seg],
                            &wv[s * seg * out..(s + 1) * seg * out],
                            &g[s * out..(s + 1) * out],
                            None,
                            Some(&mut d[s * seg * out..(s + 1) * seg * out]),
                        );
                    }
                }
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let dot: T = g.iter().zip(y).map(|(&a, &b)| a * b).sum();
                for ((d, &gv), &yv) in acc!(*x).iter_mut().zip(g).zip(y) {
                    *d += yv * (gv - dot);
                }
            }
            Op::Gather { table, row } => {
                let cols = g.len();
                let d = acc!(*table);
                for (dv, &gv) in d[row * cols..(row + 1) * cols].iter_mut().zip(g) {
                    *dv += gv;
                }
            }
            Op::LstmCell {
                x,
                state,
                w_ih,
                w_hh,
                b,
                cache,
            } => self.backprop_lstm(*x, *state, *w_ih, *w_hh, *b, cache, g, grads),
            Op::Sum(x) => {
                for d in acc!(*x).iter_mut() {
                    *d += g[0];
                }
            }
            Op::AddScalars(xs) => {
                for &x in xs {
                    if self.wants(x) {
                        acc!(x)[0] += g[0];
                    }
                }
            }
            Op::CrossEntropy { logits, targets, count } => {
                let scale = g[0] / T::from_usize_exact(*count);
                for (&l, &t) in logits.iter().zip(targets) {
                    if !self.wants(l) {
                        continue;
                    }
                    let p = super::functional::softmax(self.value(l));
                    let d = acc!(l);
                    for (k, (dv, &pv)) in d.iter_mut().zip(&p).enumerate() {
                        let onehot = if k == t { T::one() } else { T::zero() };
                        *dv += scale * (pv - onehot);
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_lstm(
        &self,
        x: NodeId,
        state: NodeId,
        w_ih: Option<NodeId>,
        w_hh: NodeId,
        b: NodeId,
        cache: &[T],
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let h = g.len() / 2;
        let st = self.value(state);
        let mut dz = vec![T::zero(); 4 * h];
        let mut dc_prev = vec![T::zero(); h];
        for j in 0..h {
            let (i_g, f_g, g_g, o_g, tc) = (cache[j], cache[h + j], cache[2 * h + j], cache[3 * h + j], cache[4 * h + j]);
            let dh = g[j];
            let dc = g[h + j] + dh * o_g * (T::one() - tc * tc);
            let d_o = dh * tc;
            let d_i = dc * g_g;
            let d_g = dc * i_g;
            let d_f = dc * st[h + j];
            dc_prev[j] = dc * f_g;
            dz[j] = d_i * i_g * (T::one() - i_g);
            dz[h + j] = d_f * f_g * (T::one() - f_g);
            dz[2 * h + j] = d_g * (T::one() - g_g * g_g);
            dz[3 * h + j] = d_o * o_g * (T::one() - o_g);
        }
        if self.wants(b) {
            let d = slot(grads, b, 4 * h);
            for (dv, &z) in d.iter_mut().zip(&dz) {
                *dv += z;
            }
        }
        if self.wants(w_hh) {
            let d = slot(grads, w_hh, 4 * h * h);
            matvec_backward(&st[..h], self.value(w_hh), &dz, None, Some(d));
        }
        if self.wants(state) {
            let d = slot(grads, state, 2 * h);
            matvec_backward(&st[..h], self.value(w_hh), &dz, Some(&mut d[..h]), None);
            for (dv, &c) in d[h..].iter_mut().zip(&dc_prev) {
                *dv += c;
            }
        }
        let xv = self.value(x);
        match w_ih {
            Some(w) => {
                if self.wants(w) {
                    let d = slot(grads, w, xv.len() * 4 * h);
                    matvec_backward(xv, self.value(w), &dz, None, Some(d));
                }
                if self.wants(x) {
                    let d = slot(grads, x, xv.len());
                    matvec_backward(xv, self.value(w), &dz, Some(d), None);
                }
            }
            None => {
                if self.wants(x) {
                    let d = slot(grads, x, 4 * h);
                    for (dv, &z) in d.iter_mut().zip(&dz) {
                        *dv += z;
                    }
                }
            }
        }
    }
}
