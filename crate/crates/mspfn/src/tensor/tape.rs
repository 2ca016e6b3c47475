//! Wengert tape: records forward ops, plays them backwards for gradients.
//!
//! Every differentiable op is a method on [`Tape`]. Recording a node stores
//! cheap `Arc` handles to the input/output tensors plus the op descriptor —
//! enough to compute vector-Jacobian products without recomputing forward
//! values (except im2col buffers, which are cheaper to rebuild than to keep).
//!
//! The tape is acyclic by construction (outputs are always fresh tensors) and
//! single-threaded; concurrency happens inside ops, never across them.
//! `backward` consumes the tape: one step = one tape, reset is a drop.

use std::collections::HashMap;

use super::conv;
use super::{numel, Element, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Op {
    Conv2d { stride: usize, pad: usize },
    ConvT2d { stride: usize, pad: usize },
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
    ConcatChannels,
    SliceChannels { start: usize },
    GlobalAvgPool,
    Sum,
    Scale(f64),
    CharbonnierMean { eps: f64 },
    Laplacian,
    Clamp01,
}

struct Node<E: Element> {
    op: Op,
    inputs: Vec<Tensor<E>>,
    output: Tensor<E>,
    needs_grad: bool,
}

/// Reverse-mode autodiff tape.
pub struct Tape<E: Element> {
    nodes: Vec<Node<E>>,
    by_output: HashMap<u64, usize>,
    recording: bool,
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Tape<E> {
    /// A recording tape: ops are replayable by `backward`.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            by_output: HashMap::new(),
            recording: true,
        }
    }

    /// Inference mode: ops compute values but record nothing, so
    /// intermediates free as soon as their handles drop.
    pub fn no_grad() -> Self {
        Tape {
            nodes: Vec::new(),
            by_output: HashMap::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn tensor_needs_grad(&self, t: &Tensor<E>) -> bool {
        t.requires_grad()
            || self
                .by_output
                .get(&t.id())
                .is_some_and(|&i| self.nodes[i].needs_grad)
    }

    fn record(&mut self, op: Op, inputs: Vec<Tensor<E>>, output: &Tensor<E>) {
        debug_assert!(
            output.is_finite(),
            "non-finite values out of {op:?} on finite inputs"
        );
        if !self.recording {
            return;
        }
        let needs_grad = inputs.iter().any(|t| self.tensor_needs_grad(t));
        self.by_output.insert(output.id(), self.nodes.len());
        self.nodes.push(Node {
            op,
            inputs,
            output: output.clone(),
            needs_grad,
        });
    }

    // ── Convolutions ───────────────────────────────────────────────────

    /// 2D cross-correlation with zero padding.
    /// x [N,Cin,H,W] * w [Cout,Cin,kh,kw] (+ bias [1,Cout,1,1]) →
    /// [N,Cout,(H+2p−kh)/s+1,(W+2p−kw)/s+1].
    pub fn conv2d(
        &mut self,
        x: &Tensor<E>,
        w: &Tensor<E>,
        bias: Option<&Tensor<E>>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<E>> {
        let [_, cin, h, ww] = x.shape();
        let [cout, wcin, kh, kw] = w.shape();
        if wcin != cin {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: x.shape(),
                rhs: w.shape(),
            });
        }
        if stride == 0 || kh == 0 || kw == 0 {
            return Err(Error::invalid("conv2d", "stride and kernel dims must be >= 1"));
        }
        if conv::conv2d_out_dim(h, kh, stride, pad).is_none()
            || conv::conv2d_out_dim(ww, kw, stride, pad).is_none()
        {
            return Err(Error::invalid(
                "conv2d",
                format!("kernel {kh}x{kw} exceeds padded input {h}x{ww} (pad {pad})"),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [1, cout, 1, 1] {
                return Err(Error::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: [1, cout, 1, 1],
                    rhs: b.shape(),
                });
            }
        }
        let (data, oshape) = conv::conv2d_forward(
            x.data(),
            x.shape(),
            w.data(),
            w.shape(),
            bias.map(|b| b.data()),
            stride,
            pad,
        );
        let out = Tensor::from_vec(oshape, data)?;
        let mut inputs = vec![x.clone(), w.clone()];
        if let Some(b) = bias {
            inputs.push(b.clone());
        }
        self.record(Op::Conv2d { stride, pad }, inputs, &out);
        Ok(out)
    }

    /// Transposed convolution (exact adjoint of `conv2d` w.r.t. its input).
    /// x [N,Cin,H,W] * w [Cin,Cout,kh,kw] → [N,Cout,(H−1)s−2p+kh, ...].
    pub fn conv2d_transpose(
        &mut self,
        x: &Tensor<E>,
        w: &Tensor<E>,
        bias: Option<&Tensor<E>>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<E>> {
        let [_, cin, h, ww] = x.shape();
        let [wcin, cout, kh, kw] = w.shape();
        if wcin != cin {
            return Err(Error::ShapeMismatch {
                op: "conv2d_transpose",
                lhs: x.shape(),
                rhs: w.shape(),
            });
        }
        if stride == 0 || kh == 0 || kw == 0 {
            return Err(Error::invalid(
                "conv2d_transpose",
                "stride and kernel dims must be >= 1",
            ));
        }
        if conv::convt2d_out_dim(h, kh, stride, pad).is_none()
            || conv::convt2d_out_dim(ww, kw, stride, pad).is_none()
        {
            return Err(Error::invalid(
                "conv2d_transpose",
                format!("output would be empty for input {h}x{ww}, kernel {kh}x{kw}, pad {pad}"),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [1, cout, 1, 1] {
                return Err(Error::ShapeMismatch {
                    op: "conv2d_transpose bias",
                    lhs: [1, cout, 1, 1],
                    rhs: b.shape(),
                });
            }
        }
        let (data, oshape) = conv::convt2d_forward(
            x.data(),
            x.shape(),
            w.data(),
            w.shape(),
            bias.map(|b| b.data()),
            stride,
            pad,
        );
        let out = Tensor::from_vec(oshape, data)?;
        let mut inputs = vec![x.clone(), w.clone()];
        if let Some(b) = bias {
            inputs.push(b.clone());
        }
        self.record(Op::ConvT2d { stride, pad }, inputs, &out);
        Ok(out)
    }

    // ── Elementwise ────────────────────────────────────────────────────

    pub fn add(&mut self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        self.binary(Op::Add, a, b)
    }

    pub fn sub(&mut self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        self.binary(Op::Sub, a, b)
    }

    pub fn mul(&mut self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        self.binary(Op::Mul, a, b)
    }

    fn binary(&mut self, op: Op, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        let kind = broadcast_kind(a.shape(), b.shape()).ok_or(Error::ShapeMismatch {
            op: match op {
                Op::Add => "add",
                Op::Sub => "sub",
                _ => "mul",
            },
            lhs: a.shape(),
            rhs: b.shape(),
        })?;
        let (big, small, small_is_rhs) = match kind {
            Broadcast::None => {
                let data: Vec<E> = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(&x, &y)| apply_binary(&op, x, y))
                    .collect();
                let out = Tensor::from_vec(a.shape(), data)?;
                self.record(op, vec![a.clone(), b.clone()], &out);
                return Ok(out);
            }
            Broadcast::RhsChannel => (a, b, true),
            Broadcast::LhsChannel => (b, a, false),
        };
        let [n, c, h, w] = big.shape();
        let bn = small.shape()[0];
        let hw = h * w;
        let mut data = vec![E::zero(); numel(big.shape())];
        for ni in 0..n {
            let si = if bn == 1 { 0 } else { ni };
            for ci in 0..c {
                let sv = small.data()[si * c + ci];
                let base = (ni * c + ci) * hw;
                let src = &big.data()[base..base + hw];
                let dst = &mut data[base..base + hw];
                if small_is_rhs {
                    for (d, &x) in dst.iter_mut().zip(src) {
                        *d = apply_binary(&op, x, sv);
                    }
                } else {
                    for (d, &y) in dst.iter_mut().zip(src) {
                        *d = apply_binary(&op, sv, y);
                    }
                }
            }
        }
        let out = Tensor::from_vec(big.shape(), data)?;
        self.record(op, vec![a.clone(), b.clone()], &out);
        Ok(out)
    }

    pub fn sigmoid(&mut self, x: &Tensor<E>) -> Tensor<E> {
        let out = x.map(|v| E::one() / (E::one() + (-v).exp()));
        self.record(Op::Sigmoid, vec![x.clone()], &out);
        out
    }

    pub fn tanh(&mut self, x: &Tensor<E>) -> Tensor<E> {
        let out = x.map(|v| v.tanh());
        self.record(Op::Tanh, vec![x.clone()], &out);
        out
    }

    pub fn relu(&mut self, x: &Tensor<E>) -> Tensor<E> {
        let out = x.map(|v| if v > E::zero() { v } else { E::zero() });
        self.record(Op::Relu, vec![x.clone()], &out);
        out
    }

    /// Multiply by a compile-time-known constant (loss weights, 1/n, ...).
    pub fn scale(&mut self, x: &Tensor<E>, k: f64) -> Tensor<E> {
        let ke = E::from_f64(k);
        let out = x.map(|v| v * ke);
        self.record(Op::Scale(k), vec![x.clone()], &out);
        out
    }

    /// Clamp into [0,1]; gradient passes only where the input is strictly
    /// inside the interval.
    pub fn clamp01(&mut self, x: &Tensor<E>) -> Tensor<E> {
        let out = x.map(|v| v.max(E::zero()).min(E::one()));
        self.record(Op::Clamp01, vec![x.clone()], &out);
        out
    }

    // ── Shape ops ──────────────────────────────────────────────────────

    /// Concatenate along the channel axis. Other dims must match.
    pub fn concat_channels(&mut self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        let [n, ca, h, w] = a.shape();
        let [nb, cb, hb, wb] = b.shape();
        if n != nb || h != hb || w != wb {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * (ca + cb) * hw);
        for ni in 0..n {
            data.extend_from_slice(&a.data()[ni * ca * hw..(ni + 1) * ca * hw]);
            data.extend_from_slice(&b.data()[ni * cb * hw..(ni + 1) * cb * hw]);
        }
        let out = Tensor::from_vec([n, ca + cb, h, w], data)?;
        self.record(Op::ConcatChannels, vec![a.clone(), b.clone()], &out);
        Ok(out)
    }

    /// Channels [start, start+len) of x.
    pub fn slice_channels(&mut self, x: &Tensor<E>, start: usize, len: usize) -> Result<Tensor<E>> {
        let [n, c, h, w] = x.shape();
        if start + len > c {
            return Err(Error::invalid(
                "slice_channels",
                format!("range {start}..{} out of {c} channels", start + len),
            ));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * len * hw);
        for ni in 0..n {
            let base = (ni * c + start) * hw;
            data.extend_from_slice(&x.data()[base..base + len * hw]);
        }
        let out = Tensor::from_vec([n, len, h, w], data)?;
        self.record(Op::SliceChannels { start }, vec![x.clone()], &out);
        Ok(out)
    }

    // ── Reductions (f64 accumulation) ──────────────────────────────────

    /// Spatial mean per (n, c): [N,C,H,W] → [N,C,1,1].
    pub fn global_avg_pool(&mut self, x: &Tensor<E>) -> Tensor<E> {
        let [n, c, h, w] = x.shape();
        let hw = (h * w) as f64;
        let mut data = Vec::with_capacity(n * c);
        for nc in 0..n * c {
            let plane = &x.data()[nc * h * w..(nc + 1) * h * w];
            let sum: f64 = plane.iter().map(|v| v.as_f64()).sum();
            data.push(E::from_f64(sum / hw));
        }
        let out = Tensor::from_vec([n, c, 1, 1], data).expect("shape computed here");
        self.record(Op::GlobalAvgPool, vec![x.clone()], &out);
        out
    }

    /// Sum of all elements → scalar [1,1,1,1].
    pub fn sum(&mut self, x: &Tensor<E>) -> Tensor<E> {
        let total: f64 = x.data().iter().map(|v| v.as_f64()).sum();
        let out = Tensor::from_vec([1, 1, 1, 1], vec![E::from_f64(total)]).unwrap();
        self.record(Op::Sum, vec![x.clone()], &out);
        out
    }

    /// Mean of all elements → scalar. Composition of sum and scale.
    pub fn mean(&mut self, x: &Tensor<E>) -> Tensor<E> {
        let s = self.sum(x);
        self.scale(&s, 1.0 / x.numel() as f64)
    }

    /// mean(sqrt((pred − target)² + eps²)) → scalar. The smooth-L1-like
    /// penalty used for both the content and edge terms of the training loss.
    pub fn charbonnier_mean(
        &mut self,
        pred: &Tensor<E>,
        target: &Tensor<E>,
        eps: f64,
    ) -> Result<Tensor<E>> {
        if pred.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "charbonnier_mean",
                lhs: pred.shape(),
                rhs: target.shape(),
            });
        }
        if !(eps > 0.0) {
            return Err(Error::invalid("charbonnier_mean", "eps must be > 0"));
        }
        // Summed as nonnegative offsets from the floor value sqrt(eps²) so
        // identical inputs give exactly that floor and the result can never
        // round below it.
        let e2 = eps * eps;
        let base = e2.sqrt();
        let total: f64 = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                let d = p.as_f64() - t.as_f64();
                (d * d + e2).sqrt() - base
            })
            .sum();
        let mean = base + total / pred.numel() as f64;
        let out = Tensor::from_vec([1, 1, 1, 1], vec![E::from_f64(mean)]).unwrap();
        self.record(
            Op::CharbonnierMean { eps },
            vec![pred.clone(), target.clone()],
            &out,
        );
        Ok(out)
    }

    /// Four-neighbour Laplacian per channel with reflect-101 borders:
    /// out = x(up) + x(down) + x(left) + x(right) − 4·x.
    pub fn laplacian(&mut self, x: &Tensor<E>) -> Tensor<E> {
        let data = laplacian_forward(x.data(), x.shape());
        let out = Tensor::from_vec(x.shape(), data).unwrap();
        self.record(Op::Laplacian, vec![x.clone()], &out);
        out
    }

    // ── Backward ───────────────────────────────────────────────────────

    /// Reverse sweep from `loss` (a scalar produced on this tape),
    /// accumulating gradients into every `requires_grad` leaf reachable from
    /// it. Consumes the tape; a new step starts a new tape.
    pub fn backward(mut self, loss: &Tensor<E>) -> Result<()> {
        if loss.shape() != [1, 1, 1, 1] {
            return Err(Error::NonScalarLoss(loss.shape()));
        }
        let &start = self
            .by_output
            .get(&loss.id())
            .ok_or(Error::LossNotOnTape)?;
        let mut grads: HashMap<u64, Vec<E>> = HashMap::new();
        grads.insert(loss.id(), vec![E::one()]);
        let mut leaves: HashMap<u64, Tensor<E>> = HashMap::new();

        for i in (0..=start).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let out_id = self.nodes[i].output.id();
            let Some(g) = grads.remove(&out_id) else {
                continue; // not on the path from loss
            };
            let input_grads = self.vjp(i, &g);
            let node = &self.nodes[i];
            for (inp, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                match grads.entry(inp.id()) {
                    std::collections::hash_map::Entry::Occupied(mut e) => {
                        for (acc, d) in e.get_mut().iter_mut().zip(&ig) {
                            *acc = *acc + *d;
                        }
                    }
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(ig);
                    }
                }
                if inp.requires_grad() && !self.by_output.contains_key(&inp.id()) {
                    leaves.entry(inp.id()).or_insert_with(|| inp.clone());
                }
            }
        }

        for (id, t) in leaves {
            if let Some(g) = grads.remove(&id) {
                t.accumulate_grad(&g);
            }
        }
        self.nodes.clear();
        self.by_output.clear();
        Ok(())
    }

    /// Vector-Jacobian product for node i: per-input gradients (None where
    /// the input does not need one).
    fn vjp(&self, i: usize, g: &[E]) -> Vec<Option<Vec<E>>> {
        let node = &self.nodes[i];
        let needs: Vec<bool> = node
            .inputs
            .iter()
            .map(|t| self.tensor_needs_grad(t))
            .collect();
        let inp = &node.inputs;
        let out = &node.output;
        match node.op {
            Op::Conv2d { stride, pad } => {
                let x = &inp[0];
                let w = &inp[1];
                let mut grads = vec![
                    needs[0].then(|| {
                        conv::conv2d_backward_input(
                            g, out.shape(), w.data(), w.shape(), x.shape(), stride, pad,
                        )
                    }),
                    needs[1].then(|| {
                        conv::conv2d_backward_weight(
                            g, out.shape(), x.data(), x.shape(), w.shape(), stride, pad,
                        )
                    }),
                ];
                if inp.len() == 3 {
                    grads.push(needs[2].then(|| conv::sum_over_nhw(g, out.shape())));
                }
                grads
            }
            Op::ConvT2d { stride, pad } => {
                let x = &inp[0];
                let w = &inp[1];
                let mut grads = vec![
                    needs[0].then(|| {
                        conv::convt2d_backward_input(
                            g, out.shape(), w.data(), w.shape(), x.shape(), stride, pad,
                        )
                    }),
                    needs[1].then(|| {
                        conv::convt2d_backward_weight(
                            g, out.shape(), x.data(), x.shape(), w.shape(), stride, pad,
                        )
                    }),
                ];
                if inp.len() == 3 {
                    grads.push(needs[2].then(|| conv::sum_over_nhw(g, out.shape())));
                }
                grads
            }
            Op::Add => binary_backward(&inp[0], &inp[1], g, &needs, |_, _| {
                (E::one(), E::one())
            }),
            Op::Sub => binary_backward(&inp[0], &inp[1], g, &needs, |_, _| {
                (E::one(), -E::one())
            }),
            Op::Mul => binary_backward(&inp[0], &inp[1], g, &needs, |a, b| (b, a)),
            Op::Sigmoid => {
                let y = out.data();
                vec![needs[0].then(|| {
                    g.iter()
                        .zip(y)
                        .map(|(&gi, &yi)| gi * yi * (E::one() - yi))
                        .collect()
                })]
            }
            Op::Tanh => {
                let y = out.data();
                vec![needs[0].then(|| {
                    g.iter()
                        .zip(y)
                        .map(|(&gi, &yi)| gi * (E::one() - yi * yi))
                        .collect()
                })]
            }
            Op::Relu => {
                let x = inp[0].data();
                vec![needs[0].then(|| {
                    g.iter()
                        .zip(x)
                        .map(|(&gi, &xi)| if xi > E::zero() { gi } else { E::zero() })
                        .collect()
                })]
            }
            Op::Scale(k) => {
                let ke = E::from_f64(k);
                vec![needs[0].then(|| g.iter().map(|&gi| gi * ke).collect())]
            }
            Op::Clamp01 => {
                let x = inp[0].data();
                vec![needs[0].then(|| {
                    g.iter()
                        .zip(x)
                        .map(|(&gi, &xi)| {
                            if xi > E::zero() && xi < E::one() {
                                gi
                            } else {
                                E::zero()
                            }
                        })
                        .collect()
                })]
            }
            Op::ConcatChannels => {
                let [n, ca, h, w] = inp[0].shape();
                let cb = inp[1].shape()[1];
                let hw = h * w;
                let c = ca + cb;
                let ga = needs[0].then(|| {
                    let mut v = Vec::with_capacity(n * ca * hw);
                    for ni in 0..n {
                        v.extend_from_slice(&g[ni * c * hw..ni * c * hw + ca * hw]);
                    }
                    v
                });
                let gb = needs[1].then(|| {
                    let mut v = Vec::with_capacity(n * cb * hw);
                    for ni in 0..n {
                        v.extend_from_slice(&g[ni * c * hw + ca * hw..(ni + 1) * c * hw]);
                    }
                    v
                });
                vec![ga, gb]
            }
            Op::SliceChannels { start } => {
                let [n, c, h, w] = inp[0].shape();
                let len = out.shape()[1];
                let hw = h * w;
                vec![needs[0].then(|| {
                    let mut v = vec![E::zero(); n * c * hw];
                    for ni in 0..n {
                        let dst = (ni * c + start) * hw;
                        let src = ni * len * hw;
                        v[dst..dst + len * hw].copy_from_slice(&g[src..src + len * hw]);
                    }
                    v
                })]
            }
            Op::GlobalAvgPool => {
                let [n, c, h, w] = inp[0].shape();
                let hw = h * w;
                let inv = 1.0 / hw as f64;
                vec![needs[0].then(|| {
                    let mut v = vec![E::zero(); n * c * hw];
                    for nc in 0..n * c {
                        let gv = E::from_f64(g[nc].as_f64() * inv);
                        v[nc * hw..(nc + 1) * hw].iter_mut().for_each(|e| *e = gv);
                    }
                    v
                })]
            }
            Op::Sum => {
                let sz = inp[0].numel();
                vec![needs[0].then(|| vec![g[0]; sz])]
            }
            Op::CharbonnierMean { eps } => {
                let p = inp[0].data();
                let t = inp[1].data();
                let n = p.len() as f64;
                let e2 = eps * eps;
                let gs = g[0].as_f64();
                let dloss = |pv: E, tv: E| {
                    let d = pv.as_f64() - tv.as_f64();
                    E::from_f64(gs * d / (n * (d * d + e2).sqrt()))
                };
                let gp = needs[0]
                    .then(|| p.iter().zip(t).map(|(&pv, &tv)| dloss(pv, tv)).collect());
                let gt = needs[1]
                    .then(|| p.iter().zip(t).map(|(&pv, &tv)| -dloss(pv, tv)).collect());
                vec![gp, gt]
            }
            Op::Laplacian => {
                vec![needs[0].then(|| laplacian_adjoint(g, inp[0].shape()))]
            }
        }
    }
}

// ── Broadcast plumbing ───────────────────────────────────────────────────

enum Broadcast {
    None,
    /// rhs is [B,C,1,1] spread over lhs [N,C,H,W], B ∈ {1, N}
    RhsChannel,
    LhsChannel,
}

fn broadcast_kind(a: Shape, b: Shape) -> Option<Broadcast> {
    if a == b {
        return Some(Broadcast::None);
    }
    let channel_vec = |small: Shape, big: Shape| {
        small[2] == 1 && small[3] == 1 && small[1] == big[1] && (small[0] == 1 || small[0] == big[0])
    };
    if channel_vec(b, a) {
        return Some(Broadcast::RhsChannel);
    }
    if channel_vec(a, b) {
        return Some(Broadcast::LhsChannel);
    }
    None
}

fn apply_binary<E: Element>(op: &Op, a: E, b: E) -> E {
    match op {
        Op::Add => a + b,
        Op::Sub => a - b,
        Op::Mul => a * b,
        _ => unreachable!(),
    }
}

/// Shared backward for add/sub/mul. `coeff(a_i, b_i)` returns the local
/// partials (∂out/∂a, ∂out/∂b) at one element. Broadcast operands get their
/// gradient reduced over the spread dimensions with f64 accumulation.
fn binary_backward<E: Element>(
    a: &Tensor<E>,
    b: &Tensor<E>,
    g: &[E],
    needs: &[bool],
    coeff: impl Fn(E, E) -> (E, E),
) -> Vec<Option<Vec<E>>> {
    let kind = broadcast_kind(a.shape(), b.shape()).expect("validated at record time");
    match kind {
        Broadcast::None => {
            let ga = needs[0].then(|| {
                g.iter()
                    .zip(a.data().iter().zip(b.data()))
                    .map(|(&gi, (&ai, &bi))| gi * coeff(ai, bi).0)
                    .collect()
            });
            let gb = needs[1].then(|| {
                g.iter()
                    .zip(a.data().iter().zip(b.data()))
                    .map(|(&gi, (&ai, &bi))| gi * coeff(ai, bi).1)
                    .collect()
            });
            vec![ga, gb]
        }
        Broadcast::RhsChannel => {
            let [n, c, h, w] = a.shape();
            let bn = b.shape()[0];
            let hw = h * w;
            let ga = needs[0].then(|| {
                let mut v = vec![E::zero(); g.len()];
                for ni in 0..n {
                    let si = if bn == 1 { 0 } else { ni };
                    for ci in 0..c {
                        let bv = b.data()[si * c + ci];
                        let base = (ni * c + ci) * hw;
                        for j in 0..hw {
                            v[base + j] = g[base + j] * coeff(a.data()[base + j], bv).0;
                        }
                    }
                }
                v
            });
            let gb = needs[1].then(|| {
                let mut acc = vec![0.0f64; bn * c];
                for ni in 0..n {
                    let si = if bn == 1 { 0 } else { ni };
                    for ci in 0..c {
                        let bv = b.data()[si * c + ci];
                        let base = (ni * c + ci) * hw;
                        let mut t = 0.0f64;
                        for j in 0..hw {
                            t += (g[base + j] * coeff(a.data()[base + j], bv).1).as_f64();
                        }
                        acc[si * c + ci] += t;
                    }
                }
                acc.into_iter().map(E::from_f64).collect()
            });
            vec![ga, gb]
        }
        Broadcast::LhsChannel => {
            let [n, c, h, w] = b.shape();
            let an = a.shape()[0];
            let hw = h * w;
            let ga = needs[0].then(|| {
                let mut acc = vec![0.0f64; an * c];
                for ni in 0..n {
                    let si = if an == 1 { 0 } else { ni };
                    for ci in 0..c {
                        let av = a.data()[si * c + ci];
                        let base = (ni * c + ci) * hw;
                        let mut t = 0.0f64;
                        for j in 0..hw {
                            t += (g[base + j] * coeff(av, b.data()[base + j]).0).as_f64();
                        }
                        acc[si * c + ci] += t;
                    }
                }
                acc.into_iter().map(E::from_f64).collect()
            });
            let gb = needs[1].then(|| {
                let mut v = vec![E::zero(); g.len()];
                for ni in 0..n {
                    let si = if an == 1 { 0 } else { ni };
                    for ci in 0..c {
                        let av = a.data()[si * c + ci];
                        let base = (ni * c + ci) * hw;
                        for j in 0..hw {
                            v[base + j] = g[base + j] * coeff(av, b.data()[base + j]).1;
                        }
                    }
                }
                v
            });
            vec![ga, gb]
        }
    }
}

// ── Laplacian kernels ────────────────────────────────────────────────────

/// Reflect-101 index fold: −1 → 1, n → n−2 (no edge duplication).
pub(crate) fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

fn laplacian_forward<E: Element>(x: &[E], shape: Shape) -> Vec<E> {
    let [n, c, h, w] = shape;
    let hw = h * w;
    let four = E::from_f64(4.0);
    let mut out = vec![E::zero(); x.len()];
    for nc in 0..n * c {
        let src = &x[nc * hw..(nc + 1) * hw];
        let dst = &mut out[nc * hw..(nc + 1) * hw];
        for y in 0..h {
            let up = reflect101(y as isize - 1, h) * w;
            let down = reflect101(y as isize + 1, h) * w;
            let row = y * w;
            for xx in 0..w {
                let left = reflect101(xx as isize - 1, w);
                let right = reflect101(xx as isize + 1, w);
                dst[row + xx] = src[up + xx] + src[down + xx] + src[row + left]
                    + src[row + right]
                    - four * src[row + xx];
            }
        }
    }
    out
}

/// Exact adjoint of `laplacian_forward`: scatter each tap back through the
/// same reflected indices.
fn laplacian_adjoint<E: Element>(g: &[E], shape: Shape) -> Vec<E> {
    let [n, c, h, w] = shape;
    let hw = h * w;
    let four = E::from_f64(4.0);
    let mut out = vec![E::zero(); g.len()];
    for nc in 0..n * c {
        let src = &g[nc * hw..(nc + 1) * hw];
        let dst = &mut out[nc * hw..(nc + 1) * hw];
        for y in 0..h {
            let up = reflect101(y as isize - 1, h) * w;
            let down = reflect101(y as isize + 1, h) * w;
            let row = y * w;
            for xx in 0..w {
                let left = reflect101(xx as isize - 1, w);
                let right = reflect101(xx as isize + 1, w);
                let gv = src[row + xx];
                dst[up + xx] = dst[up + xx] + gv;
                dst[down + xx] = dst[down + xx] + gv;
                dst[row + left] = dst[row + left] + gv;
                dst[row + right] = dst[row + right] + gv;
                dst[row + xx] = dst[row + xx] - four * gv;
            }
        }
    }
    out
}
