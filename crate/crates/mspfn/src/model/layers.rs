//! Network building blocks: the convolutional LSTM cell, the channel
//! attention unit (CAU), and the U-shaped residual attention block (URAB).
//!
//! Each block reads its weights from a [`ParamStore`] under a caller-chosen
//! name prefix, matching the scheme documented on `param_schema`.

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tape, Tensor};

/// Hidden and cell state of one convolutional LSTM.
#[derive(Clone)]
pub struct LstmState<E: Element> {
    pub h: Tensor<E>,
    pub c: Tensor<E>,
}

impl<E: Element> LstmState<E> {
    pub fn zeros(shape: crate::tensor::Shape) -> Self {
        LstmState {
            h: Tensor::zeros(shape),
            c: Tensor::zeros(shape),
        }
    }
}

/// One convolutional LSTM step.
///
/// i = σ(Wxi∗x + Whi∗h + bi)    f = σ(Wxf∗x + Whf∗h + bf)
/// o = σ(Wxo∗x + Who∗h + bo)    g = tanh(Wxg∗x + Whg∗h + bg)
/// c' = f⊙c + i⊙g               h' = o⊙tanh(c')
///
/// All convolutions stride 1 with same-size padding; the per-gate bias rides
/// on the input convolution. Weights live under `{prefix}.w_x*`, `.w_h*`,
/// `.b_*` and are shared by every step of the recurrence.
pub fn conv_lstm_step<E: Element>(
    tape: &mut Tape<E>,
    x: &Tensor<E>,
    state: &LstmState<E>,
    params: &ParamStore<E>,
    prefix: &str,
) -> Result<LstmState<E>> {
    if x.shape() != state.h.shape() || state.h.shape() != state.c.shape() {
        return Err(Error::ShapeMismatch {
            op: "conv_lstm_step",
            lhs: x.shape(),
            rhs: state.h.shape(),
        });
    }
    let gate = |tape: &mut Tape<E>, name: char| -> Result<Tensor<E>> {
        let wx = params.get(&format!("{prefix}.w_x{name}"))?;
        let wh = params.get(&format!("{prefix}.w_h{name}"))?;
        let b = params.get(&format!("{prefix}.b_{name}"))?;
        let pad = wx.shape()[2] / 2;
        let from_x = tape.conv2d(x, wx, Some(b), 1, pad)?;
        let from_h = tape.conv2d(&state.h, wh, None, 1, pad)?;
        tape.add(&from_x, &from_h)
    };
    let i = gate(tape, 'i')?;
    let f = gate(tape, 'f')?;
    let o = gate(tape, 'o')?;
    let g = gate(tape, 'g')?;
    let i = tape.sigmoid(&i);
    let f = tape.sigmoid(&f);
    let o = tape.sigmoid(&o);
    let g = tape.tanh(&g);

    let keep = tape.mul(&f, &state.c)?;
    let write = tape.mul(&i, &g)?;
    let c = tape.add(&keep, &write)?;
    let c_act = tape.tanh(&c);
    let h = tape.mul(&o, &c_act)?;
    Ok(LstmState { h, c })
}

/// How the channel attention gate is produced.
#[derive(Clone, Copy, Debug)]
pub enum AttnMode {
    /// squeeze-excitation gate learned from the features
    Learned,
    /// test hook: force the gate to a constant (1.0 disables attention
    /// without removing the block; 0.0 silences the branch entirely)
    Bypass(f64),
}

/// Channel attention unit: two feature convolutions, a squeeze-excitation
/// gate, and a short residual skip.
///
///   f = conv2(relu(conv1(x)))
///   s = σ(expand(relu(reduce(global_avg_pool(f)))))
///   out = x + f ⊙ s
pub fn cau_forward<E: Element>(
    tape: &mut Tape<E>,
    x: &Tensor<E>,
    params: &ParamStore<E>,
    prefix: &str,
    attn: AttnMode,
) -> Result<Tensor<E>> {
    let w1 = params.get(&format!("{prefix}.conv1.w"))?;
    let b1 = params.get(&format!("{prefix}.conv1.b"))?;
    let w2 = params.get(&format!("{prefix}.conv2.w"))?;
    let b2 = params.get(&format!("{prefix}.conv2.b"))?;
    let pad = w1.shape()[2] / 2;
    let y = tape.conv2d(x, w1, Some(b1), 1, pad)?;
    let y = tape.relu(&y);
    let f = tape.conv2d(&y, w2, Some(b2), 1, pad)?;

    let s = match attn {
        AttnMode::Learned => {
            let wr = params.get(&format!("{prefix}.reduce.w"))?;
            let br = params.get(&format!("{prefix}.reduce.b"))?;
            let we = params.get(&format!("{prefix}.expand.w"))?;
            let be = params.get(&format!("{prefix}.expand.b"))?;
            let pooled = tape.global_avg_pool(&f);
            let r = tape.conv2d(&pooled, wr, Some(br), 1, 0)?;
            let r = tape.relu(&r);
            let e = tape.conv2d(&r, we, Some(be), 1, 0)?;
            tape.sigmoid(&e)
        }
        AttnMode::Bypass(v) => {
            let [n, c, _, _] = f.shape();
            Tensor::full([n, c, 1, 1], v)
        }
    };
    let gated = tape.mul(&f, &s)?;
    tape.add(x, &gated)
}

/// U-shaped residual attention block: `pairs` strided downsampling convs,
/// `n` channel attention units, matching transposed-conv upsampling, and an
/// outer skip. Spatial dims must be divisible by 2^pairs.
pub fn urab_forward<E: Element>(
    tape: &mut Tape<E>,
    x: &Tensor<E>,
    params: &ParamStore<E>,
    prefix: &str,
    n: usize,
    pairs: usize,
) -> Result<Tensor<E>> {
    let [_, _, h, w] = x.shape();
    let div = 1usize << pairs;
    if h % div != 0 || w % div != 0 {
        return Err(Error::invalid(
            "urab_forward",
            format!("spatial dims {h}x{w} not divisible by 2^{pairs}"),
        ));
    }
    let mut y = x.clone();
    for p in 0..pairs {
        let wd = params.get(&format!("{prefix}.down{p}.w"))?;
        let bd = params.get(&format!("{prefix}.down{p}.b"))?;
        let z = tape.conv2d(&y, wd, Some(bd), 2, 1)?;
        y = tape.relu(&z);
    }
    for j in 0..n {
        y = cau_forward(tape, &y, params, &format!("{prefix}.cau{j}"), AttnMode::Learned)?;
    }
    for p in 0..pairs {
        let wu = params.get(&format!("{prefix}.up{p}.w"))?;
        let bu = params.get(&format!("{prefix}.up{p}.b"))?;
        y = tape.conv2d_transpose(&y, wu, Some(bu), 2, 0)?;
    }
    tape.add(x, &y)
}
