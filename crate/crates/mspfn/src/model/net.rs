//! Full network assembly: initial feature extraction, the coarse-fusion
//! module (parallel recurrent units with coarse-to-fine guidance), the
//! cascade of fine-fusion modules, and the reconstruction module that emits
//! the residual rain image.
//!
//! All stages index pyramid levels coarsest-first, matching
//! `build_pyramid` and `ModelConfig::scale_channels`.

use super::config::ModelConfig;
use super::layers::{conv_lstm_step, urab_forward, LstmState};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::pyramid::build_pyramid;
use crate::tensor::{Element, Tape, Tensor};

/// Result of one forward pass.
pub struct ModelOutput<E: Element> {
    /// estimated rain streak layer
    pub residual: Tensor<E>,
    /// clamp01(rain − residual)
    pub derained: Tensor<E>,
}

/// Upsample the coarser tensor 2×, concat with `fine`, and fuse back to
/// `fine`'s width with a 1×1 conv — the cross-scale guidance link used by
/// every fusion stage.
fn upsample_fuse<E: Element>(
    tape: &mut Tape<E>,
    coarse: &Tensor<E>,
    fine: &Tensor<E>,
    params: &ParamStore<E>,
    prefix: &str,
) -> Result<Tensor<E>> {
    let wu = params.get(&format!("{prefix}.up.w"))?;
    let bu = params.get(&format!("{prefix}.up.b"))?;
    let up = tape.conv2d_transpose(coarse, wu, Some(bu), 2, 0)?;
    let cat = tape.concat_channels(&up, fine)?;
    let wf = params.get(&format!("{prefix}.fuse.w"))?;
    let bf = params.get(&format!("{prefix}.fuse.b"))?;
    tape.conv2d(&cat, wf, Some(bf), 1, 0)
}

/// Per-level initial feature extraction: 3 → scale_channels[l] conv + relu.
pub fn initial_features<E: Element>(
    tape: &mut Tape<E>,
    pyramid: &[Tensor<E>],
    params: &ParamStore<E>,
    cfg: &ModelConfig,
) -> Result<Vec<Tensor<E>>> {
    let pad = cfg.kernel_size / 2;
    pyramid
        .iter()
        .enumerate()
        .map(|(l, img)| {
            let w = params.get(&format!("init.level{l}.conv.w"))?;
            let b = params.get(&format!("init.level{l}.conv.b"))?;
            let y = tape.conv2d(img, w, Some(b), 1, pad)?;
            Ok(tape.relu(&y))
        })
        .collect()
}

/// One recurrent step of the coarse-fusion module, updating every level's
/// LSTM state in place. Levels run coarse→fine so each level sees the
/// coarser level's hidden state from the *current* step.
pub fn cfm_step<E: Element>(
    tape: &mut Tape<E>,
    feats: &[Tensor<E>],
    states: &mut [LstmState<E>],
    params: &ParamStore<E>,
    cfg: &ModelConfig,
) -> Result<()> {
    if feats.len() != cfg.levels || states.len() != cfg.levels {
        return Err(Error::invalid(
            "cfm_step",
            format!(
                "expected {} levels, got {} features / {} states",
                cfg.levels,
                feats.len(),
                states.len()
            ),
        ));
    }
    for l in 0..cfg.levels {
        let x = if l == 0 || !cfg.variant.cross_scale() {
            feats[l].clone()
        } else {
            upsample_fuse(
                tape,
                &states[l - 1].h,
                &feats[l],
                params,
                &format!("cfm.level{l}"),
            )?
        };
        states[l] = conv_lstm_step(tape, &x, &states[l], params, &format!("cfm.level{l}.lstm"))?;
    }
    Ok(())
}

/// Coarse-fusion module: T recurrent steps from zero state, each level
/// finishing with a residual connection around its recurrence,
/// out = h_T + features.
pub fn cfm_forward<E: Element>(
    tape: &mut Tape<E>,
    feats: &[Tensor<E>],
    params: &ParamStore<E>,
    cfg: &ModelConfig,
) -> Result<Vec<Tensor<E>>> {
    let mut states: Vec<LstmState<E>> = feats
        .iter()
        .map(|f| LstmState::zeros(f.shape()))
        .collect();
    for _ in 0..cfg.t {
        cfm_step(tape, feats, &mut states, params, cfg)?;
    }
    states
        .iter()
        .zip(feats)
        .map(|(s, f)| tape.add(&s.h, f))
        .collect()
}

/// One fine-fusion module: per level (coarse→fine), fuse the coarser
/// level's output into this level's stream, then refine with a URAB.
fn ffm_forward<E: Element>(
    tape: &mut Tape<E>,
    inputs: &[Tensor<E>],
    params: &ParamStore<E>,
    cfg: &ModelConfig,
    k: usize,
) -> Result<Vec<Tensor<E>>> {
    let mut out: Vec<Tensor<E>> = Vec::with_capacity(inputs.len());
    for (l, input) in inputs.iter().enumerate() {
        let x = if l == 0 || !cfg.variant.cross_scale() {
            input.clone()
        } else {
            upsample_fuse(tape, &out[l - 1], input, params, &format!("ffm{k}.level{l}"))?
        };
        out.push(urab_forward(
            tape,
            &x,
            params,
            &format!("ffm{k}.level{l}.urab"),
            cfg.n,
            cfg.urab_sampling_pairs,
        )?);
    }
    Ok(out)
}

/// Cascade of M fine-fusion modules with long skips: module k ≥ 1 receives
/// the previous module's output plus the chain input, element-wise.
pub fn ffm_chain<E: Element>(
    tape: &mut Tape<E>,
    chain_in: &[Tensor<E>],
    params: &ParamStore<E>,
    cfg: &ModelConfig,
) -> Result<Vec<Tensor<E>>> {
    if cfg.m == 0 {
        return Ok(chain_in.to_vec());
    }
    let mut current = ffm_forward(tape, chain_in, params, cfg, 0)?;
    for k in 1..cfg.m {
        let with_skip: Vec<Tensor<E>> = current
            .iter()
            .zip(chain_in)
            .map(|(y, c)| tape.add(y, c))
            .collect::<Result<_>>()?;
        current = ffm_forward(tape, &with_skip, params, cfg, k)?;
    }
    Ok(current)
}

/// Reconstruction module: merge coarse- and fine-fusion features per level,
/// fuse coarse→fine with transposed-conv upsampling, and project the finest
/// map to a 3-channel residual image.
pub fn rm_forward<E: Element>(
    tape: &mut Tape<E>,
    cfm_out: &[Tensor<E>],
    ffm_out: &[Tensor<E>],
    params: &ParamStore<E>,
    cfg: &ModelConfig,
) -> Result<Tensor<E>> {
    if cfm_out.len() != cfg.levels || ffm_out.len() != cfg.levels {
        return Err(Error::invalid(
            "rm_forward",
            format!(
                "expected {} levels, got {} coarse / {} fine",
                cfg.levels,
                cfm_out.len(),
                ffm_out.len()
            ),
        ));
    }
    let mut merged = Vec::with_capacity(cfg.levels);
    for l in 0..cfg.levels {
        let cat = tape.concat_channels(&cfm_out[l], &ffm_out[l])?;
        let w = params.get(&format!("rm.level{l}.merge.w"))?;
        let b = params.get(&format!("rm.level{l}.merge.b"))?;
        merged.push(tape.conv2d(&cat, w, Some(b), 1, 0)?);
    }
    let mut acc = merged[0].clone();
    for (l, fine) in merged.iter().enumerate().skip(1) {
        acc = upsample_fuse(tape, &acc, fine, params, &format!("rm.level{l}"))?;
    }
    let w = params.get("rm.out.w")?;
    let b = params.get("rm.out.b")?;
    tape.conv2d(&acc, w, Some(b), 1, cfg.kernel_size / 2)
}

/// Full forward pass: pyramid → initial convs → coarse fusion → fine fusion
/// → reconstruction; derained = clamp01(rain − residual).
///
/// Variant behavior: `NoCfm` feeds initial features straight to the fusion
/// chain; `m == 0` (the no-FFM ablation) reconstructs from coarse features
/// alone; `ParallelFusion` keeps per-scale streams independent until
/// reconstruction.
pub fn mspfn_forward<E: Element>(
    tape: &mut Tape<E>,
    rain: &Tensor<E>,
    params: &ParamStore<E>,
    cfg: &ModelConfig,
) -> Result<ModelOutput<E>> {
    cfg.validate()?;
    let [_, c, h, w] = rain.shape();
    if c != 3 {
        return Err(Error::invalid(
            "mspfn_forward",
            format!("expected RGB input, got {c} channels"),
        ));
    }
    let div = cfg.size_divisor();
    if h % div != 0 || w % div != 0 {
        return Err(Error::invalid(
            "mspfn_forward",
            format!("input {h}x{w} not divisible by {div}; pad first (see derain pipeline)"),
        ));
    }
    let pyramid = build_pyramid(rain, cfg.levels)?;
    let feats = initial_features(tape, &pyramid, params, cfg)?;
    let cfm_out = if cfg.variant.has_cfm() {
        cfm_forward(tape, &feats, params, cfg)?
    } else {
        feats
    };
    let ffm_out = ffm_chain(tape, &cfm_out, params, cfg)?;
    let residual = rm_forward(tape, &cfm_out, &ffm_out, params, cfg)?;
    let diff = tape.sub(rain, &residual)?;
    let derained = tape.clamp01(&diff);
    Ok(ModelOutput { residual, derained })
}
