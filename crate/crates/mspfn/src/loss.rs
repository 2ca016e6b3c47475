//! Training loss: Charbonnier content term on rain residuals plus a
//! Laplacian edge-map term, `total = l_con + lambda * l_edge`.
//!
//! Both terms share the same smoothing epsilon, so a perfect prediction
//! scores exactly `epsilon * (1 + lambda)` rather than zero — the floor the
//! training log converges toward.

use crate::error::{Error, Result};
use crate::pyramid::laplacian_map;
use crate::tensor::{Element, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    /// Charbonnier smoothing term; keeps the penalty differentiable at zero.
    pub epsilon: f64,
    /// Weight of the edge term relative to the content term.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            epsilon: 1e-3,
            lambda: 0.05,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("loss config", "epsilon must be > 0"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("loss config", "lambda must be >= 0"));
        }
        Ok(())
    }
}

/// mean(sqrt((pred − target)² + eps²)): a smooth L1 penalty, minimum `eps`
/// reached exactly when the tensors are identical.
pub fn charbonnier<E: Element>(
    tape: &mut Tape<E>,
    pred: &Tensor<E>,
    target: &Tensor<E>,
    eps: f64,
) -> Result<Tensor<E>> {
    tape.charbonnier_mean(pred, target, eps)
}

/// Charbonnier distance between Laplacian edge maps. The clean image enters
/// as a constant, so gradient flows into `derained` only.
pub fn edge_loss<E: Element>(
    tape: &mut Tape<E>,
    clean: &Tensor<E>,
    derained: &Tensor<E>,
    eps: f64,
) -> Result<Tensor<E>> {
    let edges_clean = laplacian_map(tape, clean);
    let edges_derained = laplacian_map(tape, derained);
    tape.charbonnier_mean(&edges_derained, &edges_clean, eps)
}

/// The three scalars of one loss evaluation, still attached to the tape:
/// call `tape.backward(&terms.total)` to differentiate.
pub struct LossTerms<E: Element> {
    pub total: Tensor<E>,
    pub l_con: Tensor<E>,
    pub l_edge: Tensor<E>,
}

impl<E: Element> LossTerms<E> {
    /// (total, l_con, l_edge) as plain numbers for logging.
    pub fn values(&self) -> (f64, f64, f64) {
        (
            self.total.data()[0].as_f64(),
            self.l_con.data()[0].as_f64(),
            self.l_edge.data()[0].as_f64(),
        )
    }
}

/// Full training objective: content term on the predicted vs true rain
/// residual, edge term on the clean vs derained image.
pub fn total_loss<E: Element>(
    tape: &mut Tape<E>,
    residual_pred: &Tensor<E>,
    residual_true: &Tensor<E>,
    clean: &Tensor<E>,
    derained: &Tensor<E>,
    cfg: &LossConfig,
) -> Result<LossTerms<E>> {
    cfg.validate()?;
    let l_con = charbonnier(tape, residual_pred, residual_true, cfg.epsilon)?;
    let l_edge = edge_loss(tape, clean, derained, cfg.epsilon)?;
    let weighted = tape.scale(&l_edge, cfg.lambda);
    let total = tape.add(&l_con, &weighted)?;
    Ok(LossTerms {
        total,
        l_con,
        l_edge,
    })
}
