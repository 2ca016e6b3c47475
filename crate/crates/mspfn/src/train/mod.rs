//! Training engine: seeded batches, forward/backward, Adam updates, JSONL
//! metric logs, and periodic checkpoints that resume bit-exactly.

pub mod adam;
pub mod checkpoint;

pub use adam::{adam_step, lr_schedule, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::sample_batch;
use crate::error::{Error, Result};
use crate::loss::{total_loss, LossConfig};
use crate::metrics::psnr;
use crate::model::{mspfn_forward, ModelConfig, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor};

/// Hyperparameters for one training run. The defaults are desk-scale;
/// [`TrainConfig::paper_defaults`] restores the published regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_half_every: u64,
    pub lr_floor: f64,
    /// Total optimization steps. When 0, the budget is derived from
    /// `epochs` (one epoch = ceil(pairs / batch_size) steps).
    pub steps: u64,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub patch: usize,
    pub loss: LossConfig,
    /// Save a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 2,
            lr_init: 2e-4,
            lr_half_every: 20000,
            lr_floor: 1e-6,
            steps: 200,
            epochs: 0,
            adam_beta1: ADAM_BETA1,
            adam_beta2: ADAM_BETA2,
            adam_eps: ADAM_EPS,
            seed: 0,
            patch: 64,
            loss: LossConfig::default(),
            checkpoint_every: 500,
        }
    }
}

impl TrainConfig {
    /// The published regime: batch 8, lr 2e-4 halved every 20000 steps with
    /// floor 1e-6, 30 epochs (step budget derived from the dataset).
    pub fn paper_defaults() -> Self {
        TrainConfig {
            batch_size: 8,
            steps: 0,
            epochs: 30,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patch == 0 {
            return Err(Error::invalid("train_config", "batch_size and patch must be >= 1"));
        }
        if !(self.lr_init > 0.0) || !(self.lr_floor > 0.0) {
            return Err(Error::invalid("train_config", "learning rates must be positive"));
        }
        if self.lr_floor > self.lr_init {
            return Err(Error::invalid("train_config", "lr_floor must not exceed lr_init"));
        }
        if self.lr_half_every == 0 {
            return Err(Error::invalid("train_config", "lr_half_every must be >= 1"));
        }
        if self.steps == 0 && self.epochs == 0 {
            return Err(Error::invalid("train_config", "either steps or epochs must be set"));
        }
        self.loss.validate()
    }
}

/// One JSON line per optimization step (`step` is 1-indexed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub l_con: f64,
    pub l_edge: f64,
    pub psnr: f64,
}

/// What a finished run hands back.
#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
    pub log: Vec<LogRecord>,
}

fn ensure_finite_loss(step: u64, lr: f64, total: f64, l_con: f64, l_edge: f64) -> Result<()> {
    if total.is_finite() && l_con.is_finite() && l_edge.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            step,
            l_con,
            l_edge,
            lr,
        })
    }
}

/// Run (or resume) training over `(rain, clean)` image pairs.
///
/// Per step: sample an aligned patch batch, run the forward pass, evaluate
/// the two-term loss against the true residual, backpropagate, and apply one
/// Adam update at the scheduled rate. Appends one [`LogRecord`] per step to
/// `train_log.jsonl` in `out_dir`, checkpoints every `checkpoint_every`
/// steps and at the end, and aborts with diagnostics if the loss leaves the
/// finite range.
///
/// The RNG drives batch sampling only, and its state rides along in every
/// checkpoint, so resuming from step N replays exactly the batches the
/// uninterrupted run would have seen.
pub fn train(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    pairs: &[(Tensor<f32>, Tensor<f32>)],
    out_dir: impl AsRef<Path>,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    let out_dir = out_dir.as_ref();
    model_cfg.validate()?;
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("train", "no training pairs"));
    }
    let div = model_cfg.size_divisor();
    if cfg.patch % div != 0 {
        return Err(Error::invalid(
            "train",
            format!("patch {} is not divisible by the model's size divisor {div}", cfg.patch),
        ));
    }
    let steps_per_epoch = pairs.len().div_ceil(cfg.batch_size) as u64;
    let total_steps = if cfg.steps > 0 {
        cfg.steps
    } else {
        cfg.epochs as u64 * steps_per_epoch
    };

    let (mut params, mut adam, mut rng, start_step) = match resume {
        Some(ckpt) => {
            if ckpt.model != *model_cfg {
                return Err(Error::invalid(
                    "train",
                    "checkpoint model config does not match the requested model",
                ));
            }
            if ckpt.step >= total_steps {
                return Err(Error::invalid(
                    "train",
                    format!(
                        "checkpoint is already at step {} of {total_steps}",
                        ckpt.step
                    ),
                ));
            }
            let adam = match ckpt.adam {
                Some(a) => a,
                None => AdamState::new(&ckpt.params),
            };
            (ckpt.params, adam, Rng::from_state(ckpt.rng_state), ckpt.step)
        }
        None => {
            let mut rng = Rng::seed_from_u64(cfg.seed);
            let params = ParamStore::<f32>::init(model_cfg, rng.next_u64())?;
            let adam = AdamState::new(&params);
            (params, adam, rng, 0)
        }
    };

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join("train_log.jsonl");
    let mut log_file =
        fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = Vec::with_capacity((total_steps - start_step) as usize);

    let make_checkpoint =
        |step: u64, params: &ParamStore<f32>, adam: &AdamState<f32>, rng: &Rng| Checkpoint {
            model: model_cfg.clone(),
            step,
            rng_state: rng.state(),
            params: params.clone(),
            adam: Some(adam.clone()),
        };

    for step in start_step..total_steps {
        let lr = lr_schedule(step, cfg.lr_init, cfg.lr_half_every, cfg.lr_floor);
        let (rain, clean) = sample_batch(pairs, cfg.patch, cfg.batch_size, &mut rng)?;
        let mut tape = Tape::new();
        let out = mspfn_forward(&mut tape, &rain, &params, model_cfg)?;
        let residual_true = tape.sub(&rain, &clean)?;
        let terms = total_loss(
            &mut tape,
            &out.residual,
            &residual_true,
            &clean,
            &out.derained,
            &cfg.loss,
        )?;
        let (loss, l_con, l_edge) = terms.values();
        ensure_finite_loss(step + 1, lr, loss, l_con, l_edge)?;
        let batch_psnr = psnr(&out.derained, &clean, 1.0)?;
        tape.backward(&terms.total)?;
        adam_step(
            &mut params,
            &mut adam,
            lr,
            cfg.adam_beta1,
            cfg.adam_beta2,
            cfg.adam_eps,
        )?;

        let record = LogRecord {
            step: step + 1,
            lr,
            loss,
            l_con,
            l_edge,
            psnr: batch_psnr,
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::invalid("train", format!("log serialization: {e}")))?;
        writeln!(log_file, "{line}").map_err(|e| Error::io(&log_path, e))?;
        log.push(record);

        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < total_steps
        {
            let ckpt = make_checkpoint(step + 1, &params, &adam, &rng);
            let path = out_dir.join(format!("checkpoint_step{:06}.ckpt", step + 1));
            save_checkpoint(&ckpt, path)?;
        }
    }
    log_file.flush().map_err(|e| Error::io(&log_path, e))?;

    let checkpoint = make_checkpoint(total_steps, &params, &adam, &rng);
    let checkpoint_path = out_dir.join("checkpoint_final.ckpt");
    save_checkpoint(&checkpoint, &checkpoint_path)?;
    Ok(TrainOutcome {
        checkpoint,
        checkpoint_path,
        log_path,
        log,
    })
}
