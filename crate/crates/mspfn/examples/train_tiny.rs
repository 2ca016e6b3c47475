//! Train the desk-scale configuration for a couple hundred steps on an
//! in-memory synthetic dataset and watch the loss fall.
//!
//!     cargo run --example train_tiny

use mspfn::data::{synth_rain, synthetic_clean, RainParams};
use mspfn::model::ModelConfig;
use mspfn::tensor::Tensor;
use mspfn::train::{train, TrainConfig};
use mspfn::Result;

fn main() -> Result<()> {
    // Four 64x64 rainy/clean pairs, fully in memory.
    let pairs: Vec<(Tensor<f32>, Tensor<f32>)> = (0..4u64)
        .map(|i| {
            let clean = synthetic_clean(64, 64, 10 + i);
            let rain = synth_rain(
                &clean,
                &RainParams {
                    seed: 20 + i,
                    angle_deg: -20.0 + 12.0 * i as f64,
                    ..RainParams::default()
                },
            )?;
            Ok((rain.to_tensor(), clean.to_tensor()))
        })
        .collect::<Result<_>>()?;

    let model = ModelConfig::tiny();
    let cfg = TrainConfig {
        batch_size: 2,
        steps: 120,
        patch: 16,
        lr_init: 1e-3,
        seed: 1,
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    let out_dir = std::path::Path::new("target/example-output/train_tiny");
    println!("training tiny config for {} steps...", cfg.steps);
    let outcome = train(&model, &cfg, &pairs, out_dir, None)?;

    for record in outcome.log.iter().step_by(20) {
        println!(
            "  step {:>4}  lr {:.1e}  loss {:.5}  content {:.5}  edge {:.5}  psnr {:.2}",
            record.step, record.lr, record.loss, record.l_con, record.l_edge, record.psnr
        );
    }
    let (first, last) = (&outcome.log[0], outcome.log.last().unwrap());
    println!(
        "loss {:.5} -> {:.5} over {} steps",
        first.loss, last.loss, last.step
    );
    println!("checkpoint: {}", outcome.checkpoint_path.display());
    println!("log:        {} (one JSON record per step)", outcome.log_path.display());
    Ok(())
}
