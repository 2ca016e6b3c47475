//! End-to-end single image restoration: train briefly, then derain an image
//! the model never saw, saving the rain/derained/clean trio as PNGs.
//!
//!     cargo run --example derain_image

use mspfn::data::{save_image, synth_rain, synthetic_clean, ImageF, RainParams};
use mspfn::metrics::psnr;
use mspfn::model::{mspfn_forward, ModelConfig};
use mspfn::tensor::{Tape, Tensor};
use mspfn::train::{train, TrainConfig};
use mspfn::Result;

fn main() -> Result<()> {
    let out_root = std::path::Path::new("target/example-output/derain_image");
    std::fs::create_dir_all(out_root).expect("create output dir");

    // Train on four pairs...
    let train_pairs: Vec<(Tensor<f32>, Tensor<f32>)> = (0..4u64)
        .map(|i| {
            let clean = synthetic_clean(64, 64, 200 + i);
            let rain = synth_rain(&clean, &RainParams { seed: 300 + i, ..RainParams::default() })?;
            Ok((rain.to_tensor(), clean.to_tensor()))
        })
        .collect::<Result<_>>()?;
    let model = ModelConfig::tiny();
    let cfg = TrainConfig {
        batch_size: 2,
        steps: 300,
        patch: 16,
        lr_init: 1e-3,
        lr_half_every: 150,
        seed: 5,
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    println!("training {} steps on 4 pairs...", cfg.steps);
    let outcome = train(&model, &cfg, &train_pairs, out_root.join("run"), None)?;

    // ...then restore a fifth scene with unseen geometry and rain.
    let clean = synthetic_clean(64, 64, 999);
    let rain = synth_rain(&clean, &RainParams { seed: 888, angle_deg: 18.0, ..RainParams::default() })?;
    let rain_t: Tensor<f32> = rain.to_tensor();
    let clean_t: Tensor<f32> = clean.to_tensor();

    let mut tape = Tape::no_grad();
    let out = mspfn_forward(&mut tape, &rain_t, &outcome.checkpoint.params, &model)?;

    let before = psnr(&rain_t, &clean_t, 1.0)?;
    let after = psnr(&out.derained, &clean_t, 1.0)?;
    println!("held-out psnr: {before:.2} dB rainy -> {after:.2} dB derained ({:+.2} dB)", after - before);

    save_image(&rain, out_root.join("rain.png"))?;
    save_image(&ImageF::from_tensor(&out.derained)?, out_root.join("derained.png"))?;
    save_image(&clean, out_root.join("clean.png"))?;
    println!("wrote rain.png / derained.png / clean.png under {}", out_root.display());
    Ok(())
}
