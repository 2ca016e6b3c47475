//! PSNR and SSIM scoring, RGB and luma-only, including the infinite-PSNR
//! edge case for identical images.
//!
//!     cargo run --example evaluate_metrics

use mspfn::data::{synth_rain, synthetic_clean, RainParams};
use mspfn::metrics::{luma, psnr, ssim};
use mspfn::tensor::Tensor;
use mspfn::Result;

fn main() -> Result<()> {
    let clean = synthetic_clean(64, 64, 77);
    let clean_t: Tensor<f64> = clean.to_tensor();

    println!("{:<22} {:>10} {:>8}", "comparison", "psnr", "ssim");
    for (label, density, intensity) in [
        ("light rain", 0.01, 0.45),
        ("moderate rain", 0.02, 0.60),
        ("heavy rain", 0.05, 0.85),
    ] {
        let rain = synth_rain(
            &clean,
            &RainParams { density, intensity, seed: 3, ..RainParams::default() },
        )?;
        let rain_t: Tensor<f64> = rain.to_tensor();
        let p = psnr(&rain_t, &clean_t, 1.0)?;
        let s = ssim(&rain_t, &clean_t)?;
        println!("{label:<22} {p:>10.4} {s:>8.4}");

        // Metrics can also be computed on the BT.601 luminance channel.
        let (ly, lc) = (luma(&rain_t)?, luma(&clean_t)?);
        println!(
            "{:<22} {:>10.4} {:>8.4}",
            format!("  {label} (luma)"),
            psnr(&ly, &lc, 1.0)?,
            ssim(&ly, &lc)?
        );
    }

    // Identical inputs: zero error means infinite PSNR and SSIM exactly 1.
    let p = psnr(&clean_t, &clean_t, 1.0)?;
    let s = ssim(&clean_t, &clean_t)?;
    println!("{:<22} {:>10} {s:>8.4}", "clean vs clean", if p.is_infinite() { "inf" } else { "?" });
    Ok(())
}
