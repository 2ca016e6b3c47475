//! Generate procedural clean images, streak them with parameterized rain,
//! and build a manifest-backed dataset on disk.
//!
//!     cargo run --example synthesize_rain

use mspfn::data::{
    make_dataset, save_image, synth_rain, synthetic_clean, ParamRanges, RainParams, Split,
};
use mspfn::Result;

fn main() -> Result<()> {
    let out_root = std::path::Path::new("target/example-output/synthesize_rain");
    std::fs::create_dir_all(out_root).expect("create output dir");

    // One clean image, three rain intensities.
    let clean = synthetic_clean(96, 96, 42);
    save_image(&clean, out_root.join("clean.png"))?;
    for (tag, params) in [
        ("drizzle", RainParams { density: 0.008, intensity: 0.45, ..RainParams::default() }),
        ("steady", RainParams::default()),
        ("downpour", RainParams {
            density: 0.04,
            intensity: 0.85,
            angle_deg: -25.0,
            streak_length_px: 15,
            ..RainParams::default()
        }),
    ] {
        let rain = synth_rain(&clean, &params)?;
        // Streaks only brighten: count pixels the rain actually touched.
        let touched = clean
            .rgb()
            .iter()
            .zip(rain.rgb())
            .filter(|(a, b)| a != b)
            .count() as f64
            / clean.rgb().len() as f64;
        println!(
            "{tag:9} density {:.3}  intensity {:.2}  angle {:+.0}°  -> {:.1}% of samples touched",
            params.density,
            params.intensity,
            params.angle_deg,
            100.0 * touched
        );
        save_image(&rain, out_root.join(format!("rain_{tag}.png")))?;
    }

    // Full dataset: sampled parameters, every 3rd pair held out for testing.
    let clean_dir = out_root.join("clean_sources");
    std::fs::create_dir_all(&clean_dir).expect("create clean dir");
    for i in 0..3u64 {
        save_image(&synthetic_clean(64, 64, 100 + i), clean_dir.join(format!("src_{i}.png")))?;
    }
    let manifest = make_dataset(&clean_dir, out_root.join("dataset"), 6, &ParamRanges::default(), 7, 3)?;
    println!(
        "dataset: {} pairs ({} train / {} test) under {}",
        manifest.entries.len(),
        manifest.count(Split::Train),
        manifest.count(Split::Test),
        out_root.join("dataset").display()
    );
    Ok(())
}
