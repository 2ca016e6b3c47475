//! Build the Gaussian input pyramid the network consumes, plus the Laplacian
//! edge maps the training loss uses.
//!
//!     cargo run --example pyramid_levels

use mspfn::data::synthetic_clean;
use mspfn::pyramid::{build_pyramid, laplacian_map};
use mspfn::tensor::{Tape, Tensor};
use mspfn::Result;

fn stats(t: &Tensor<f64>) -> (f64, f64) {
    let data = t.data();
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    let max = data.iter().fold(f64::MIN, |m, &v| m.max(v));
    (mean, max)
}

fn main() -> Result<()> {
    let img: Tensor<f64> = synthetic_clean(64, 96, 3).to_tensor();

    // Coarsest level first, original resolution last — the order the
    // network's per-scale streams expect.
    let levels = build_pyramid(&img, 3)?;
    println!("gaussian pyramid of a 96x64 image:");
    for (i, level) in levels.iter().enumerate() {
        let [_, _, h, w] = level.shape();
        let (mean, max) = stats(level);
        println!("  level {i}: {w}x{h}  mean {mean:.4}  max {max:.4}");
    }

    // Blur-and-decimate halves each axis; means stay put, peaks soften.
    let mut tape = Tape::no_grad();
    let edges = laplacian_map(&mut tape, &img);
    let (emean, emax) = stats(&edges);
    println!("laplacian edge map: mean {emean:.4}  max {emax:.4}");
    println!("(edge maps drive the loss term that protects structure)");
    Ok(())
}
