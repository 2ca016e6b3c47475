//! Walk the named model variants: capacity knobs, parameter counts, and a
//! forward-pass smoke run of the desk-scale configuration.
//!
//!     cargo run --example model_variants

use mspfn::data::synthetic_clean;
use mspfn::model::{
    make_variant, mspfn_forward, param_count, ModelConfig, ParamStore, VARIANT_NAMES,
};
use mspfn::tensor::Tape;
use mspfn::Result;

fn main() -> Result<()> {
    println!(
        "{:<16} {:>6} {:>4} {:>4} {:>12}  channels",
        "variant", "levels", "M", "N", "params"
    );
    for name in VARIANT_NAMES {
        let cfg = make_variant(name)?;
        println!(
            "{:<16} {:>6} {:>4} {:>4} {:>12}  {:?}",
            name,
            cfg.levels,
            cfg.m,
            cfg.n,
            param_count(&cfg)?,
            cfg.scale_channels
        );
    }

    // The `tiny` desk-scale config is small enough to run forward right here.
    let cfg = ModelConfig::tiny();
    let params = ParamStore::<f32>::init(&cfg, 1)?;
    let rain = synthetic_clean(64, 64, 5).to_tensor::<f32>();
    let mut tape = Tape::no_grad();
    let out = mspfn_forward(&mut tape, &rain, &params, &cfg)?;
    println!(
        "\ntiny ({} params): 64x64 forward -> residual {:?}, derained {:?}",
        params.param_count(),
        out.residual.shape(),
        out.derained.shape()
    );
    println!("size divisor: inputs must be multiples of {}", cfg.size_divisor());
    Ok(())
}
