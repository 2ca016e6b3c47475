//! Tour of the tensor/autograd core: build rank-4 tensors, record ops on a
//! tape, backpropagate, and verify a gradient against central differences.
//!
//!     cargo run --example autograd_basics

use mspfn::rng::Rng;
use mspfn::tensor::{grad_check, Tape, Tensor};
use mspfn::Result;

fn main() -> Result<()> {
    // Tensors are always rank-4 [N, C, H, W]; f32 and f64 both work.
    let mut rng = Rng::seed_from_u64(7);
    let x = Tensor::<f64>::uniform([1, 2, 4, 4], -1.0, 1.0, &mut rng).requiring_grad();
    let w = Tensor::<f64>::uniform([3, 2, 3, 3], -0.5, 0.5, &mut rng).requiring_grad();

    // Ops live on a tape; each call records what backward() needs.
    let mut tape = Tape::new();
    let y = tape.conv2d(&x, &w, None, 1, 1)?;
    let a = tape.relu(&y);
    let loss = tape.mean(&a);
    println!("conv out shape {:?}, loss = {:.6}", y.shape(), loss.scalar()?);

    // backward() consumes the tape and fills .grad() on leaves.
    tape.backward(&loss)?;
    let gx = x.grad().expect("x requires grad");
    let gw = w.grad().expect("w requires grad");
    println!(
        "|dL/dx| max = {:.6}, |dL/dw| max = {:.6}",
        gx.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        gw.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    );

    // The same check the test suite runs: tape gradients vs finite
    // differences. (Sigmoid keeps the function smooth everywhere.)
    let report = grad_check(
        |tape, inputs| {
            let y = tape.conv2d(&inputs[0], &inputs[1], None, 1, 1)?;
            let s = tape.sigmoid(&y);
            Ok(tape.mean(&s))
        },
        &[x.clone(), w.clone()],
        1e-5,
        1e-6,
    )?;
    println!(
        "grad check: {} coordinates, max rel err {:.2e}, pass = {}",
        report.checked, report.max_rel_err, report.pass
    );
    Ok(())
}
