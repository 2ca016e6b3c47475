//! Central-difference gradient checking.
//!
//! `grad_check` compares tape gradients against numeric differentiation of
//! the same closure. The closure gets a fresh tape and fresh input handles
//! each evaluation, so it must be a pure function of those inputs.
//!
//! Callers are responsible for keeping inputs away from non-smooth points
//! (relu kinks, clamp boundaries); a finite difference straddling a kink is
//! meaningless.

use super::{Element, Tape, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Coordinates checked per input: all of them up to this budget, then a
/// seeded sample. Small tensors are therefore checked exhaustively, which
/// tests rely on when they plant a deliberate error.
const MAX_COORDS_PER_INPUT: usize = 128;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub pass: bool,
    pub max_rel_err: f64,
    /// total coordinates compared across all inputs
    pub checked: usize,
    /// (input index, flat coordinate, analytic, numeric) at the worst error
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Run `f` forward and backward once, returning the gradient of its scalar
/// output with respect to every input (zeros for inputs the output does not
/// depend on).
pub fn analytic_grads<E, F>(f: &F, inputs: &[Tensor<E>]) -> Result<Vec<Vec<E>>>
where
    E: Element,
    F: Fn(&mut Tape<E>, &[Tensor<E>]) -> Result<Tensor<E>>,
{
    let leaves: Vec<Tensor<E>> = inputs.iter().map(|t| t.requiring_grad()).collect();
    let mut tape = Tape::new();
    let loss = f(&mut tape, &leaves)?;
    if loss.shape() != [1, 1, 1, 1] {
        return Err(Error::NonScalarLoss(loss.shape()));
    }
    tape.backward(&loss)?;
    Ok(leaves
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![E::zero(); t.numel()]))
        .collect())
}

/// Evaluate `f` with input `which`'s flat coordinate `coord` displaced by
/// ±step, returning the central difference.
pub fn numeric_grad_at<E, F>(
    f: &F,
    inputs: &[Tensor<E>],
    which: usize,
    coord: usize,
    step: f64,
) -> Result<f64>
where
    E: Element,
    F: Fn(&mut Tape<E>, &[Tensor<E>]) -> Result<Tensor<E>>,
{
    let eval = |delta: f64| -> Result<f64> {
        let mut probe: Vec<Tensor<E>> = inputs.to_vec();
        let mut data = inputs[which].data().to_vec();
        data[coord] = data[coord] + E::from_f64(delta);
        probe[which] = Tensor::from_vec(inputs[which].shape(), data)?;
        let mut tape = Tape::no_grad();
        let loss = f(&mut tape, &probe)?;
        Ok(loss.scalar()?.as_f64())
    };
    Ok((eval(step)? - eval(-step)?) / (2.0 * step))
}

/// Compare the supplied gradients against central differences of `f`.
/// Relative error uses a small floor so near-zero gradients are judged
/// absolutely instead of dividing by noise.
pub fn grad_check_grads<E, F>(
    f: &F,
    inputs: &[Tensor<E>],
    grads: &[Vec<E>],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    E: Element,
    F: Fn(&mut Tape<E>, &[Tensor<E>]) -> Result<Tensor<E>>,
{
    if !(step > 0.0) || !(tol > 0.0) {
        return Err(Error::invalid("grad_check", "step and tol must be > 0"));
    }
    if grads.len() != inputs.len() {
        return Err(Error::invalid(
            "grad_check",
            "one gradient vector per input required",
        ));
    }
    let floor = 1e-6f64.max(step * step);
    let mut report = GradCheckReport {
        pass: true,
        max_rel_err: 0.0,
        checked: 0,
        worst: None,
    };
    for (which, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let coords: Vec<usize> = if n <= MAX_COORDS_PER_INPUT {
            (0..n).collect()
        } else {
            // deterministic sample, distinct via retry against a seen-set
            let mut rng = Rng::seed_from_u64(0x5eed_c0de ^ which as u64);
            let mut seen = std::collections::HashSet::new();
            let mut picked = Vec::with_capacity(MAX_COORDS_PER_INPUT);
            while picked.len() < MAX_COORDS_PER_INPUT {
                let c = rng.below(n);
                if seen.insert(c) {
                    picked.push(c);
                }
            }
            picked
        };
        for coord in coords {
            let a = grads[which][coord].as_f64();
            let fd = numeric_grad_at(f, inputs, which, coord, step)?;
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
            report.checked += 1;
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = rel;
                report.worst = Some((which, coord, a, fd));
            }
            if !rel.is_finite() || rel > tol {
                report.pass = false;
            }
        }
    }
    Ok(report)
}

/// Full check: tape gradients of `f` vs central differences, at every
/// coordinate for small inputs and a seeded subset for large ones.
pub fn grad_check<E, F>(
    f: F,
    inputs: &[Tensor<E>],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    E: Element,
    F: Fn(&mut Tape<E>, &[Tensor<E>]) -> Result<Tensor<E>>,
{
    let grads = analytic_grads(&f, inputs)?;
    grad_check_grads(&f, inputs, &grads, step, tol)
}
