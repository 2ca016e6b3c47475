//! Evaluation metrics: PSNR and single-scale SSIM on [0,1] images.
//!
//! Both run in f64 regardless of the tensor element type and are pure
//! functions — they never touch the autodiff tape.

use crate::error::{Error, Result};
use crate::pyramid::gaussian_kernel;
use crate::tensor::{Element, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Mean squared error over every element.
pub fn mse<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "mse",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let total: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(total / a.numel() as f64)
}

/// Peak signal-to-noise ratio in dB: 10·log10(peak² / MSE).
/// Identical images return `f64::INFINITY` (formatted as "inf").
pub fn psnr<E: Element>(a: &Tensor<E>, b: &Tensor<E>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::invalid("psnr", "peak must be > 0"));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// Single-scale SSIM: 11×11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03, peak 1.0. Scores every fully-inside window position, averaged
/// over positions, channels, and batch.
pub fn ssim<E: Element>(a: &Tensor<E>, b: &Tensor<E>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "ssim",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let [n, c, h, w] = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim",
            format!("image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let window = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)?;
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let hw = h * w;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for nc in 0..n * c {
        let pa = &a.data()[nc * hw..(nc + 1) * hw];
        let pb = &b.data()[nc * hw..(nc + 1) * hw];
        for y in 0..=h - SSIM_WINDOW {
            for x in 0..=w - SSIM_WINDOW {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for ky in 0..SSIM_WINDOW {
                    let row = (y + ky) * w + x;
                    for kx in 0..SSIM_WINDOW {
                        let wgt = window[ky * SSIM_WINDOW + kx];
                        let va = pa[row + kx].as_f64();
                        let vb = pb[row + kx].as_f64();
                        sa += wgt * va;
                        sb += wgt * vb;
                        saa += wgt * va * va;
                        sbb += wgt * vb * vb;
                        sab += wgt * va * vb;
                    }
                }
                let var_a = saa - sa * sa;
                let var_b = sbb - sb * sb;
                let cov = sab - sa * sb;
                sum += ((2.0 * sa * sb + c1) * (2.0 * cov + c2))
                    / ((sa * sa + sb * sb + c1) * (var_a + var_b + c2));
                count += 1;
            }
        }
    }
    Ok(sum / count as f64)
}

/// BT.601 luma: [N,3,H,W] RGB → [N,1,H,W], Y = 0.299 R + 0.587 G + 0.114 B.
/// Deraining papers are split on whether metrics use RGB or Y; both are
/// supported, with RGB the default.
pub fn luma<E: Element>(img: &Tensor<E>) -> Result<Tensor<E>> {
    let [n, c, h, w] = img.shape();
    if c != 3 {
        return Err(Error::invalid(
            "luma",
            format!("expected 3 channels, got {c}"),
        ));
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(n * hw);
    for ni in 0..n {
        let base = ni * 3 * hw;
        let (r, g, b) = (
            &img.data()[base..base + hw],
            &img.data()[base + hw..base + 2 * hw],
            &img.data()[base + 2 * hw..base + 3 * hw],
        );
        for i in 0..hw {
            out.push(E::from_f64(
                0.299 * r[i].as_f64() + 0.587 * g[i].as_f64() + 0.114 * b[i].as_f64(),
            ));
        }
    }
    Tensor::from_vec([n, 1, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let a = Tensor::<f32>::uniform([1, 3, 16, 16], 0.0, 1.0, &mut Rng::seed_from_u64(31));
        let p = psnr(&a, &a, 1.0).unwrap();
        assert!(p.is_infinite() && p > 0.0);
        assert_eq!(format!("{p}"), "inf");
    }

    #[test]
    fn constant_tenth_offset_scores_twenty_db() {
        let a = Tensor::<f64>::full([1, 3, 8, 8], 0.4);
        let b = Tensor::<f64>::full([1, 3, 8, 8], 0.5);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-10);
    }

    #[test]
    fn halving_mse_adds_three_db() {
        let mut rng = Rng::seed_from_u64(32);
        let a = Tensor::<f64>::uniform([1, 1, 12, 12], 0.3, 0.7, &mut rng);
        let d = 0.05;
        let b1 = a.map(|v| v + d);
        let b2 = a.map(|v| v + d / 2f64.sqrt());
        let gain = psnr(&a, &b2, 1.0).unwrap() - psnr(&a, &b1, 1.0).unwrap();
        assert!((gain - 10.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn psnr_strictly_decreases_as_error_grows() {
        let a = Tensor::<f64>::full([1, 1, 8, 8], 0.5);
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let b = a.map(|v| v + 0.02 * k as f64);
            let p = psnr(&a, &b, 1.0).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let a = Tensor::<f32>::uniform([1, 3, 16, 16], 0.0, 1.0, &mut Rng::seed_from_u64(33));
        let s = ssim(&a, &a).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "ssim {s}");
    }

    #[test]
    fn ssim_is_symmetric_and_in_range() {
        let mut rng = Rng::seed_from_u64(34);
        for _ in 0..3 {
            let a = Tensor::<f64>::uniform([1, 1, 14, 14], 0.0, 1.0, &mut rng);
            let b = Tensor::<f64>::uniform([1, 1, 14, 14], 0.0, 1.0, &mut rng);
            let sab = ssim(&a, &b).unwrap();
            let sba = ssim(&b, &a).unwrap();
            assert!((sab - sba).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&sab));
        }
    }

    #[test]
    fn ssim_rejects_images_smaller_than_window() {
        let a = Tensor::<f64>::zeros([1, 1, 10, 16]);
        assert!(ssim(&a, &a).is_err());
        let b = Tensor::<f64>::zeros([1, 1, 11, 11]);
        assert!(ssim(&b, &b).is_ok());
    }

    #[test]
    fn ssim_stable_under_joint_constant_shift() {
        // Shifting both images by the same constant moves only the
        // luminance stabilizer; for near-identical pairs the effect is
        // below 1e-6.
        let mut rng = Rng::seed_from_u64(35);
        let base = Tensor::<f64>::uniform([1, 1, 16, 16], 0.3, 0.6, &mut rng);
        let other = {
            let noise = Tensor::<f64>::uniform([1, 1, 16, 16], -5e-4, 5e-4, &mut rng);
            base.zip(&noise, |a, n| a + n).unwrap()
        };
        let s0 = ssim(&base, &other).unwrap();
        for shift in [0.05, 0.1] {
            let a = base.map(|v| v + shift);
            let b = other.map(|v| v + shift);
            let s = ssim(&a, &b).unwrap();
            assert!((s - s0).abs() < 1e-6, "shift {shift}: {s} vs {s0}");
        }
    }

    #[test]
    fn ssim_penalizes_structural_noise_more_than_psnr_suggests() {
        // sanity direction check: blurring out structure lowers ssim
        let mut rng = Rng::seed_from_u64(36);
        let a = Tensor::<f64>::uniform([1, 1, 16, 16], 0.0, 1.0, &mut rng);
        let b = Tensor::<f64>::uniform([1, 1, 16, 16], 0.0, 1.0, &mut rng);
        let s_noise = ssim(&a, &b).unwrap();
        assert!(s_noise < 0.5);
    }

    #[test]
    fn luma_weights_are_a_convex_combination() {
        let img = Tensor::<f64>::full([2, 3, 4, 4], 0.37);
        let y = luma(&img).unwrap();
        assert_eq!(y.shape(), [2, 1, 4, 4]);
        assert!(y.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
        let gray_only = Tensor::<f64>::zeros([1, 1, 4, 4]);
        assert!(luma(&gray_only).is_err());
    }

    #[test]
    fn metrics_reject_shape_mismatch() {
        let a = Tensor::<f64>::zeros([1, 3, 16, 16]);
        let b = Tensor::<f64>::zeros([1, 3, 16, 12]);
        assert!(psnr(&a, &b, 1.0).is_err());
        assert!(ssim(&a, &b).is_err());
        assert!(mse(&a, &b).is_err());
    }
}
