//! Gaussian pyramids and Laplacian edge maps.
//!
//! Pyramid construction runs on plain image tensors outside the autodiff
//! tape (pyramid levels are network *inputs*), while [`laplacian_map`] is a
//! tape op because it sits inside the edge-loss graph.
//!
//! All border handling here is reflect-101 (mirror without repeating the
//! edge pixel), so constant images stay constant and no artificial edges
//! appear at borders.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tape, Tensor};

/// Default pyramid smoothing kernel: 5×5, σ = 1.0.
pub const DEFAULT_KERNEL_SIZE: usize = 5;
pub const DEFAULT_KERNEL_SIGMA: f64 = 1.0;

/// Sampled, normalized 2D Gaussian as a flat row-major `size`×`size` grid.
/// Built as the outer product of a normalized 1D kernel, so it is symmetric
/// under transpose and 90° rotation and sums to 1.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::invalid(
            "gaussian_kernel",
            format!("size must be odd and positive, got {size}"),
        ));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("gaussian_kernel", "sigma must be > 0"));
    }
    let r = (size / 2) as isize;
    let mut k1: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k1.iter().sum();
    k1.iter_mut().for_each(|v| *v /= s);
    let mut k2 = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            k2.push(k1[y] * k1[x]);
        }
    }
    Ok(k2)
}

fn kernel_side(kernel: &[f64]) -> Result<usize> {
    let size = (kernel.len() as f64).sqrt().round() as usize;
    if size * size != kernel.len() || size % 2 == 0 || size == 0 {
        return Err(Error::invalid(
            "gaussian_blur",
            "kernel must be a flat odd-sided square grid",
        ));
    }
    Ok(size)
}

/// Direct 2D convolution with reflect-101 borders, per channel.
pub fn gaussian_blur<E: Element>(img: &Tensor<E>, kernel: &[f64]) -> Result<Tensor<E>> {
    let size = kernel_side(kernel)?;
    let r = (size / 2) as isize;
    let [n, c, h, w] = img.shape();
    let hw = h * w;
    let src = img.data();
    let mut out = vec![E::zero(); src.len()];
    for nc in 0..n * c {
        let plane = &src[nc * hw..(nc + 1) * hw];
        let dst = &mut out[nc * hw..(nc + 1) * hw];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f64;
                for ky in -r..=r {
                    let sy = reflect101(y as isize + ky, h);
                    for kx in -r..=r {
                        let sx = reflect101(x as isize + kx, w);
                        acc += kernel[((ky + r) * size as isize + kx + r) as usize]
                            * plane[sy * w + sx].as_f64();
                    }
                }
                dst[y * w + x] = E::from_f64(acc);
            }
        }
    }
    Tensor::from_vec(img.shape(), out)
}

/// Blur, then keep every second pixel starting at index 0:
/// [N,C,H,W] → [N,C,floor(H/2),floor(W/2)].
pub fn downsample<E: Element>(img: &Tensor<E>, kernel: &[f64]) -> Result<Tensor<E>> {
    let [n, c, h, w] = img.shape();
    if h < 2 || w < 2 {
        return Err(Error::invalid(
            "downsample",
            format!("input {h}x{w} too small to halve"),
        ));
    }
    let blurred = gaussian_blur(img, kernel)?;
    let (ho, wo) = (h / 2, w / 2);
    let hw = h * w;
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let src = blurred.data();
    for nc in 0..n * c {
        let plane = &src[nc * hw..(nc + 1) * hw];
        for y in 0..ho {
            for x in 0..wo {
                out.push(plane[(2 * y) * w + 2 * x]);
            }
        }
    }
    Tensor::from_vec([n, c, ho, wo], out)
}

/// Gaussian pyramid with the default 5/1.0 kernel, **coarsest level first**
/// (index `levels−1` is the untouched input). Spatial dims must halve
/// exactly at every step, i.e. be divisible by 2^(levels−1); callers pad
/// first (see the derain pipeline) when they are not.
pub fn build_pyramid<E: Element>(img: &Tensor<E>, levels: usize) -> Result<Vec<Tensor<E>>> {
    let kernel = gaussian_kernel(DEFAULT_KERNEL_SIZE, DEFAULT_KERNEL_SIGMA)?;
    build_pyramid_with(img, levels, &kernel)
}

pub fn build_pyramid_with<E: Element>(
    img: &Tensor<E>,
    levels: usize,
    kernel: &[f64],
) -> Result<Vec<Tensor<E>>> {
    if levels < 1 {
        return Err(Error::invalid("build_pyramid", "levels must be >= 1"));
    }
    let [_, _, h, w] = img.shape();
    let div = 1usize << (levels - 1);
    if h % div != 0 || w % div != 0 {
        return Err(Error::invalid(
            "build_pyramid",
            format!("{h}x{w} not divisible by 2^(levels-1) = {div}; pad the input first"),
        ));
    }
    let mut pyramid = vec![img.clone()];
    for _ in 1..levels {
        let coarser = downsample(pyramid.last().unwrap(), kernel)?;
        pyramid.push(coarser);
    }
    pyramid.reverse();
    Ok(pyramid)
}

/// Four-neighbour Laplacian edge map, recorded on the tape so the edge loss
/// can differentiate through it.
pub fn laplacian_map<E: Element>(tape: &mut Tape<E>, img: &Tensor<E>) -> Tensor<E> {
    tape.laplacian(img)
}

fn reflect101(i: isize, n: usize) -> usize {
    crate::tensor::reflect101(i, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn kernel_normalizes_and_is_symmetric() {
        for (size, sigma) in [(1, 0.7), (3, 1.0), (5, 1.0), (5, 2.3), (9, 1.6)] {
            let k = gaussian_kernel(size, sigma).unwrap();
            let sum: f64 = k.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum} for {size}/{sigma}");
            for y in 0..size {
                for x in 0..size {
                    assert_eq!(k[y * size + x], k[x * size + y]);
                    assert_eq!(k[y * size + x], k[(size - 1 - y) * size + x]);
                }
            }
        }
    }

    #[test]
    fn kernel_size_one_is_identity() {
        let k = gaussian_kernel(1, 1.0).unwrap();
        assert_eq!(k, vec![1.0]);
    }

    #[test]
    fn kernel_center_is_max() {
        let k = gaussian_kernel(5, 1.0).unwrap();
        let center = k[2 * 5 + 2];
        assert!(k.iter().all(|&v| v <= center));
    }

    #[test]
    fn kernel_rejects_even_size_and_bad_sigma() {
        assert!(gaussian_kernel(4, 1.0).is_err());
        assert!(gaussian_kernel(0, 1.0).is_err());
        assert!(gaussian_kernel(5, 0.0).is_err());
        assert!(gaussian_kernel(5, -1.0).is_err());
    }

    #[test]
    fn downsample_preserves_constant() {
        let img = Tensor::<f32>::full([1, 3, 64, 64], 0.42);
        let k = gaussian_kernel(5, 1.0).unwrap();
        let out = downsample(&img, &k).unwrap();
        assert_eq!(out.shape(), [1, 3, 32, 32]);
        assert!(out.data().iter().all(|&v| (v - 0.42).abs() < 1e-6));
    }

    #[test]
    fn downsample_of_impulse_reads_kernel_at_even_offsets() {
        // Impulse at (8, 8), away from borders: the blurred image equals the
        // kernel stamped around the impulse, so decimated samples must read
        // kernel entries directly — derived without running any convolution.
        let mut img = vec![0.0f64; 32 * 32];
        img[8 * 32 + 8] = 1.0;
        let img = Tensor::from_vec([1, 1, 32, 32], img).unwrap();
        let k = gaussian_kernel(5, 1.0).unwrap();
        let out = downsample(&img, &k).unwrap();
        for y in 0..16usize {
            for x in 0..16usize {
                let dy = 2 * y as isize - 8;
                let dx = 2 * x as isize - 8;
                let expected = if dy.abs() <= 2 && dx.abs() <= 2 {
                    k[((dy + 2) * 5 + dx + 2) as usize]
                } else {
                    0.0
                };
                assert!(
                    (out.at(0, 0, y, x) - expected).abs() < 1e-15,
                    "at ({y},{x})"
                );
            }
        }
    }

    #[test]
    fn pyramid_level_shapes_halve_coarsest_first() {
        let img = Tensor::<f32>::zeros([1, 3, 64, 48]);
        let pyr = build_pyramid(&img, 3).unwrap();
        assert_eq!(pyr.len(), 3);
        assert_eq!(pyr[0].shape(), [1, 3, 16, 12]);
        assert_eq!(pyr[1].shape(), [1, 3, 32, 24]);
        assert_eq!(pyr[2].shape(), [1, 3, 64, 48]);
    }

    #[test]
    fn pyramid_single_level_is_input() {
        let mut rng = Rng::seed_from_u64(3);
        let img = Tensor::<f32>::uniform([1, 3, 7, 9], 0.0, 1.0, &mut rng);
        let pyr = build_pyramid(&img, 1).unwrap();
        assert_eq!(pyr.len(), 1);
        assert_eq!(pyr[0].data(), img.data());
    }

    #[test]
    fn pyramid_of_constant_stays_constant() {
        let img = Tensor::<f64>::full([1, 1, 32, 32], 0.9);
        for level in build_pyramid(&img, 3).unwrap() {
            assert!(level.data().iter().all(|&v| (v - 0.9).abs() < 1e-9));
        }
    }

    #[test]
    fn pyramid_rejects_bad_levels_and_indivisible_dims() {
        let img = Tensor::<f32>::zeros([1, 3, 64, 64]);
        assert!(build_pyramid(&img, 0).is_err());
        let odd = Tensor::<f32>::zeros([1, 3, 50, 64]);
        assert!(build_pyramid(&odd, 3).is_err()); // 50 % 4 != 0
        assert!(build_pyramid(&odd, 2).is_ok());
    }

    fn variance(data: &[f64]) -> f64 {
        let n = data.len() as f64;
        let mean: f64 = data.iter().sum::<f64>() / n;
        data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
    }

    #[test]
    fn coarser_levels_never_gain_variance() {
        // smooth test image: noise blurred twice
        let mut rng = Rng::seed_from_u64(11);
        let noise = Tensor::<f64>::uniform([1, 1, 64, 64], 0.0, 1.0, &mut rng);
        let k = gaussian_kernel(5, 1.0).unwrap();
        let smooth = gaussian_blur(&gaussian_blur(&noise, &k).unwrap(), &k).unwrap();
        let pyr = build_pyramid(&smooth, 3).unwrap();
        for i in 0..pyr.len() - 1 {
            let coarse = variance(&pyr[i].to_f64_vec());
            let fine = variance(&pyr[i + 1].to_f64_vec());
            assert!(
                coarse <= fine + 1e-6,
                "level {i} variance {coarse} > finer {fine}"
            );
        }
    }

    #[test]
    fn sub_pyramid_matches_pyramid_of_downsample() {
        let mut rng = Rng::seed_from_u64(12);
        let img = Tensor::<f64>::uniform([1, 3, 32, 32], 0.0, 1.0, &mut rng);
        let k = gaussian_kernel(5, 1.0).unwrap();
        let full = build_pyramid(&img, 3).unwrap();
        let half = build_pyramid(&downsample(&img, &k).unwrap(), 2).unwrap();
        for (a, b) in full[..2].iter().zip(&half) {
            assert_eq!(a.shape(), b.shape());
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn laplacian_map_gradient_matches_finite_differences() {
        let x = Tensor::<f64>::uniform([1, 2, 5, 4], 0.0, 1.0, &mut Rng::seed_from_u64(4));
        let report = crate::tensor::grad_check(
            |tape, inp| {
                let l = laplacian_map(tape, &inp[0]);
                let sq = tape.mul(&l, &l)?;
                Ok(tape.mean(&sq))
            },
            &[x],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }
}
