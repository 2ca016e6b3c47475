//! Convolution kernels: im2col/col2im + GEMM, forward and backward.
//!
//! Convolution here is cross-correlation (no kernel flip), zero padding.
//! Weight layouts: conv2d [Cout, Cin, kh, kw]; conv2d_transpose
//! [Cin, Cout, kh, kw]. The transpose op is the exact adjoint of conv2d,
//! which the oracle tests pin down via <conv(x,w), y> == <x, convT(y,w)>.
//!
//! Determinism: every output element is reduced by exactly one GEMM call
//! whose k-order is fixed, and the row partition below depends only on the
//! matrix size — never on thread count — so results are bit-identical
//! across runs and across MSPFN_THREADS settings.

use rayon::prelude::*;

use super::{Element, Shape};

/// Output height/width of conv2d: floor((H + 2p - k) / s) + 1.
pub fn conv2d_out_dim(h: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = h + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Output height/width of conv2d_transpose: (H - 1) * s + k - 2p.
pub fn convt2d_out_dim(h: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if h == 0 || stride == 0 {
        return None;
    }
    let grown = (h - 1) * stride + k;
    if grown <= 2 * pad {
        return None;
    }
    Some(grown - 2 * pad)
}

/// Rows-of-C parallel GEMM with a thread-count-independent partition.
/// a is row-major contiguous (m x k); b is strided; c is row-major
/// contiguous (m x n). Small matrices stay in one call so single-core runs
/// pay no packing overhead.
#[allow(clippy::too_many_arguments)]
pub fn gemm_rows_parallel<E: Element>(
    m: usize,
    k: usize,
    n: usize,
    a: &[E],
    b: &[E],
    rsb: isize,
    csb: isize,
    beta: E,
    c: &mut [E],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    const ROWS_PER_CHUNK: usize = 32;
    let bp = b.as_ptr();
    if m < 2 * ROWS_PER_CHUNK {
        unsafe {
            E::gemm(
                m, k, n, E::one(),
                a.as_ptr(), k as isize, 1,
                bp, rsb, csb,
                beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
        return;
    }
    // Fixed-size row blocks; rayon may run them on any thread, the result
    // is the same bytes either way.
    let bq = PtrSend(bp);
    c.par_chunks_mut(ROWS_PER_CHUNK * n)
        .zip(a.par_chunks(ROWS_PER_CHUNK * k))
        .for_each(|(c_chunk, a_chunk)| {
            let rows = c_chunk.len() / n;
            let b = &bq;
            unsafe {
                E::gemm(
                    rows, k, n, E::one(),
                    a_chunk.as_ptr(), k as isize, 1,
                    b.0, rsb, csb,
                    beta,
                    c_chunk.as_mut_ptr(), n as isize, 1,
                );
            }
        });
}

// Shared read-only matrix pointer for the row-parallel GEMM.
struct PtrSend<E>(*const E);
unsafe impl<E> Sync for PtrSend<E> {}

/// Scatter one image's patch matrix layout:
/// cols[(ci*kh + ky)*kw + kx][oy*wo + ox] = x[ci][oy*s + ky - p][ox*s + kx - p]
/// (zero when the source index is out of bounds).
#[allow(clippy::too_many_arguments)]
fn im2col<E: Element>(
    x: &[E], // one image, [Cin, H, W]
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [E], // [cin*kh*kw, ho*wo]
) {
    let s = ho * wo;
    debug_assert_eq!(cols.len(), cin * kh * kw * s);
    for ci in 0..cin {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &mut cols[((ci * kh + ky) * kw + kx) * s..][..s];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = E::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            E::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: accumulate patch-matrix values back into the image.
#[allow(clippy::too_many_arguments)]
fn col2im_add<E: Element>(
    cols: &[E], // [cin*kh*kw, ho*wo]
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    x: &mut [E], // one image, [Cin, H, W]
) {
    let s = ho * wo;
    for ci in 0..cin {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &cols[((ci * kh + ky) * kw + kx) * s..][..s];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &row[oy * wo..(oy + 1) * wo];
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

/// conv2d forward. x [N,Cin,H,W], w [Cout,Cin,kh,kw], bias len Cout.
/// Returns output [N,Cout,Ho,Wo] flat.
pub fn conv2d_forward<E: Element>(
    x: &[E],
    xshape: Shape,
    w: &[E],
    wshape: Shape,
    bias: Option<&[E]>,
    stride: usize,
    pad: usize,
) -> (Vec<E>, Shape) {
    let [n, cin, h, ww] = xshape;
    let [cout, wcin, kh, kw] = wshape;
    debug_assert_eq!(cin, wcin);
    let ho = conv2d_out_dim(h, kh, stride, pad).expect("validated by caller");
    let wo = conv2d_out_dim(ww, kw, stride, pad).expect("validated by caller");
    let k = cin * kh * kw;
    let s = ho * wo;
    let mut out = vec![E::zero(); n * cout * s];

    out.par_chunks_mut(cout * s)
        .enumerate()
        .for_each(|(ni, out_n)| {
            let mut cols = vec![E::zero(); k * s];
            im2col(
                &x[ni * cin * h * ww..(ni + 1) * cin * h * ww],
                cin, h, ww, kh, kw, stride, pad, ho, wo, &mut cols,
            );
            gemm_rows_parallel(cout, k, s, w, &cols, s as isize, 1, E::zero(), out_n);
            if let Some(b) = bias {
                for co in 0..cout {
                    let bv = b[co];
                    for v in &mut out_n[co * s..(co + 1) * s] {
                        *v = *v + bv;
                    }
                }
            }
        });
    (out, [n, cout, ho, wo])
}

/// Gradient of conv2d w.r.t. its input: scatter Wᵀ·gout back through im2col.
pub fn conv2d_backward_input<E: Element>(
    gout: &[E],
    goshape: Shape, // [N,Cout,Ho,Wo]
    w: &[E],
    wshape: Shape,
    xshape: Shape,
    stride: usize,
    pad: usize,
) -> Vec<E> {
    let [n, cout, ho, wo] = goshape;
    let [_, cin, kh, kw] = wshape;
    let [_, _, h, ww] = xshape;
    let k = cin * kh * kw;
    let s = ho * wo;
    let mut gx = vec![E::zero(); n * cin * h * ww];
    gx.par_chunks_mut(cin * h * ww)
        .enumerate()
        .for_each(|(ni, gx_n)| {
            let gout_n = &gout[ni * cout * s..(ni + 1) * cout * s];
            // colsg (K x S) = Wᵀ (K x Cout) · gout_n (Cout x S)
            let mut colsg = vec![E::zero(); k * s];
            unsafe {
                E::gemm(
                    k, cout, s, E::one(),
                    w.as_ptr(), 1, k as isize, // Wᵀ via swapped strides
                    gout_n.as_ptr(), s as isize, 1,
                    E::zero(),
                    colsg.as_mut_ptr(), s as isize, 1,
                );
            }
            col2im_add(&colsg, cin, h, ww, kh, kw, stride, pad, ho, wo, gx_n);
        });
    gx
}

/// Gradient of conv2d w.r.t. its weight: gw = Σ_n gout_n · cols_nᵀ.
/// The batch reduction is sequential (fixed order).
pub fn conv2d_backward_weight<E: Element>(
    gout: &[E],
    goshape: Shape,
    x: &[E],
    xshape: Shape,
    wshape: Shape,
    stride: usize,
    pad: usize,
) -> Vec<E> {
    let [n, cout, ho, wo] = goshape;
    let [_, cin, h, ww] = xshape;
    let [_, _, kh, kw] = wshape;
    let k = cin * kh * kw;
    let s = ho * wo;
    let mut gw = vec![E::zero(); cout * k];
    let mut cols = vec![E::zero(); k * s];
    for ni in 0..n {
        im2col(
            &x[ni * cin * h * ww..(ni + 1) * cin * h * ww],
            cin, h, ww, kh, kw, stride, pad, ho, wo, &mut cols,
        );
        let gout_n = &gout[ni * cout * s..(ni + 1) * cout * s];
        unsafe {
            E::gemm(
                cout, s, k, E::one(),
                gout_n.as_ptr(), s as isize, 1,
                cols.as_ptr(), 1, s as isize, // colsᵀ via swapped strides
                E::one(),                      // accumulate over the batch
                gw.as_mut_ptr(), k as isize, 1,
            );
        }
    }
    gw
}

/// Per-channel sum of gout over batch and space, accumulated in f64.
pub fn sum_over_nhw<E: Element>(gout: &[E], goshape: Shape) -> Vec<E> {
    let [n, c, h, w] = goshape;
    let s = h * w;
    let mut acc = vec![0.0f64; c];
    for ni in 0..n {
        for ci in 0..c {
            let plane = &gout[(ni * c + ci) * s..][..s];
            let mut t = 0.0f64;
            for v in plane {
                t += v.as_f64();
            }
            acc[ci] += t;
        }
    }
    acc.into_iter().map(E::from_f64).collect()
}

/// conv2d_transpose forward. x [N,Cin,H,W], w [Cin,Cout,kh,kw].
/// out[n,co,y,x] = Σ_{ci,ky,kx} x[n,ci,h,w]·w[ci,co,ky,kx]
/// where y = h·s - p + ky, x = w·s - p + kx — the adjoint of conv2d.
pub fn convt2d_forward<E: Element>(
    x: &[E],
    xshape: Shape,
    w: &[E],
    wshape: Shape,
    bias: Option<&[E]>,
    stride: usize,
    pad: usize,
) -> (Vec<E>, Shape) {
    let [n, cin, h, ww] = xshape;
    let [_, cout, kh, kw] = wshape;
    let ho = convt2d_out_dim(h, kh, stride, pad).expect("validated by caller");
    let wo = convt2d_out_dim(ww, kw, stride, pad).expect("validated by caller");
    let kprime = cout * kh * kw;
    let s_in = h * ww;
    let mut out = vec![E::zero(); n * cout * ho * wo];
    out.par_chunks_mut(cout * ho * wo)
        .enumerate()
        .for_each(|(ni, out_n)| {
            let x_n = &x[ni * cin * s_in..(ni + 1) * cin * s_in];
            // tmp (K' x S_in) = Wᵀ (K' x Cin) · x_n (Cin x S_in),
            // where W is viewed as (Cin x K').
            let mut tmp = vec![E::zero(); kprime * s_in];
            unsafe {
                E::gemm(
                    kprime, cin, s_in, E::one(),
                    w.as_ptr(), 1, kprime as isize,
                    x_n.as_ptr(), s_in as isize, 1,
                    E::zero(),
                    tmp.as_mut_ptr(), s_in as isize, 1,
                );
            }
            // Scatter: tmp rows are (co,ky,kx), columns walk input positions.
            // This is col2im with the conv geometry read backwards: the
            // "patch matrix" indexes the *output* image.
            col2im_add(&tmp, cout, ho, wo, kh, kw, stride, pad, h, ww, out_n);
            if let Some(b) = bias {
                let so = ho * wo;
                for co in 0..cout {
                    let bv = b[co];
                    for v in &mut out_n[co * so..(co + 1) * so] {
                        *v = *v + bv;
                    }
                }
            }
        });
    (out, [n, cout, ho, wo])
}

/// Gradient of conv2d_transpose w.r.t. its input = conv2d of gout with the
/// same weight bytes reinterpreted as [Cout'=Cin, Cin'=Cout, kh, kw].
pub fn convt2d_backward_input<E: Element>(
    gout: &[E],
    goshape: Shape,
    w: &[E],
    wshape: Shape, // [Cin,Cout,kh,kw]
    xshape: Shape,
    stride: usize,
    pad: usize,
) -> Vec<E> {
    let [cin, cout, kh, kw] = wshape;
    let (gx, got_shape) =
        conv2d_forward(gout, goshape, w, [cin, cout, kh, kw], None, stride, pad);
    debug_assert_eq!(got_shape, xshape);
    gx
}

/// Gradient of conv2d_transpose w.r.t. its weight:
/// gw[ci,co,ky,kx] = Σ_n x_n (Cin x S_in) · cols(gout_n)ᵀ (S_in x K').
pub fn convt2d_backward_weight<E: Element>(
    gout: &[E],
    goshape: Shape,
    x: &[E],
    xshape: Shape,
    wshape: Shape,
    stride: usize,
    pad: usize,
) -> Vec<E> {
    let [n, cin, h, ww] = xshape;
    let [_, cout, ho, wo] = goshape;
    let [_, _, kh, kw] = wshape;
    let kprime = cout * kh * kw;
    let s_in = h * ww;
    let mut gw = vec![E::zero(); cin * kprime];
    let mut cols = vec![E::zero(); kprime * s_in];
    for ni in 0..n {
        // Patches of the *output-side* gradient, gathered with the conv
        // geometry that maps input positions to output windows.
        im2col(
            &gout[ni * cout * ho * wo..(ni + 1) * cout * ho * wo],
            cout, ho, wo, kh, kw, stride, pad, h, ww, &mut cols,
        );
        let x_n = &x[ni * cin * s_in..(ni + 1) * cin * s_in];
        unsafe {
            E::gemm(
                cin, s_in, kprime, E::one(),
                x_n.as_ptr(), s_in as isize, 1,
                cols.as_ptr(), 1, s_in as isize,
                E::one(),
                gw.as_mut_ptr(), kprime as isize, 1,
            );
        }
    }
    gw
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn out_dim_formulas() {
        assert_eq!(conv2d_out_dim(8, 3, 1, 1), Some(8));
        assert_eq!(conv2d_out_dim(8, 3, 2, 1), Some(4));
        assert_eq!(conv2d_out_dim(2, 3, 1, 0), None); // kernel larger than input
        assert_eq!(convt2d_out_dim(4, 2, 2, 0), Some(8));
        assert_eq!(convt2d_out_dim(2, 2, 2, 0), Some(4));
        assert_eq!(convt2d_out_dim(5, 3, 1, 1), Some(5));
    }

    #[test]
    fn row_partitioned_gemm_matches_single_call_bitwise() {
        // The deterministic-parallelism story leans on row blocks of a GEMM
        // reducing k in the same order as one big call. Pin that down.
        let mut rng = Rng::seed_from_u64(11);
        for &(m, k, n) in &[(96usize, 37usize, 55usize), (128, 288, 64), (70, 9, 130)] {
            let a: Vec<f32> = (0..m * k).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
            let b: Vec<f32> = (0..k * n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
            let mut c1 = vec![0.0f32; m * n];
            let mut c2 = vec![0.0f32; m * n];
            unsafe {
                f32::gemm(
                    m, k, n, 1.0,
                    a.as_ptr(), k as isize, 1,
                    b.as_ptr(), n as isize, 1,
                    0.0,
                    c1.as_mut_ptr(), n as isize, 1,
                );
            }
            gemm_rows_parallel(m, k, n, &a, &b, n as isize, 1, 0.0, &mut c2);
            assert_eq!(c1, c2, "m={m} k={k} n={n}");
        }
    }

    #[test]
    fn im2col_col2im_adjoint_on_small_case() {
        // <im2col(x), y> == <x, col2im(y)> for random y: the pair is adjoint.
        let (cin, h, w, kh, kw, stride, pad) = (2usize, 5usize, 4usize, 3usize, 3usize, 2usize, 1usize);
        let ho = conv2d_out_dim(h, kh, stride, pad).unwrap();
        let wo = conv2d_out_dim(w, kw, stride, pad).unwrap();
        let k = cin * kh * kw;
        let s = ho * wo;
        let mut rng = Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..cin * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let y: Vec<f64> = (0..k * s).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut cols = vec![0.0f64; k * s];
        im2col(&x, cin, h, w, kh, kw, stride, pad, ho, wo, &mut cols);
        let mut back = vec![0.0f64; cin * h * w];
        col2im_add(&y, cin, h, w, kh, kw, stride, pad, ho, wo, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }
}
