//! Reference implementations shared by the oracle and acceptance suites.
//!
//! Everything here is written the slow, obvious way — nested loops, two-pass
//! statistics, scalar recurrences — precisely so it shares no code or
//! algorithmic shortcuts with the library. Agreement between the two is the
//! evidence.

#![allow(dead_code)]

use mspfn::tensor::{Shape, Tensor};

/// Plain 7-loop cross-correlation, f64 accumulation.
/// x [N,Cin,H,W], w [Cout,Cin,Kh,Kw], bias [Cout] broadcast per channel.
pub fn conv2d_reference(
    x: &[f64],
    xs: Shape,
    w: &[f64],
    ws: Shape,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, Shape) {
    let [n, cin, h, wid] = xs;
    let [cout, wcin, kh, kw] = ws;
    assert_eq!(cin, wcin);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wid + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0f64; n * cout * oh * ow];
    for b in 0..n {
        for oc in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |bv| bv[oc]);
                    for ic in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wid as isize {
                                    continue;
                                }
                                let xi = ((b * cin + ic) * h + iy as usize) * wid + ix as usize;
                                let wi = ((oc * cin + ic) * kh + ky) * kw + kx;
                                acc += x[xi] * w[wi];
                            }
                        }
                    }
                    out[((b * cout + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, [n, cout, oh, ow])
}

/// Transposed convolution as an explicit scatter-add: every input element
/// sprays its kernel into the (strided) output, then padding is cropped.
/// x [N,Cin,H,W], w [Cin,Cout,Kh,Kw].
pub fn convt2d_reference(
    x: &[f64],
    xs: Shape,
    w: &[f64],
    ws: Shape,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, Shape) {
    let [n, cin, h, wid] = xs;
    let [wcin, cout, kh, kw] = ws;
    assert_eq!(cin, wcin);
    let oh = (h - 1) * stride + kh - 2 * pad;
    let ow = (wid - 1) * stride + kw - 2 * pad;
    let mut out = vec![0.0f64; n * cout * oh * ow];
    for b in 0..n {
        for oc in 0..cout {
            if let Some(bv) = bias {
                for v in &mut out[(b * cout + oc) * oh * ow..(b * cout + oc + 1) * oh * ow] {
                    *v += bv[oc];
                }
            }
        }
        for ic in 0..cin {
            for iy in 0..h {
                for ix in 0..wid {
                    let xv = x[((b * cin + ic) * h + iy) * wid + ix];
                    for oc in 0..cout {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let oy = (iy * stride + ky) as isize - pad as isize;
                                let ox = (ix * stride + kx) as isize - pad as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                let oi =
                                    ((b * cout + oc) * oh + oy as usize) * ow + ox as usize;
                                let wi = ((ic * cout + oc) * kh + ky) * kw + kx;
                                out[oi] += xv * w[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    (out, [n, cout, oh, ow])
}

/// Naive single-scale SSIM: 11×11 Gaussian window (σ 1.5), K1 0.01, K2 0.03,
/// peak 1.0, every fully-inside window, averaged over windows/channels/batch.
/// Statistics are two-pass (explicit mean, then explicit centered moments),
/// unlike the library's one-pass accumulation.
pub fn ssim_reference<T: Copy + Into<f64>>(a: &[T], b: &[T], shape: Shape) -> f64 {
    const WIN: usize = 11;
    const SIGMA: f64 = 1.5;
    let [n, c, h, w] = shape;
    assert!(h >= WIN && w >= WIN);

    let r = (WIN / 2) as isize;
    let mut k1: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * SIGMA * SIGMA)).exp())
        .collect();
    let s: f64 = k1.iter().sum();
    k1.iter_mut().for_each(|v| *v /= s);

    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let mut total = 0.0;
    let mut count = 0usize;
    for plane in 0..n * c {
        let pa = &a[plane * h * w..(plane + 1) * h * w];
        let pb = &b[plane * h * w..(plane + 1) * h * w];
        for y in 0..=h - WIN {
            for x in 0..=w - WIN {
                // pass 1: weighted means
                let (mut ma, mut mb) = (0.0f64, 0.0f64);
                for ky in 0..WIN {
                    for kx in 0..WIN {
                        let wgt = k1[ky] * k1[kx];
                        ma += wgt * pa[(y + ky) * w + x + kx].into();
                        mb += wgt * pb[(y + ky) * w + x + kx].into();
                    }
                }
                // pass 2: weighted centered second moments
                let (mut va, mut vb, mut cov) = (0.0f64, 0.0f64, 0.0f64);
                for ky in 0..WIN {
                    for kx in 0..WIN {
                        let wgt = k1[ky] * k1[kx];
                        let da = pa[(y + ky) * w + x + kx].into() - ma;
                        let db = pb[(y + ky) * w + x + kx].into() - mb;
                        va += wgt * da * da;
                        vb += wgt * db * db;
                        cov += wgt * da * db;
                    }
                }
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Scalar convolutional-LSTM step: gates via the loop convolution reference,
/// state update elementwise in f64. Weight layout matches the library's
/// parameter schema (`w_x*`/`w_h*` [C,C,k,k], biases on the input conv).
pub struct LstmRefParams<'a> {
    /// (w_x, w_h, b) for gates i, f, o, g in that order
    pub gates: [(&'a [f64], &'a [f64], &'a [f64]); 4],
    pub weight_shape: Shape,
}

pub fn conv_lstm_reference(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    shape: Shape,
    p: &LstmRefParams,
) -> (Vec<f64>, Vec<f64>) {
    let pad = p.weight_shape[2] / 2;
    let pre = |wx: &[f64], wh: &[f64], b: &[f64]| -> Vec<f64> {
        let (from_x, _) = conv2d_reference(x, shape, wx, p.weight_shape, Some(b), 1, pad);
        let (from_h, _) = conv2d_reference(h_prev, shape, wh, p.weight_shape, None, 1, pad);
        from_x.iter().zip(&from_h).map(|(a, b)| a + b).collect()
    };
    let [(wxi, whi, bi), (wxf, whf, bf), (wxo, who, bo), (wxg, whg, bg)] = p.gates;
    let i: Vec<f64> = pre(wxi, whi, bi).iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = pre(wxf, whf, bf).iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<f64> = pre(wxo, who, bo).iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = pre(wxg, whg, bg).iter().map(|&v| v.tanh()).collect();
    let c: Vec<f64> = (0..x.len())
        .map(|j| f[j] * c_prev[j] + i[j] * g[j])
        .collect();
    let h: Vec<f64> = (0..x.len()).map(|j| o[j] * c[j].tanh()).collect();
    (h, c)
}

/// Max |a−b| over two equal-length slices.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Flat f64 copy of a tensor's data.
pub fn to_f64_vec(t: &Tensor<f64>) -> Vec<f64> {
    t.data().to_vec()
}

/// ⟨a, b⟩ in f64.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Seeded uniform test tensor in [lo, hi).
pub fn seeded(shape: Shape, lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut rng = mspfn::rng::Rng::seed_from_u64(seed);
    Tensor::uniform(shape, lo, hi, &mut rng)
}
