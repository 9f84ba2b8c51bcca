//! Layer kernels shared by the `f32` runtime and the `f64` trainer. Each
//! kernel returns the number of multiply-accumulates it executed.

use num_traits::Float;

use crate::netspec::{Conv2dParams, PoolParams};

/// `y = W x + b` with `W` stored `[out, in]`.
pub fn dense<F: Float>(w: &[F], b: &[F], x: &[F], out: &mut Vec<F>) -> u64 {
    let n_in = x.len();
    let n_out = b.len();
    debug_assert_eq!(w.len(), n_in * n_out);
    out.clear();
    out.reserve(n_out);
    let mut macs = 0u64;
    for (row, &bias) in w.chunks_exact(n_in).zip(b) {
        let mut acc = bias;
        for (&wi, &xi) in row.iter().zip(x) {
            acc = acc + wi * xi;
        }
        macs += n_in as u64;
        out.push(acc);
    }
    macs
}

/// Cross-correlation over a `[C, H, W]` input with zero padding. Padded taps
/// are executed (and counted) like interior ones.
pub fn conv2d<F: Float>(
    w: &[F],
    b: &[F],
    x: &[F],
    in_shape: [usize; 3],
    p: &Conv2dParams,
    out: &mut Vec<F>,
) -> (u64, [usize; 3]) {
    let [c, h, wd] = in_shape;
    let oh = (h + 2 * p.padding - p.kernel_h) / p.stride + 1;
    let ow = (wd + 2 * p.padding - p.kernel_w) / p.stride + 1;
    out.clear();
    out.reserve(p.out_channels * oh * ow);
    let mut macs = 0u64;
    let pad = p.padding as isize;
    for co in 0..p.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b[co];
                for ci in 0..c {
                    for ky in 0..p.kernel_h {
                        let iy = (oy * p.stride + ky) as isize - pad;
                        for kx in 0..p.kernel_w {
                            let ix = (ox * p.stride + kx) as isize - pad;
                            let v = if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                x[(ci * h + iy as usize) * wd + ix as usize]
                            } else {
                                F::zero()
                            };
                            let wi = w[((co * c + ci) * p.kernel_h + ky) * p.kernel_w + kx];
                            acc = acc + wi * v;
                        }
                    }
                }
                macs += (c * p.kernel_h * p.kernel_w) as u64;
                out.push(acc);
            }
        }
    }
    (macs, [p.out_channels, oh, ow])
}

/// Views a flat `[F]` activation as `[1, 1, F]` with a 1-wide window height.
pub fn pool_geometry(shape: &[usize], p: &PoolParams) -> ([usize; 3], (usize, usize), (usize, usize)) {
    match shape {
        [f] => ([1, 1, *f], (1, p.window), (1, p.stride)),
        [c, h, w] => ([*c, *h, *w], (p.window, p.window), (p.stride, p.stride)),
        _ => unreachable!("pool input validated by shape inference"),
    }
}

/// Window reduce. For max pooling `argmax` receives the flat input index of
/// each selected element (first maximum wins).
pub fn pool<F: Float>(
    x: &[F],
    dims: [usize; 3],
    window: (usize, usize),
    stride: (usize, usize),
    max: bool,
    out: &mut Vec<F>,
    mut argmax: Option<&mut Vec<usize>>,
) {
    let [c, h, w] = dims;
    let oh = (h - window.0) / stride.0 + 1;
    let ow = (w - window.1) / stride.1 + 1;
    out.clear();
    if let Some(a) = argmax.as_deref_mut() {
        a.clear();
    }
    let count = F::from(window.0 * window.1).expect("window size fits");
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = F::neg_infinity();
                let mut best_idx = 0;
                let mut sum = F::zero();
                for ky in 0..window.0 {
                    for kx in 0..window.1 {
                        let idx = (ch * h + oy * stride.0 + ky) * w + ox * stride.1 + kx;
                        let v = x[idx];
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                        sum = sum + v;
                    }
                }
                if max {
                    out.push(best);
                    if let Some(a) = argmax.as_deref_mut() {
                        a.push(best_idx);
                    }
                } else {
                    out.push(sum / count);
                }
            }
        }
    }
}

pub fn global_avg_pool<F: Float>(x: &[F], channels: usize, out: &mut Vec<F>) {
    let per = x.len() / channels;
    let n = F::from(per).expect("plane size fits");
    out.clear();
    for plane in x.chunks_exact(per) {
        let s = plane.iter().fold(F::zero(), |a, &v| a + v);
        out.push(s / n);
    }
}

pub fn relu<F: Float>(x: &[F], out: &mut Vec<F>) {
    out.clear();
    out.extend(x.iter().map(|&v| if v > F::zero() { v } else { F::zero() }));
}

/// Exp-normalize with max subtraction.
pub fn softmax<F: Float>(x: &[F], out: &mut Vec<F>) {
    let m = x.iter().fold(F::neg_infinity(), |a, &v| a.max(v));
    out.clear();
    out.extend(x.iter().map(|&v| (v - m).exp()));
    let s = out.iter().fold(F::zero(), |a, &v| a + v);
    for v in out.iter_mut() {
        *v = *v / s;
    }
}
