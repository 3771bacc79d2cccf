//! 2-D cross-correlation and max pooling over `[N×C×H×W]` tensors.
//!
//! Convolution goes through an im2col buffer so the inner product runs as a
//! dense matrix product; pooling records argmax indices for the backward
//! routing.

use crate::ops::matmul::{matmul_acc, matmul_bt_acc};
use crate::tensor::{fmt_detail, geometry_err, shape_err, OpError, Parameter, Tensor};
use alloc::vec;
use alloc::string::String;
use alloc::vec::Vec;

/// Output spatial extent for one axis, or an error when the geometry does
/// not divide evenly.
fn out_extent(op: &'static str, input: usize, k: usize, stride: usize, pad: usize) -> Result<usize, OpError> {
    let padded = input + 2 * pad;
    if k > padded {
        return Err(geometry_err(
            op,
            fmt_detail!("kernel {k} exceeds padded input extent {padded}"),
        ));
    }
    let span = padded - k;
    if span % stride != 0 {
        return Err(geometry_err(
            op,
            fmt_detail!("(({input} + 2*{pad}) - {k}) not divisible by stride {stride}"),
        ));
    }
    Ok(span / stride + 1)
}

/// Cached forward state needed by [`conv2d_backward`].
pub struct Conv2dCache {
    cols: Vec<Vec<f64>>, // per-sample im2col buffers, [C·k·k × H'·W']
    in_shape: [usize; 4],
    out_hw: (usize, usize),
    stride: usize,
    pad: usize,
}

/// `x: [n×c×h×w]`, `kernels: [f×c×k×k]`, `bias: [f]` -> `[n×f×h'×w']`.
pub fn conv2d(
    x: &Tensor,
    kernels: &Parameter,
    bias: &Parameter,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Conv2dCache), OpError> {
    let &[n, c, h, w] = x.shape() else {
        return Err(shape_err("conv2d", x.shape(), kernels.shape()));
    };
    let &[f, kc, kh, kw] = kernels.shape() else {
        return Err(shape_err("conv2d", x.shape(), kernels.shape()));
    };
    if kc != c || kh != kw || bias.shape() != [f] {
        return Err(shape_err("conv2d", x.shape(), kernels.shape()));
    }
    let k = kh;
    let oh = out_extent("conv2d", h, k, stride, pad)?;
    let ow = out_extent("conv2d", w, k, stride, pad)?;

    let q = c * k * k;
    let p = oh * ow;
    let mut out = Tensor::zeros(&[n, f, oh, ow]);
    let mut cols = Vec::with_capacity(n);
    for s in 0..n {
        let col = im2col(&x.data()[s * c * h * w..], c, h, w, k, stride, pad, oh, ow);
        let out_s = &mut out.data_mut()[s * f * p..(s + 1) * f * p];
        for (fi, row) in out_s.chunks_exact_mut(p).enumerate() {
            row.iter_mut().for_each(|v| *v = bias.value.data()[fi]);
        }
        matmul_acc(kernels.value.data(), &col, out_s, f, q, p);
        cols.push(col);
    }
    Ok((
        out,
        Conv2dCache {
            cols,
            in_shape: [n, c, h, w],
            out_hw: (oh, ow),
            stride,
            pad,
        },
    ))
}

/// Accumulates kernel/bias grads and returns the input gradient.
pub fn conv2d_backward(
    cache: &Conv2dCache,
    kernels: &mut Parameter,
    bias: &mut Parameter,
    dy: &Tensor,
) -> Tensor {
    let [n, c, h, w] = cache.in_shape;
    let (oh, ow) = cache.out_hw;
    let &[f, _, k, _] = kernels.shape() else { panic!("conv2d_backward: bad kernel rank") };
    assert_eq!(dy.shape(), &[n, f, oh, ow]);
    let q = c * k * k;
    let p = oh * ow;

    let mut dx = Tensor::zeros(&[n, c, h, w]);
    let mut dcol = vec![0.0; q * p];
    for s in 0..n {
        let dy_s = &dy.data()[s * f * p..(s + 1) * f * p];
        // dK += dy_s · colᵀ
        matmul_bt_acc(dy_s, &cache.cols[s], kernels.value.grad_mut(), f, p, q);
        // db += row sums of dy_s
        for (fi, row) in dy_s.chunks_exact(p).enumerate() {
            bias.value.grad_mut()[fi] += row.iter().sum::<f64>();
        }
        // dcol = Kᵀ · dy_s, scattered back to dx
        dcol.iter_mut().for_each(|v| *v = 0.0);
        for (fi, dy_row) in dy_s.chunks_exact(p).enumerate() {
            let k_row = &kernels.value.data()[fi * q..(fi + 1) * q];
            for (qi, &kv) in k_row.iter().enumerate() {
                if kv == 0.0 {
                    continue;
                }
                let dcol_row = &mut dcol[qi * p..(qi + 1) * p];
                for (d, &g) in dcol_row.iter_mut().zip(dy_row.iter()) {
                    *d += kv * g;
                }
            }
        }
        col2im_acc(
            &dcol,
            &mut dx.data_mut()[s * c * h * w..(s + 1) * c * h * w],
            c,
            h,
            w,
            k,
            cache.stride,
            cache.pad,
            oh,
            ow,
        );
    }
    dx
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    let p = oh * ow;
    let mut col = vec![0.0; c * k * k * p];
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * p..((ci * k + ky) * k + kx + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        row[oy * ow + ox] = plane[iy as usize * w + ix as usize];
                    }
                }
            }
        }
    }
    col
}

#[allow(clippy::too_many_arguments)]
fn col2im_acc(
    col: &[f64],
    x: &mut [f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) {
    let p = oh * ow;
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * p..((ci * k + ky) * k + kx + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        plane[iy as usize * w + ix as usize] += row[oy * ow + ox];
                    }
                }
            }
        }
    }
}

/// Cached argmax indices from [`maxpool2d`].
pub struct MaxPoolCache {
    argmax: Vec<usize>, // flat input index per output element
    in_shape: [usize; 4],
}

/// Per-window maximum; ties go to the lowest flat index.
pub fn maxpool2d(x: &Tensor, window: usize, stride: usize) -> Result<(Tensor, MaxPoolCache), OpError> {
    let &[n, c, h, w] = x.shape() else {
        return Err(geometry_err("maxpool2d", fmt_detail!("rank-4 input required, got {:?}", x.shape())));
    };
    if window == 0 || stride == 0 {
        return Err(geometry_err("maxpool2d", String::from("window/stride must be positive")));
    }
    let oh = out_extent("maxpool2d", h, window, stride, 0)?;
    let ow = out_extent("maxpool2d", w, window, stride, 0)?;

    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let data = x.data();
    for s in 0..n {
        for ci in 0..c {
            let plane_base = (s * c + ci) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for ky in 0..window {
                        for kx in 0..window {
                            let idx = plane_base + (oy * stride + ky) * w + (ox * stride + kx);
                            // strict > keeps the lowest flat index on ties
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ((s * c + ci) * oh + oy) * ow + ox;
                    out.data_mut()[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    Ok((
        out,
        MaxPoolCache {
            argmax,
            in_shape: [n, c, h, w],
        },
    ))
}

/// Routes each output gradient to its recorded argmax cell.
pub fn maxpool2d_backward(cache: &MaxPoolCache, dy: &Tensor) -> Tensor {
    let [n, c, h, w] = cache.in_shape;
    let mut dx = Tensor::zeros(&[n, c, h, w]);
    for (o, &idx) in cache.argmax.iter().enumerate() {
        dx.data_mut()[idx] += dy.data()[o];
    }
    dx
}
