//! Convolutions in the cross-correlation convention (no kernel flip).
//!
//! Output extent per axis is `(in + 2*padding - k) / stride + 1`. Padding
//! is implicit zeros: taps landing outside the input contribute neither a
//! value nor a MAC, so the counter reports exactly the multiplies done.

use crate::error::{Error, Result};
use crate::tensor::{FlopCounter, Tensor};

fn out_extent(input: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::invalid("conv stride must be >= 1"));
    }
    if input + 2 * padding < k {
        return Err(Error::shape(format!(
            "kernel extent {k} exceeds padded input {input}+2*{padding}"
        )));
    }
    Ok((input + 2 * padding - k) / stride + 1)
}

/// `input [C x T]`, `kernels [F x C x kt]` -> `[F x T']`.
pub fn conv1d_temporal(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
    flops: &mut FlopCounter,
) -> Result<Tensor> {
    if input.rank() != 2 || kernels.rank() != 3 {
        return Err(Error::shape(format!(
            "conv1d_temporal expects input [C x T] and kernels [F x C x kt], got {:?} and {:?}",
            input.shape, kernels.shape
        )));
    }
    let (c, t) = (input.shape[0], input.shape[1]);
    let (f, kc, kt) = (kernels.shape[0], kernels.shape[1], kernels.shape[2]);
    if kc != c {
        return Err(Error::shape(format!(
            "conv1d_temporal channel mismatch: input {c}, kernels {kc}"
        )));
    }
    let ot = out_extent(t, kt, stride, padding)?;
    let mut out = vec![0.0; f * ot];
    let mut macs: u64 = 0;
    for fi in 0..f {
        for o in 0..ot {
            let mut acc = 0.0;
            for ci in 0..c {
                for a in 0..kt {
                    let ti = (o * stride + a) as isize - padding as isize;
                    if ti < 0 || ti >= t as isize {
                        continue;
                    }
                    acc += kernels.data[(fi * c + ci) * kt + a]
                        * input.data[ci * t + ti as usize];
                    macs += 1;
                }
            }
            out[fi * ot + o] = acc;
        }
    }
    flops.add(macs);
    let t = Tensor::from_vec(vec![f, ot], out)?;
    t.debug_check_finite("conv1d_temporal");
    Ok(t)
}

/// `input [C x H x W]`, `kernels [F x C x kh x kw]` -> `[F x H' x W']`.
pub fn conv2d(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
    flops: &mut FlopCounter,
) -> Result<Tensor> {
    if input.rank() != 3 || kernels.rank() != 4 {
        return Err(Error::shape(format!(
            "conv2d expects input [C x H x W] and kernels [F x C x kh x kw], got {:?} and {:?}",
            input.shape, kernels.shape
        )));
    }
    let (c, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
    let (f, kc, kh, kw) = (
        kernels.shape[0],
        kernels.shape[1],
        kernels.shape[2],
        kernels.shape[3],
    );
    if kc != c {
        return Err(Error::shape(format!(
            "conv2d channel mismatch: input {c}, kernels {kc}"
        )));
    }
    let oh = out_extent(h, kh, stride, padding)?;
    let ow = out_extent(w, kw, stride, padding)?;
    let mut out = vec![0.0; f * oh * ow];
    let mut macs: u64 = 0;
    for fi in 0..f {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ci in 0..c {
                    for dy in 0..kh {
                        let iy = (oy * stride + dy) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for dx in 0..kw {
                            let ix = (ox * stride + dx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += kernels.data[((fi * c + ci) * kh + dy) * kw + dx]
                                * input.data[(ci * h + iy as usize) * w + ix as usize];
                            macs += 1;
                        }
                    }
                }
                out[(fi * oh + oy) * ow + ox] = acc;
            }
        }
    }
    flops.add(macs);
    let t = Tensor::from_vec(vec![f, oh, ow], out)?;
    t.debug_check_finite("conv2d");
    Ok(t)
}

/// `input [C x T x H x W]`, `kernels [F x C x kt x kh x kw]` ->
/// `[F x T' x H' x W']`.
pub fn conv3d(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
    flops: &mut FlopCounter,
) -> Result<Tensor> {
    if input.rank() != 4 || kernels.rank() != 5 {
        return Err(Error::shape(format!(
            "conv3d expects input [C x T x H x W] and kernels [F x C x kt x kh x kw], got {:?} and {:?}",
            input.shape, kernels.shape
        )));
    }
    let (c, t, h, w) = (
        input.shape[0],
        input.shape[1],
        input.shape[2],
        input.shape[3],
    );
    let (f, kc, kt, kh, kw) = (
        kernels.shape[0],
        kernels.shape[1],
        kernels.shape[2],
        kernels.shape[3],
        kernels.shape[4],
    );
    if kc != c {
        return Err(Error::shape(format!(
            "conv3d channel mismatch: input {c}, kernels {kc}"
        )));
    }
    let ot = out_extent(t, kt, stride, padding)?;
    let oh = out_extent(h, kh, stride, padding)?;
    let ow = out_extent(w, kw, stride, padding)?;
    let mut out = vec![0.0; f * ot * oh * ow];
    let mut macs: u64 = 0;
    for fi in 0..f {
        for oz in 0..ot {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for da in 0..kt {
                            let iz = (oz * stride + da) as isize - padding as isize;
                            if iz < 0 || iz >= t as isize {
                                continue;
                            }
                            for dy in 0..kh {
                                let iy = (oy * stride + dy) as isize - padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for dx in 0..kw {
                                    let ix = (ox * stride + dx) as isize - padding as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    acc += kernels.data
                                        [(((fi * c + ci) * kt + da) * kh + dy) * kw + dx]
                                        * input.data
                                            [((ci * t + iz as usize) * h + iy as usize) * w
                                                + ix as usize];
                                    macs += 1;
                                }
                            }
                        }
                    }
                    out[((fi * ot + oz) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    flops.add(macs);
    let t = Tensor::from_vec(vec![f, ot, oh, ow], out)?;
    t.debug_check_finite("conv3d");
    Ok(t)
}
