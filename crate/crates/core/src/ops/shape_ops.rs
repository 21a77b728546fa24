//! Channel-axis concatenation/slicing and nearest-neighbour upsampling for
//! rank-5 `(N, C, H, W, D)` tensors.

use super::{expect_rank5, finish, unify_tape};
use crate::element::Element;
use crate::error::CoreError;
use crate::tensor::Tensor;
use crate::Result;

/// Concatenates along the channel axis. All inputs must agree on N, H, W, D.
pub fn concat_channels<T: Element>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if xs.is_empty() {
        return Err(CoreError::invalid("concat_channels", "empty input list"));
    }
    let first = expect_rank5(xs[0], "concat_channels")?;
    let mut total_c = 0usize;
    for x in xs {
        let s = expect_rank5(x, "concat_channels")?;
        if [s[0], s[2], s[3], s[4]] != [first[0], first[2], first[3], first[4]] {
            return Err(CoreError::shape(
                "concat_channels",
                format!("(N, _, H, W, D) = ({}, _, {}, {}, {})", first[0], first[2], first[3], first[4]),
                format!("{:?}", x.shape()),
            ));
        }
        total_c += s[1];
    }
    let [n, _, h, w, d] = first;
    let spatial = h * w * d;
    let mut data = vec![T::ZERO; n * total_c * spatial];
    // Per-sample blocks are contiguous: copy each input's (C_i * S) chunk.
    let out_block = total_c * spatial;
    for ni in 0..n {
        let mut dst = ni * out_block;
        for x in xs {
            let ci = x.shape()[1];
            let chunk = ci * spatial;
            let src = ni * chunk;
            data[dst..dst + chunk].copy_from_slice(&x.data()[src..src + chunk]);
            dst += chunk;
        }
    }
    let out = Tensor::from_vec(vec![n, total_c, h, w, d], data)?;

    let tape = unify_tape(xs)?;
    Ok(finish(tape, out, || {
        let nodes: Vec<_> = xs.iter().map(|x| x.node()).collect();
        let channels: Vec<usize> = xs.iter().map(|x| x.shape()[1]).collect();
        Box::new(move |gy| {
            let mut grads = Vec::new();
            let mut c_off = 0usize;
            for (i, &ci) in channels.iter().enumerate() {
                if let Some(node) = nodes[i] {
                    let chunk = ci * spatial;
                    let mut gx = vec![T::ZERO; n * chunk];
                    for ni in 0..n {
                        let src = ni * out_block + c_off * spatial;
                        gx[ni * chunk..(ni + 1) * chunk].copy_from_slice(&gy[src..src + chunk]);
                    }
                    grads.push((node, gx));
                }
                c_off += ci;
            }
            grads
        })
    }))
}

/// Copies channels `[lo, hi)` out of `x`.
pub fn slice_channels<T: Element>(x: &Tensor<T>, lo: usize, hi: usize) -> Result<Tensor<T>> {
    let [n, c, h, w, d] = expect_rank5(x, "slice_channels")?;
    if lo >= hi || hi > c {
        return Err(CoreError::invalid(
            "slice_channels",
            format!("range {lo}..{hi} invalid for {c} channels"),
        ));
    }
    let spatial = h * w * d;
    let keep = hi - lo;
    let mut data = vec![T::ZERO; n * keep * spatial];
    for ni in 0..n {
        let src = (ni * c + lo) * spatial;
        let dst = ni * keep * spatial;
        data[dst..dst + keep * spatial].copy_from_slice(&x.data()[src..src + keep * spatial]);
    }
    let out = Tensor::from_vec(vec![n, keep, h, w, d], data)?;

    let tape = unify_tape(&[x])?;
    Ok(finish(tape, out, || {
        let xn = x.node().expect("tracked input");
        Box::new(move |gy| {
            let mut gx = vec![T::ZERO; n * c * spatial];
            for ni in 0..n {
                let dst = (ni * c + lo) * spatial;
                let src = ni * keep * spatial;
                gx[dst..dst + keep * spatial].copy_from_slice(&gy[src..src + keep * spatial]);
            }
            vec![(xn, gx)]
        })
    }))
}

/// Integer-factor nearest-neighbour upsampling of all three spatial axes.
/// The backward pass sum-pools the gradient over each factor³ block.
pub fn nearest_upsample3d<T: Element>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(CoreError::invalid("nearest_upsample3d", "factor must be >= 1"));
    }
    let [n, c, h, w, d] = expect_rank5(x, "nearest_upsample3d")?;
    let (oh, ow, od) = (h * factor, w * factor, d * factor);
    let mut data = vec![T::ZERO; n * c * oh * ow * od];
    let xd = x.data();
    for nc in 0..n * c {
        let src_base = nc * h * w * d;
        let dst_base = nc * oh * ow * od;
        for hh in 0..oh {
            for ww in 0..ow {
                let src_row = src_base + ((hh / factor) * w + (ww / factor)) * d;
                let dst_row = dst_base + (hh * ow + ww) * od;
                for dd in 0..od {
                    data[dst_row + dd] = xd[src_row + dd / factor];
                }
            }
        }
    }
    let out = Tensor::from_vec(vec![n, c, oh, ow, od], data)?;

    let tape = unify_tape(&[x])?;
    Ok(finish(tape, out, || {
        let xn = x.node().expect("tracked input");
        Box::new(move |gy| {
            let mut gx = vec![T::ZERO; n * c * h * w * d];
            for nc in 0..n * c {
                let src_base = nc * h * w * d;
                let dst_base = nc * oh * ow * od;
                for hh in 0..oh {
                    for ww in 0..ow {
                        let src_row = src_base + ((hh / factor) * w + (ww / factor)) * d;
                        let dst_row = dst_base + (hh * ow + ww) * od;
                        for dd in 0..od {
                            gx[src_row + dd / factor] += gy[dst_row + dd];
                        }
                    }
                }
            }
            vec![(xn, gx)]
        })
    }))
}
