//! Per-voxel channel softmax and the fused cross-entropy loss.

use super::{expect_rank5, finish, unify_tape};
use crate::element::Element;
use crate::error::CoreError;
use crate::tensor::{row_offset, Tensor};
use crate::Result;

/// Softmax over the channel axis, computed independently at every voxel with
/// the max-subtraction trick so large logits cannot overflow `exp`.
pub fn softmax_channels<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w, d] = expect_rank5(x, "softmax_channels")?;
    if c == 0 {
        return Err(CoreError::invalid("softmax_channels", "zero channels"));
    }
    let xd = x.data();
    let shape = x.shape();
    let mut data = vec![T::ZERO; xd.len()];
    // Row blocking: D-contiguous rows for all C channels share cache nicely.
    let mut mx = vec![T::ZERO; d];
    let mut sum = vec![T::ZERO; d];
    for ni in 0..n {
        for hi in 0..h {
            for wi in 0..w {
                let rows: Vec<usize> = (0..c).map(|ci| row_offset(shape, ni, ci, hi, wi)).collect();
                mx.copy_from_slice(&xd[rows[0]..rows[0] + d]);
                for &r in &rows[1..] {
                    for (m, &v) in mx.iter_mut().zip(&xd[r..r + d]) {
                        *m = (*m).max(v);
                    }
                }
                for s in sum.iter_mut() {
                    *s = T::ZERO;
                }
                for &r in &rows {
                    for di in 0..d {
                        let e = (xd[r + di] - mx[di]).exp();
                        data[r + di] = e;
                        sum[di] += e;
                    }
                }
                for &r in &rows {
                    for di in 0..d {
                        data[r + di] = data[r + di] / sum[di];
                    }
                }
            }
        }
    }
    let out = Tensor::from_vec(shape.to_vec(), data)?;

    let tape = unify_tape(&[x])?;
    Ok(finish(tape, out.clone(), || {
        let xn = x.node().expect("tracked input");
        let p = out.buffer();
        let shape = shape.to_vec();
        Box::new(move |gy| {
            // dx = p * (gy - sum_c p*gy), per voxel.
            let mut gx = vec![T::ZERO; p.len()];
            let mut dot = vec![T::ZERO; d];
            for ni in 0..n {
                for hi in 0..h {
                    for wi in 0..w {
                        let rows: Vec<usize> =
                            (0..c).map(|ci| row_offset(&shape, ni, ci, hi, wi)).collect();
                        for t in dot.iter_mut() {
                            *t = T::ZERO;
                        }
                        for &r in &rows {
                            for di in 0..d {
                                dot[di] += p[r + di] * gy[r + di];
                            }
                        }
                        for &r in &rows {
                            for di in 0..d {
                                gx[r + di] = p[r + di] * (gy[r + di] - dot[di]);
                            }
                        }
                    }
                }
            }
            vec![(xn, gx)]
        })
    }))
}

/// Mean voxelwise cross-entropy between `logits` and a one-hot `target`
/// (same shape, detached). Fused log-softmax keeps the backward pass the
/// numerically exact `(p - y) / voxel_count`.
pub fn cross_entropy_channels<T: Element>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, _c, h, w, d] = expect_rank5(logits, "cross_entropy_channels")?;
    if logits.shape() != target.shape() {
        return Err(CoreError::shape(
            "cross_entropy_channels",
            format!("{:?}", logits.shape()),
            format!("{:?}", target.shape()),
        ));
    }
    let p = softmax_channels(&logits.detach())?;
    let voxels = (n * h * w * d) as f64;
    let mut total = 0.0f64;
    for (pi, yi) in p.data().iter().zip(target.data()) {
        if yi.to_f64() != 0.0 {
            total -= yi.to_f64() * pi.to_f64().max(1e-30).ln();
        }
    }
    let out = Tensor::scalar(T::from_f64(total / voxels));

    let tape = unify_tape(&[logits])?;
    Ok(finish(tape, out, || {
        let ln = logits.node().expect("tracked logits");
        let pbuf = p.buffer();
        let ybuf = target.buffer();
        let inv = T::from_f64(1.0 / voxels);
        Box::new(move |gy| {
            let g = gy[0] * inv;
            let gx: Vec<T> = pbuf.iter().zip(ybuf.iter()).map(|(&pi, &yi)| (pi - yi) * g).collect();
            vec![(ln, gx)]
        })
    }))
}
