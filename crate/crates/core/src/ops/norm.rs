//! Normalization layers.
//!
//! `layer_norm_channel` normalizes each voxel over its channel vector (the
//! transformer-style norm the encoder blocks use); `instance_norm`
//! normalizes each (sample, channel) slice over space (the decoder norm).
//! Both carry per-channel affine weights. Backward passes run single
//! threaded: they are memory-bound, and a fixed accumulation order keeps the
//! per-channel weight gradients bitwise reproducible.

use super::{expect_rank5, finish, unify_tape};
use crate::element::Element;
use crate::error::CoreError;
use crate::tensor::{row_offset, Tensor};
use crate::Result;

fn check_affine<T: Element>(context: &str, c: usize, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<()> {
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(CoreError::shape(
            context,
            format!("gamma/beta of shape [{c}]"),
            format!("{:?} / {:?}", gamma.shape(), beta.shape()),
        ));
    }
    Ok(())
}

/// Per-voxel channel normalization: at every (n, h, w, d), the C-vector is
/// standardized to zero mean / unit variance (biased variance, `eps` inside
/// the square root) and re-scaled by `gamma`, `beta`.
pub fn layer_norm_channel<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let [n, c, h, w, d] = expect_rank5(x, "layer_norm_channel")?;
    check_affine("layer_norm_channel", c, gamma, beta)?;
    let xd = x.data();
    let gd = gamma.data();
    let bd = beta.data();
    let shape = x.shape().to_vec();
    let epsv = T::from_f64(eps);
    let inv_c = T::from_f64(1.0 / c as f64);

    let mut out = vec![T::ZERO; xd.len()];
    // One mean/inv-std per voxel, saved for the backward pass.
    let voxels = n * h * w * d;
    let mut mean = vec![T::ZERO; voxels];
    let mut inv_std = vec![T::ZERO; voxels];

    let mut vox = 0usize;
    for ni in 0..n {
        for hi in 0..h {
            for wi in 0..w {
                let rows: Vec<usize> = (0..c).map(|ci| row_offset(&shape, ni, ci, hi, wi)).collect();
                for di in 0..d {
                    let mut m = T::ZERO;
                    for &r in &rows {
                        m += xd[r + di];
                    }
                    m *= inv_c;
                    let mut v = T::ZERO;
                    for &r in &rows {
                        let z = xd[r + di] - m;
                        v += z * z;
                    }
                    v *= inv_c;
                    let inv = T::ONE / (v + epsv).sqrt();
                    mean[vox + di] = m;
                    inv_std[vox + di] = inv;
                    for (ci, &r) in rows.iter().enumerate() {
                        out[r + di] = (xd[r + di] - m) * inv * gd[ci] + bd[ci];
                    }
                }
                vox += d;
            }
        }
    }
    let out = Tensor::from_vec(shape.clone(), out)?;

    let tape = unify_tape(&[x, gamma, beta])?;
    Ok(finish(tape, out, || {
        let (xn, gn, bn) = (x.node(), gamma.node(), beta.node());
        let xd = x.buffer();
        let gd = gamma.buffer();
        Box::new(move |gy| {
            let mut gx = vec![T::ZERO; xd.len()];
            let mut ggamma = vec![T::ZERO; c];
            let mut gbeta = vec![T::ZERO; c];
            let mut vox = 0usize;
            for ni in 0..n {
                for hi in 0..h {
                    for wi in 0..w {
                        let rows: Vec<usize> =
                            (0..c).map(|ci| row_offset(&shape, ni, ci, hi, wi)).collect();
                        for di in 0..d {
                            let m = mean[vox + di];
                            let inv = inv_std[vox + di];
                            // s1 = mean_c(γ·gy), s2 = mean_c(γ·gy·x̂)
                            let mut s1 = T::ZERO;
                            let mut s2 = T::ZERO;
                            for (ci, &r) in rows.iter().enumerate() {
                                let xhat = (xd[r + di] - m) * inv;
                                let gg = gd[ci] * gy[r + di];
                                s1 += gg;
                                s2 += gg * xhat;
                            }
                            s1 *= inv_c;
                            s2 *= inv_c;
                            for (ci, &r) in rows.iter().enumerate() {
                                let xhat = (xd[r + di] - m) * inv;
                                if xn.is_some() {
                                    gx[r + di] = inv * (gd[ci] * gy[r + di] - s1 - xhat * s2);
                                }
                                ggamma[ci] += gy[r + di] * xhat;
                                gbeta[ci] += gy[r + di];
                            }
                        }
                        vox += d;
                    }
                }
            }
            let mut grads = Vec::new();
            if let Some(xn) = xn {
                grads.push((xn, gx));
            }
            if let Some(gn) = gn {
                grads.push((gn, ggamma));
            }
            if let Some(bn) = bn {
                grads.push((bn, gbeta));
            }
            grads
        })
    }))
}

/// Per-(sample, channel) spatial normalization with per-channel affine
/// weights — the convention of the decoder's residual blocks.
pub fn instance_norm<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let [n, c, h, w, d] = expect_rank5(x, "instance_norm")?;
    check_affine("instance_norm", c, gamma, beta)?;
    let s = h * w * d;
    if s == 0 {
        return Err(CoreError::invalid("instance_norm", "empty spatial extent"));
    }
    let xd = x.data();
    let gd = gamma.data();
    let bd = beta.data();
    let epsv = T::from_f64(eps);
    let inv_s = T::from_f64(1.0 / s as f64);

    let mut out = vec![T::ZERO; xd.len()];
    let mut mean = vec![T::ZERO; n * c];
    let mut inv_std = vec![T::ZERO; n * c];
    for nc in 0..n * c {
        let slice = &xd[nc * s..(nc + 1) * s];
        let mut m = T::ZERO;
        for &v in slice {
            m += v;
        }
        m *= inv_s;
        let mut var = T::ZERO;
        for &v in slice {
            let z = v - m;
            var += z * z;
        }
        var *= inv_s;
        let inv = T::ONE / (var + epsv).sqrt();
        mean[nc] = m;
        inv_std[nc] = inv;
        let ci = nc % c;
        let (g, b) = (gd[ci], bd[ci]);
        for (o, &v) in out[nc * s..(nc + 1) * s].iter_mut().zip(slice) {
            *o = (v - m) * inv * g + b;
        }
    }
    let out = Tensor::from_vec(x.shape().to_vec(), out)?;

    let tape = unify_tape(&[x, gamma, beta])?;
    Ok(finish(tape, out, || {
        let (xn, gn, bn) = (x.node(), gamma.node(), beta.node());
        let xd = x.buffer();
        let gd = gamma.buffer();
        Box::new(move |gy| {
            let mut gx = vec![T::ZERO; xd.len()];
            let mut ggamma = vec![T::ZERO; c];
            let mut gbeta = vec![T::ZERO; c];
            for nc in 0..n * c {
                let ci = nc % c;
                let m = mean[nc];
                let inv = inv_std[nc];
                let xs = &xd[nc * s..(nc + 1) * s];
                let gys = &gy[nc * s..(nc + 1) * s];
                let mut s1 = T::ZERO;
                let mut s2 = T::ZERO;
                for (&v, &g) in xs.iter().zip(gys) {
                    let xhat = (v - m) * inv;
                    s1 += g;
                    s2 += g * xhat;
                }
                ggamma[ci] += s2;
                gbeta[ci] += s1;
                if xn.is_some() {
                    let ms1 = s1 * inv_s;
                    let ms2 = s2 * inv_s;
                    let gamma_inv = gd[ci] * inv;
                    for ((o, &v), &g) in gx[nc * s..(nc + 1) * s].iter_mut().zip(xs).zip(gys) {
                        let xhat = (v - m) * inv;
                        *o = gamma_inv * (g - ms1 - xhat * ms2);
                    }
                }
            }
            let mut grads = Vec::new();
            if let Some(xn) = xn {
                grads.push((xn, gx));
            }
            if let Some(gn) = gn {
                grads.push((gn, ggamma));
            }
            if let Some(bn) = bn {
                grads.push((bn, gbeta));
            }
            grads
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn affine(c: usize) -> (Tensor<f64>, Tensor<f64>) {
        (Tensor::full(vec![c], 1.0), Tensor::zeros(vec![c]))
    }

    #[test]
    fn layer_norm_standardizes_each_voxel() {
        let mut rng = Rng::new(31);
        let x = Tensor::<f64>::randn(vec![2, 8, 3, 2, 4], 5.0, &mut rng);
        let (g, b) = affine(8);
        let y = layer_norm_channel(&x, &g, &b, 1e-6).unwrap();
        let [n, c, h, w, d] = [2usize, 8, 3, 2, 4];
        for ni in 0..n {
            for hi in 0..h {
                for wi in 0..w {
                    for di in 0..d {
                        let vals: Vec<f64> = (0..c)
                            .map(|ci| y.data()[row_offset(x.shape(), ni, ci, hi, wi) + di])
                            .collect();
                        let m: f64 = vals.iter().sum::<f64>() / c as f64;
                        let v: f64 = vals.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / c as f64;
                        assert!(m.abs() < 1e-9, "voxel mean {m}");
                        assert!((v - 1.0).abs() < 1e-5, "voxel var {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn layer_norm_affine_applies_per_channel() {
        let x = Tensor::<f64>::from_vec(vec![1, 2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        let g = Tensor::from_vec(vec![2], vec![2.0, 0.5]).unwrap();
        let b = Tensor::from_vec(vec![2], vec![10.0, -10.0]).unwrap();
        let y = layer_norm_channel(&x, &g, &b, 0.0).unwrap();
        // x̂ = (-1, 1) exactly (mean 2, std 1).
        assert!((y.data()[0] - (2.0 * -1.0 + 10.0)).abs() < 1e-12);
        assert!((y.data()[1] - (0.5 * 1.0 - 10.0)).abs() < 1e-12);
    }

    #[test]
    fn instance_norm_standardizes_each_slice() {
        let mut rng = Rng::new(33);
        let x = Tensor::<f64>::randn(vec![2, 3, 4, 4, 4], 2.5, &mut rng);
        let (g, b) = affine(3);
        let y = instance_norm(&x, &g, &b, 1e-5).unwrap();
        let s = 64;
        for nc in 0..6 {
            let slice = &y.data()[nc * s..(nc + 1) * s];
            let m: f64 = slice.iter().sum::<f64>() / s as f64;
            let v: f64 = slice.iter().map(|z| (z - m) * (z - m)).sum::<f64>() / s as f64;
            assert!(m.abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_input_stays_finite_due_to_eps() {
        let x = Tensor::<f32>::full(vec![1, 4, 2, 2, 2], 7.0);
        let (g, b) = (Tensor::full(vec![4], 1.0f32), Tensor::zeros(vec![4]));
        let ln = layer_norm_channel(&x, &g, &b, 1e-6).unwrap();
        let inn = instance_norm(&x, &g, &b, 1e-5).unwrap();
        assert!(ln.data().iter().all(|v| v.is_finite()));
        assert!(inn.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn affine_shape_mismatch_rejected() {
        let x = Tensor::<f64>::zeros(vec![1, 4, 2, 2, 2]);
        let g = Tensor::<f64>::full(vec![3], 1.0);
        let b = Tensor::<f64>::zeros(vec![4]);
        assert!(layer_norm_channel(&x, &g, &b, 1e-6).is_err());
        assert!(instance_norm(&x, &g, &b, 1e-5).is_err());
    }
}
