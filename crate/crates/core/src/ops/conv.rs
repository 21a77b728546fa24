//! 3D convolution (cross-correlation), grouped/depthwise variants, and the
//! transposed convolution used for decoder upsampling.
//!
//! Layout: activations `(N, C, H, W, D)` with D contiguous; conv weights
//! `(out, in/groups, kh, kw, kd)`; transpose weights `(in, out, kh, kw, kd)`.
//! Every kernel parallelizes over output blocks that exactly one task owns
//! and accumulates serially inside, so any thread count produces bitwise
//! identical buffers. Stride-1 depth loops run as windowed `axpy`/`dot` over
//! the contiguous D axis — the hot path for the 7³ depthwise encoder convs
//! and every 3³/1³ decoder conv.

use rayon::prelude::*;

use super::{axpy_window, dot_window, expect_rank5, finish, unify_tape};
use crate::element::Element;
use crate::error::CoreError;
use crate::tensor::{row_offset, Tensor};
use crate::Result;

/// Static description of a convolution. `kernel`/`stride`/`padding` are per
/// spatial axis (H, W, D).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    pub padding: (usize, usize, usize),
    pub groups: usize,
}

impl Conv3dSpec {
    /// Cubic kernel, stride 1, "same" padding `(k-1)/2`, one group.
    pub fn cubic(in_channels: usize, out_channels: usize, k: usize) -> Self {
        Conv3dSpec {
            in_channels,
            out_channels,
            kernel: (k, k, k),
            stride: (1, 1, 1),
            padding: ((k - 1) / 2, (k - 1) / 2, (k - 1) / 2),
            groups: 1,
        }
    }

    /// Cubic kernel with explicit isotropic stride and padding.
    pub fn isotropic(in_channels: usize, out_channels: usize, k: usize, s: usize, p: usize) -> Self {
        Conv3dSpec {
            in_channels,
            out_channels,
            kernel: (k, k, k),
            stride: (s, s, s),
            padding: (p, p, p),
            groups: 1,
        }
    }

    /// Depthwise: one group per channel, stride 1, same padding.
    pub fn depthwise(channels: usize, k: usize) -> Self {
        let mut s = Self::cubic(channels, channels, k);
        s.groups = channels;
        s
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (kh, kw, kd) = self.kernel;
        let (sh, sw, sd) = self.stride;
        if kh == 0 || kw == 0 || kd == 0 || sh == 0 || sw == 0 || sd == 0 {
            return Err(CoreError::invalid("Conv3dSpec", "kernel and stride must be nonzero"));
        }
        if self.groups == 0
            || self.in_channels % self.groups != 0
            || self.out_channels % self.groups != 0
        {
            return Err(CoreError::invalid(
                "Conv3dSpec",
                format!(
                    "groups {} must divide in_channels {} and out_channels {}",
                    self.groups, self.in_channels, self.out_channels
                ),
            ));
        }
        Ok(())
    }

    /// Weight shape for the forward convolution: `(out, in/groups, kh, kw, kd)`.
    pub fn weight_shape(&self) -> Vec<usize> {
        let (kh, kw, kd) = self.kernel;
        vec![self.out_channels, self.in_channels / self.groups, kh, kw, kd]
    }

    /// Weight shape for the transposed convolution: `(in, out, kh, kw, kd)`.
    pub fn transpose_weight_shape(&self) -> Vec<usize> {
        let (kh, kw, kd) = self.kernel;
        vec![self.in_channels, self.out_channels, kh, kw, kd]
    }

    /// Output extents `floor((in + 2p - k)/s) + 1` per axis.
    pub fn out_spatial(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let one = |i: usize, k: usize, s: usize, p: usize| -> Result<usize> {
            if i + 2 * p < k {
                return Err(CoreError::invalid(
                    "Conv3dSpec::out_spatial",
                    format!("extent {i} with padding {p} is smaller than kernel {k}"),
                ));
            }
            Ok((i + 2 * p - k) / s + 1)
        };
        Ok((
            one(input.0, self.kernel.0, self.stride.0, self.padding.0)?,
            one(input.1, self.kernel.1, self.stride.1, self.padding.1)?,
            one(input.2, self.kernel.2, self.stride.2, self.padding.2)?,
        ))
    }

    /// Transposed-conv output extents `(in - 1)·s - 2p + k` per axis.
    pub fn transpose_out_spatial(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let one = |i: usize, k: usize, s: usize, p: usize| -> Result<usize> {
            let t = (i as isize - 1) * s as isize - 2 * p as isize + k as isize;
            if i == 0 || t <= 0 {
                return Err(CoreError::invalid(
                    "Conv3dSpec::transpose_out_spatial",
                    format!("extent {i} yields non-positive output"),
                ));
            }
            Ok(t as usize)
        };
        Ok((
            one(input.0, self.kernel.0, self.stride.0, self.padding.0)?,
            one(input.1, self.kernel.1, self.stride.1, self.padding.1)?,
            one(input.2, self.kernel.2, self.stride.2, self.padding.2)?,
        ))
    }
}

/// `i·s - p + k` when it lands inside `[0, limit)`: the cell a forward
/// output reads from, equally where a transposed-conv input cell lands.
#[inline]
fn tap_coord(i: usize, s: usize, p: usize, k: usize, limit: usize) -> Option<usize> {
    let t = (i * s + k) as isize - p as isize;
    (t >= 0 && (t as usize) < limit).then(|| t as usize)
}

/// Solves `o·s = i + p - k` for `o` in `[0, limit)`.
#[inline]
fn inv_coord(i: usize, s: usize, p: usize, k: usize, limit: usize) -> Option<usize> {
    let t = (i + p) as isize - k as isize;
    if t < 0 {
        return None;
    }
    let t = t as usize;
    if t % s != 0 {
        return None;
    }
    let o = t / s;
    (o < limit).then_some(o)
}

fn conv_fwd<T: Element>(
    x: &[T],
    xs: &[usize],
    w: &[T],
    bias: Option<&[T]>,
    spec: &Conv3dSpec,
    os: &[usize],
) -> Vec<T> {
    let [n, _c, h, w_ext, d] = [xs[0], xs[1], xs[2], xs[3], xs[4]];
    let [_, o, oh_e, ow_e, od_e] = [os[0], os[1], os[2], os[3], os[4]];
    let (kh, kw, kd) = spec.kernel;
    let (sh, sw, sd) = spec.stride;
    let (ph, pw, pd) = spec.padding;
    let icg = spec.in_channels / spec.groups;
    let ocg = spec.out_channels / spec.groups;
    let block = oh_e * ow_e * od_e;

    let mut out = vec![T::ZERO; n * o * block];
    out.par_chunks_mut(block).enumerate().for_each(|(idx, blk)| {
        let ni = idx / o;
        let oc = idx % o;
        if let Some(b) = bias {
            blk.fill(b[oc]);
        }
        let g0 = oc / ocg;
        for icg_i in 0..icg {
            let ic = g0 * icg + icg_i;
            for oh in 0..oh_e {
                for khi in 0..kh {
                    let Some(ih) = tap_coord(oh, sh, ph, khi, h) else { continue };
                    for ow in 0..ow_e {
                        for kwi in 0..kw {
                            let Some(iw) = tap_coord(ow, sw, pw, kwi, w_ext) else { continue };
                            let x_row = {
                                let off = row_offset(xs, ni, ic, ih, iw);
                                &x[off..off + d]
                            };
                            let w_base = (((oc * icg + icg_i) * kh + khi) * kw + kwi) * kd;
                            let out_row = &mut blk[(oh * ow_e + ow) * od_e..][..od_e];
                            if sd == 1 {
                                for kdi in 0..kd {
                                    axpy_window(
                                        w[w_base + kdi],
                                        x_row,
                                        out_row,
                                        kdi as isize - pd as isize,
                                    );
                                }
                            } else {
                                for (od, slot) in out_row.iter_mut().enumerate() {
                                    let mut acc = *slot;
                                    for kdi in 0..kd {
                                        if let Some(id) = tap_coord(od, sd, pd, kdi, d) {
                                            acc += w[w_base + kdi] * x_row[id];
                                        }
                                    }
                                    *slot = acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

fn conv_bwd_data<T: Element>(
    gy: &[T],
    os: &[usize],
    w: &[T],
    spec: &Conv3dSpec,
    xs: &[usize],
) -> Vec<T> {
    let [n, c, h, w_ext, d] = [xs[0], xs[1], xs[2], xs[3], xs[4]];
    let [_, _o, oh_e, ow_e, od_e] = [os[0], os[1], os[2], os[3], os[4]];
    let (kh, kw, kd) = spec.kernel;
    let (sh, sw, sd) = spec.stride;
    let (ph, pw, pd) = spec.padding;
    let icg = spec.in_channels / spec.groups;
    let ocg = spec.out_channels / spec.groups;
    let block = h * w_ext * d;

    let mut gx = vec![T::ZERO; n * c * block];
    gx.par_chunks_mut(block).enumerate().for_each(|(idx, blk)| {
        let ni = idx / c;
        let ic = idx % c;
        let g0 = ic / icg;
        let icg_i = ic % icg;
        for oc in g0 * ocg..(g0 + 1) * ocg {
            for ih in 0..h {
                for khi in 0..kh {
                    let Some(oh) = inv_coord(ih, sh, ph, khi, oh_e) else { continue };
                    for iw in 0..w_ext {
                        for kwi in 0..kw {
                            let Some(ow) = inv_coord(iw, sw, pw, kwi, ow_e) else { continue };
                            let gy_row = {
                                let off = row_offset(os, ni, oc, oh, ow);
                                &gy[off..off + od_e]
                            };
                            let w_base = (((oc * icg + icg_i) * kh + khi) * kw + kwi) * kd;
                            let gx_row = &mut blk[(ih * w_ext + iw) * d..][..d];
                            if sd == 1 {
                                for kdi in 0..kd {
                                    axpy_window(
                                        w[w_base + kdi],
                                        gy_row,
                                        gx_row,
                                        pd as isize - kdi as isize,
                                    );
                                }
                            } else {
                                for (id, slot) in gx_row.iter_mut().enumerate() {
                                    let mut acc = *slot;
                                    for kdi in 0..kd {
                                        if let Some(od) = inv_coord(id, sd, pd, kdi, od_e) {
                                            acc += w[w_base + kdi] * gy_row[od];
                                        }
                                    }
                                    *slot = acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    gx
}

fn conv_bwd_weight<T: Element>(
    gy: &[T],
    os: &[usize],
    x: &[T],
    xs: &[usize],
    spec: &Conv3dSpec,
) -> Vec<T> {
    let [n, _c, h, w_ext, d] = [xs[0], xs[1], xs[2], xs[3], xs[4]];
    let [_, o, oh_e, ow_e, od_e] = [os[0], os[1], os[2], os[3], os[4]];
    let (kh, kw, kd) = spec.kernel;
    let (sh, sw, sd) = spec.stride;
    let (ph, pw, pd) = spec.padding;
    let icg = spec.in_channels / spec.groups;
    let ocg = spec.out_channels / spec.groups;
    let per_oc = icg * kh * kw * kd;

    let mut gw = vec![T::ZERO; o * per_oc];
    gw.par_chunks_mut(per_oc).enumerate().for_each(|(oc, blk)| {
        let g0 = oc / ocg;
        for ni in 0..n {
            for icg_i in 0..icg {
                let ic = g0 * icg + icg_i;
                for khi in 0..kh {
                    for oh in 0..oh_e {
                        let Some(ih) = tap_coord(oh, sh, ph, khi, h) else { continue };
                        for kwi in 0..kw {
                            for ow in 0..ow_e {
                                let Some(iw) = tap_coord(ow, sw, pw, kwi, w_ext) else { continue };
                                let gy_row = {
                                    let off = row_offset(os, ni, oc, oh, ow);
                                    &gy[off..off + od_e]
                                };
                                let x_row = {
                                    let off = row_offset(xs, ni, ic, ih, iw);
                                    &x[off..off + d]
                                };
                                let w_base = ((icg_i * kh + khi) * kw + kwi) * kd;
                                if sd == 1 {
                                    for kdi in 0..kd {
                                        blk[w_base + kdi] += dot_window(
                                            gy_row,
                                            x_row,
                                            kdi as isize - pd as isize,
                                        );
                                    }
                                } else {
                                    for kdi in 0..kd {
                                        let mut acc = T::ZERO;
                                        for od in 0..od_e {
                                            if let Some(id) = tap_coord(od, sd, pd, kdi, d) {
                                                acc += gy_row[od] * x_row[id];
                                            }
                                        }
                                        blk[w_base + kdi] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    gw
}

/// Sum of `gy` over batch and space, per output channel.
fn bias_grad<T: Element>(gy: &[T], os: &[usize]) -> Vec<T> {
    let [n, o, oh_e, ow_e, od_e] = [os[0], os[1], os[2], os[3], os[4]];
    let block = oh_e * ow_e * od_e;
    let mut db = vec![T::ZERO; o];
    for ni in 0..n {
        for (oc, slot) in db.iter_mut().enumerate() {
            let off = (ni * o + oc) * block;
            let mut acc = T::ZERO;
            for &g in &gy[off..off + block] {
                acc += g;
            }
            *slot += acc;
        }
    }
    db
}

/// 3D cross-correlation with zero padding, strides, and channel groups.
pub fn conv3d<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: Conv3dSpec,
) -> Result<Tensor<T>> {
    spec.validate()?;
    let xs = expect_rank5(x, "conv3d")?;
    if xs[1] != spec.in_channels {
        return Err(CoreError::shape(
            "conv3d",
            format!("{} input channels", spec.in_channels),
            format!("{}", xs[1]),
        ));
    }
    if weight.shape() != spec.weight_shape() {
        return Err(CoreError::shape(
            "conv3d weight",
            format!("{:?}", spec.weight_shape()),
            format!("{:?}", weight.shape()),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [spec.out_channels] {
            return Err(CoreError::shape(
                "conv3d bias",
                format!("[{}]", spec.out_channels),
                format!("{:?}", b.shape()),
            ));
        }
    }
    let (oh, ow, od) = spec.out_spatial((xs[2], xs[3], xs[4]))?;
    let os = vec![xs[0], spec.out_channels, oh, ow, od];
    let data = conv_fwd(x.data(), x.shape(), weight.data(), bias.map(|b| b.data()), &spec, &os);
    let out = Tensor::from_vec(os.clone(), data)?;

    let mut tracked: Vec<&Tensor<T>> = vec![x, weight];
    if let Some(b) = bias {
        tracked.push(b);
    }
    let tape = unify_tape(&tracked)?;
    Ok(finish(tape, out, || {
        let (xn, wn, bn) = (x.node(), weight.node(), bias.and_then(|b| b.node()));
        let xbuf = x.buffer();
        let wbuf = weight.buffer();
        let xs = xs.to_vec();
        Box::new(move |gy| {
            let mut grads = Vec::new();
            if let Some(xn) = xn {
                grads.push((xn, conv_bwd_data(gy, &os, &wbuf, &spec, &xs)));
            }
            if let Some(wn) = wn {
                grads.push((wn, conv_bwd_weight(gy, &os, &xbuf, &xs, &spec)));
            }
            if let Some(bn) = bn {
                grads.push((bn, bias_grad(gy, &os)));
            }
            grads
        })
    }))
}

/// 1×1×1 depthwise expansion: input channel `c` produces output channels
/// `[c·M, (c+1)·M)` — the channel-major grouping of the scaling layers.
/// Weight shape `(C·M, 1, 1, 1, 1)`.
pub fn conv3d_depthwise_multiplier<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    multiplier: usize,
) -> Result<Tensor<T>> {
    if multiplier == 0 {
        return Err(CoreError::invalid("conv3d_depthwise_multiplier", "multiplier must be >= 1"));
    }
    let xs = expect_rank5(x, "conv3d_depthwise_multiplier")?;
    let c = xs[1];
    let spec = Conv3dSpec {
        in_channels: c,
        out_channels: c * multiplier,
        kernel: (1, 1, 1),
        stride: (1, 1, 1),
        padding: (0, 0, 0),
        groups: c,
    };
    conv3d(x, weight, bias, spec)
}

fn convt_fwd<T: Element>(
    x: &[T],
    xs: &[usize],
    w: &[T],
    bias: Option<&[T]>,
    spec: &Conv3dSpec,
    os: &[usize],
) -> Vec<T> {
    let [n, c, h, w_ext, d] = [xs[0], xs[1], xs[2], xs[3], xs[4]];
    let [_, o, oh_e, ow_e, od_e] = [os[0], os[1], os[2], os[3], os[4]];
    let (kh, kw, kd) = spec.kernel;
    let (sh, sw, sd) = spec.stride;
    let (ph, pw, pd) = spec.padding;
    let block = oh_e * ow_e * od_e;

    let mut out = vec![T::ZERO; n * o * block];
    out.par_chunks_mut(block).enumerate().for_each(|(idx, blk)| {
        let ni = idx / o;
        let oc = idx % o;
        if let Some(b) = bias {
            blk.fill(b[oc]);
        }
        for ic in 0..c {
            for khi in 0..kh {
                for ih in 0..h {
                    let Some(oh) = tap_coord(ih, sh, ph, khi, oh_e) else { continue };
                    for kwi in 0..kw {
                        for iw in 0..w_ext {
                            let Some(ow) = tap_coord(iw, sw, pw, kwi, ow_e) else { continue };
                            let x_row = {
                                let off = row_offset(xs, ni, ic, ih, iw);
                                &x[off..off + d]
                            };
                            let w_base = (((ic * o + oc) * kh + khi) * kw + kwi) * kd;
                            let out_row = &mut blk[(oh * ow_e + ow) * od_e..][..od_e];
                            for kdi in 0..kd {
                                let wv = w[w_base + kdi];
                                for (id, &xv) in x_row.iter().enumerate() {
                                    if let Some(od) = tap_coord(id, sd, pd, kdi, od_e) {
                                        out_row[od] += wv * xv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

/// Transposed 3D convolution (the adjoint of [`conv3d`] with the same spec).
/// Weight shape `(in, out, kh, kw, kd)`; `groups` must be 1.
pub fn conv_transpose3d<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: Conv3dSpec,
) -> Result<Tensor<T>> {
    spec.validate()?;
    if spec.groups != 1 {
        return Err(CoreError::invalid("conv_transpose3d", "groups must be 1"));
    }
    let xs = expect_rank5(x, "conv_transpose3d")?;
    if xs[1] != spec.in_channels {
        return Err(CoreError::shape(
            "conv_transpose3d",
            format!("{} input channels", spec.in_channels),
            format!("{}", xs[1]),
        ));
    }
    if weight.shape() != spec.transpose_weight_shape() {
        return Err(CoreError::shape(
            "conv_transpose3d weight",
            format!("{:?}", spec.transpose_weight_shape()),
            format!("{:?}", weight.shape()),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [spec.out_channels] {
            return Err(CoreError::shape(
                "conv_transpose3d bias",
                format!("[{}]", spec.out_channels),
                format!("{:?}", b.shape()),
            ));
        }
    }
    let (oh, ow, od) = spec.transpose_out_spatial((xs[2], xs[3], xs[4]))?;
    let os = vec![xs[0], spec.out_channels, oh, ow, od];
    let data = convt_fwd(x.data(), x.shape(), weight.data(), bias.map(|b| b.data()), &spec, &os);
    let out = Tensor::from_vec(os.clone(), data)?;

    let mut tracked: Vec<&Tensor<T>> = vec![x, weight];
    if let Some(b) = bias {
        tracked.push(b);
    }
    let tape = unify_tape(&tracked)?;
    Ok(finish(tape, out, || {
        let (xn, wn, bn) = (x.node(), weight.node(), bias.and_then(|b| b.node()));
        let xbuf = x.buffer();
        let wbuf = weight.buffer();
        let xs = xs.to_vec();
        Box::new(move |gy| {
            let mut grads = Vec::new();
            if let Some(xn) = xn {
                grads.push((xn, convt_bwd_data(gy, &os, &wbuf, &spec, &xs)));
            }
            if let Some(wn) = wn {
                grads.push((wn, convt_bwd_weight(gy, &os, &xbuf, &xs, &spec)));
            }
            if let Some(bn) = bn {
                grads.push((bn, bias_grad(gy, &os)));
            }
            grads
        })
    }))
}

fn convt_bwd_data<T: Element>(
    gy: &[T],
    os: &[usize],
    w: &[T],
    spec: &Conv3dSpec,
    xs: &[usize],
) -> Vec<T> {
    let [n, c, h, w_ext, d] = [xs[0], xs[1], xs[2], xs[3], xs[4]];
    let [_, o, oh_e, ow_e, od_e] = [os[0], os[1], os[2], os[3], os[4]];
    let (kh, kw, kd) = spec.kernel;
    let (sh, sw, sd) = spec.stride;
    let (ph, pw, pd) = spec.padding;
    let block = h * w_ext * d;

    // gx[i] = Σ w[ic, oc, k] · gy[i·s - p + k]: a plain gather per input cell.
    let mut gx = vec![T::ZERO; n * c * block];
    gx.par_chunks_mut(block).enumerate().for_each(|(idx, blk)| {
        let ni = idx / c;
        let ic = idx % c;
        for oc in 0..o {
            for khi in 0..kh {
                for ih in 0..h {
                    let Some(oh) = tap_coord(ih, sh, ph, khi, oh_e) else { continue };
                    for kwi in 0..kw {
                        for iw in 0..w_ext {
                            let Some(ow) = tap_coord(iw, sw, pw, kwi, ow_e) else { continue };
                            let gy_row = {
                                let off = row_offset(os, ni, oc, oh, ow);
                                &gy[off..off + od_e]
                            };
                            let w_base = (((ic * o + oc) * kh + khi) * kw + kwi) * kd;
                            let gx_row = &mut blk[(ih * w_ext + iw) * d..][..d];
                            for kdi in 0..kd {
                                let wv = w[w_base + kdi];
                                for (id, slot) in gx_row.iter_mut().enumerate() {
                                    if let Some(od) = tap_coord(id, sd, pd, kdi, od_e) {
                                        *slot += wv * gy_row[od];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    gx
}

fn convt_bwd_weight<T: Element>(
    gy: &[T],
    os: &[usize],
    x: &[T],
    xs: &[usize],
    spec: &Conv3dSpec,
) -> Vec<T> {
    let [n, c, h, w_ext, d] = [xs[0], xs[1], xs[2], xs[3], xs[4]];
    let [_, o, oh_e, ow_e, od_e] = [os[0], os[1], os[2], os[3], os[4]];
    let (kh, kw, kd) = spec.kernel;
    let (sh, sw, sd) = spec.stride;
    let (ph, pw, pd) = spec.padding;
    let per_ic = o * kh * kw * kd;

    let mut gw = vec![T::ZERO; c * per_ic];
    gw.par_chunks_mut(per_ic).enumerate().for_each(|(ic, blk)| {
        for ni in 0..n {
            for oc in 0..o {
                for khi in 0..kh {
                    for ih in 0..h {
                        let Some(oh) = tap_coord(ih, sh, ph, khi, oh_e) else { continue };
                        for kwi in 0..kw {
                            for iw in 0..w_ext {
                                let Some(ow) = tap_coord(iw, sw, pw, kwi, ow_e) else { continue };
                                let gy_row = {
                                    let off = row_offset(os, ni, oc, oh, ow);
                                    &gy[off..off + od_e]
                                };
                                let x_row = {
                                    let off = row_offset(xs, ni, ic, ih, iw);
                                    &x[off..off + d]
                                };
                                let w_base = ((oc * kh + khi) * kw + kwi) * kd;
                                for kdi in 0..kd {
                                    let mut acc = T::ZERO;
                                    for (id, &xv) in x_row.iter().enumerate() {
                                        if let Some(od) = tap_coord(id, sd, pd, kdi, od_e) {
                                            acc += xv * gy_row[od];
                                        }
                                    }
                                    blk[w_base + kdi] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    gw
}
