//! The layer types the network is assembled from.
//!
//! Every block holds [`Param`]s registered in a [`ParamRegistry`] and exposes
//! `forward(x, tape)`: pass `Some(&tape)` to record for backprop, `None` for
//! inference. Weight init is truncated normal (std 0.02); biases and norm
//! betas start at zero, norm gammas at one.

use uxnet_core::ops::{
    add, concat_channels, conv3d, conv_transpose3d, gelu, instance_norm, layer_norm_channel,
    leaky_relu, nearest_upsample3d, Conv3dSpec,
};
use uxnet_core::{Element, Param, Rng, Tape, Tensor};

use crate::config::ScalingKind;
use crate::registry::ParamRegistry;
use crate::Result;

/// Epsilon of the channel layer norms inside encoder blocks.
pub const LAYER_NORM_EPS: f64 = 1e-6;
/// Epsilon of the instance norms in the decoder.
pub const INSTANCE_NORM_EPS: f64 = 1e-5;
/// Negative slope of every decoder activation.
pub const LEAKY_SLOPE: f64 = 1e-2;

type CoreResult<T> = uxnet_core::Result<T>;

/// Parameter view for the current pass: tracked on the tape, or a plain
/// snapshot for inference.
fn live<T: Element>(p: &Param<T>, tape: Option<&Tape<T>>) -> Tensor<T> {
    match tape {
        Some(t) => p.watch(t),
        None => p.value(),
    }
}

/// A convolution with its (optional) bias.
pub struct Conv3<T: Element> {
    w: Param<T>,
    b: Option<Param<T>>,
    pub spec: Conv3dSpec,
}

impl<T: Element> Conv3<T> {
    pub fn new(
        reg: &mut ParamRegistry<T>,
        prefix: &str,
        spec: Conv3dSpec,
        bias: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let w = reg.create_weight(&format!("{prefix}.weight"), spec.weight_shape(), rng)?;
        let b = if bias {
            Some(reg.create_zeros(&format!("{prefix}.bias"), vec![spec.out_channels])?)
        } else {
            None
        };
        Ok(Conv3 { w, b, spec })
    }

    pub fn forward(&self, x: &Tensor<T>, tape: Option<&Tape<T>>) -> CoreResult<Tensor<T>> {
        let w = live(&self.w, tape);
        let b = self.b.as_ref().map(|b| live(b, tape));
        conv3d(x, &w, b.as_ref(), self.spec)
    }
}

/// Strided transposed convolution (decoder upsampling). Bias-free.
pub struct TransposeConv3<T: Element> {
    w: Param<T>,
    pub spec: Conv3dSpec,
}

impl<T: Element> TransposeConv3<T> {
    pub fn new(
        reg: &mut ParamRegistry<T>,
        prefix: &str,
        spec: Conv3dSpec,
        rng: &mut Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let w = reg.create_weight(&format!("{prefix}.weight"), spec.transpose_weight_shape(), rng)?;
        Ok(TransposeConv3 { w, spec })
    }

    pub fn forward(&self, x: &Tensor<T>, tape: Option<&Tape<T>>) -> CoreResult<Tensor<T>> {
        conv_transpose3d(x, &live(&self.w, tape), None, self.spec)
    }
}

/// Per-voxel channel layer norm with affine weights.
pub struct ChannelNorm<T: Element> {
    gamma: Param<T>,
    beta: Param<T>,
}

impl<T: Element> ChannelNorm<T> {
    pub fn new(reg: &mut ParamRegistry<T>, prefix: &str, channels: usize) -> Result<Self> {
        Ok(ChannelNorm {
            gamma: reg.create_ones(&format!("{prefix}.gamma"), vec![channels])?,
            beta: reg.create_zeros(&format!("{prefix}.beta"), vec![channels])?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, tape: Option<&Tape<T>>) -> CoreResult<Tensor<T>> {
        layer_norm_channel(x, &live(&self.gamma, tape), &live(&self.beta, tape), LAYER_NORM_EPS)
    }
}

/// Affine instance norm (decoder convention).
pub struct InstNorm<T: Element> {
    gamma: Param<T>,
    beta: Param<T>,
}

impl<T: Element> InstNorm<T> {
    pub fn new(reg: &mut ParamRegistry<T>, prefix: &str, channels: usize) -> Result<Self> {
        Ok(InstNorm {
            gamma: reg.create_ones(&format!("{prefix}.gamma"), vec![channels])?,
            beta: reg.create_zeros(&format!("{prefix}.beta"), vec![channels])?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, tape: Option<&Tape<T>>) -> CoreResult<Tensor<T>> {
        instance_norm(x, &live(&self.gamma, tape), &live(&self.beta, tape), INSTANCE_NORM_EPS)
    }
}

/// Second branch of an encoder block.
pub enum Scaling<T: Element> {
    /// Per-channel expansion C -> 4C (channel-major), GELU, grouped
    /// compression 4C -> C.
    Dcs { expand: Conv3<T>, compress: Conv3<T> },
    /// Dense pointwise MLP with GELU between.
    Mlp { fc1: Conv3<T>, fc2: Conv3<T> },
    /// Absent: the block keeps only its depthwise residual.
    None,
}

impl<T: Element> Scaling<T> {
    pub fn new(
        reg: &mut ParamRegistry<T>,
        prefix: &str,
        kind: ScalingKind,
        channels: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let c = channels;
        Ok(match kind {
            ScalingKind::Dcs => {
                // Expansion weight (4C, 1, 1, 1, 1): output channel 4c+i reads
                // input channel c. Compression (C, 4, 1, 1, 1) inverts that.
                let expand = Conv3::new(
                    reg,
                    &format!("{prefix}.expand"),
                    Conv3dSpec {
                        in_channels: c,
                        out_channels: 4 * c,
                        kernel: (1, 1, 1),
                        stride: (1, 1, 1),
                        padding: (0, 0, 0),
                        groups: c,
                    },
                    true,
                    rng,
                )?;
                let compress = Conv3::new(
                    reg,
                    &format!("{prefix}.compress"),
                    Conv3dSpec {
                        in_channels: 4 * c,
                        out_channels: c,
                        kernel: (1, 1, 1),
                        stride: (1, 1, 1),
                        padding: (0, 0, 0),
                        groups: c,
                    },
                    true,
                    rng,
                )?;
                Scaling::Dcs { expand, compress }
            }
            ScalingKind::Mlp => {
                let fc1 =
                    Conv3::new(reg, &format!("{prefix}.fc1"), Conv3dSpec::cubic(c, 4 * c, 1), true, rng)?;
                let fc2 =
                    Conv3::new(reg, &format!("{prefix}.fc2"), Conv3dSpec::cubic(4 * c, c, 1), true, rng)?;
                Scaling::Mlp { fc1, fc2 }
            }
            ScalingKind::None => Scaling::None,
        })
    }

    fn forward(&self, x: &Tensor<T>, tape: Option<&Tape<T>>) -> CoreResult<Tensor<T>> {
        match self {
            Scaling::Dcs { expand, compress } => {
                let e = expand.forward(x, tape)?;
                compress.forward(&gelu(&e)?, tape)
            }
            Scaling::Mlp { fc1, fc2 } => {
                let e = fc1.forward(x, tape)?;
                fc2.forward(&gelu(&e)?, tape)
            }
            Scaling::None => unreachable!("Scaling::None has no forward"),
        }
    }
}

/// One encoder block:
///
/// ```text
/// z_hat = dwc(norm1(z)) + z
/// z'    = scale(norm2(z_hat)) + z_hat     (skipped when scaling is None)
/// ```
///
/// Both residual sums are the block outputs as-is — no norm or activation
/// after the additions.
pub struct UXNetBlock<T: Element> {
    norm1: ChannelNorm<T>,
    dwc: Conv3<T>,
    second: Option<(ChannelNorm<T>, Scaling<T>)>,
}

impl<T: Element> UXNetBlock<T> {
    pub fn new(
        reg: &mut ParamRegistry<T>,
        prefix: &str,
        channels: usize,
        kernel: usize,
        scaling: ScalingKind,
        depthwise: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let c = channels;
        let norm1 = ChannelNorm::new(reg, &format!("{prefix}.norm1"), c)?;
        let spec = if depthwise {
            Conv3dSpec::depthwise(c, kernel)
        } else {
            Conv3dSpec::cubic(c, c, kernel)
        };
        let dwc = Conv3::new(reg, &format!("{prefix}.dwc"), spec, true, rng)?;
        let second = match scaling {
            ScalingKind::None => None,
            kind => {
                let norm2 = ChannelNorm::new(reg, &format!("{prefix}.norm2"), c)?;
                let scale = Scaling::new(reg, &format!("{prefix}.scale"), kind, c, rng)?;
                Some((norm2, scale))
            }
        };
        Ok(UXNetBlock { norm1, dwc, second })
    }

    pub fn forward(&self, z: &Tensor<T>, tape: Option<&Tape<T>>) -> CoreResult<Tensor<T>> {
        let mixed = self.dwc.forward(&self.norm1.forward(z, tape)?, tape)?;
        let z_hat = add(&mixed, z)?;
        match &self.second {
            None => Ok(z_hat),
            Some((norm2, scale)) => {
                let scaled = scale.forward(&norm2.forward(&z_hat, tape)?, tape)?;
                add(&scaled, &z_hat)
            }
        }
    }
}

/// Decoder residual block: two bias-free convs with instance norm and leaky
/// ReLU, a 1x1x1-projected skip when channel counts differ, activation after
/// the sum. `kernel` is 3 everywhere except the full-resolution merge (1).
pub struct ResBlock<T: Element> {
    conv1: Conv3<T>,
    norm1: InstNorm<T>,
    conv2: Conv3<T>,
    norm2: InstNorm<T>,
    skip: Option<(Conv3<T>, InstNorm<T>)>,
}

impl<T: Element> ResBlock<T> {
    pub fn new(
        reg: &mut ParamRegistry<T>,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let conv1 = Conv3::new(
            reg,
            &format!("{prefix}.conv1"),
            Conv3dSpec::cubic(in_channels, out_channels, kernel),
            false,
            rng,
        )?;
        let norm1 = InstNorm::new(reg, &format!("{prefix}.norm1"), out_channels)?;
        let conv2 = Conv3::new(
            reg,
            &format!("{prefix}.conv2"),
            Conv3dSpec::cubic(out_channels, out_channels, kernel),
            false,
            rng,
        )?;
        let norm2 = InstNorm::new(reg, &format!("{prefix}.norm2"), out_channels)?;
        let skip = if in_channels != out_channels {
            let conv = Conv3::new(
                reg,
                &format!("{prefix}.skip"),
                Conv3dSpec::cubic(in_channels, out_channels, 1),
                false,
                rng,
            )?;
            let norm = InstNorm::new(reg, &format!("{prefix}.skip_norm"), out_channels)?;
            Some((conv, norm))
        } else {
            None
        };
        Ok(ResBlock { conv1, norm1, conv2, norm2, skip })
    }

    pub fn forward(&self, x: &Tensor<T>, tape: Option<&Tape<T>>) -> CoreResult<Tensor<T>> {
        let h = leaky_relu(&self.norm1.forward(&self.conv1.forward(x, tape)?, tape)?, LEAKY_SLOPE)?;
        let h = self.norm2.forward(&self.conv2.forward(&h, tape)?, tape)?;
        let shortcut = match &self.skip {
            Some((conv, norm)) => norm.forward(&conv.forward(x, tape)?, tape)?,
            None => x.clone(),
        };
        leaky_relu(&add(&h, &shortcut)?, LEAKY_SLOPE)
    }
}

/// The 1/32-resolution unit: 1x1x1 reduce to `mid`, 3^3 conv, 1x1x1 expand
/// back, identity skip, activation after the sum.
pub struct BottleneckUnit<T: Element> {
    reduce: Conv3<T>,
    norm1: InstNorm<T>,
    conv: Conv3<T>,
    norm2: InstNorm<T>,
    expand: Conv3<T>,
    norm3: InstNorm<T>,
}

impl<T: Element> BottleneckUnit<T> {
    pub fn new(
        reg: &mut ParamRegistry<T>,
        prefix: &str,
        channels: usize,
        mid: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(BottleneckUnit {
            reduce: Conv3::new(
                reg,
                &format!("{prefix}.reduce"),
                Conv3dSpec::cubic(channels, mid, 1),
                false,
                rng,
            )?,
            norm1: InstNorm::new(reg, &format!("{prefix}.norm1"), mid)?,
            conv: Conv3::new(
                reg,
                &format!("{prefix}.conv"),
                Conv3dSpec::cubic(mid, mid, 3),
                false,
                rng,
            )?,
            norm2: InstNorm::new(reg, &format!("{prefix}.norm2"), mid)?,
            expand: Conv3::new(
                reg,
                &format!("{prefix}.expand"),
                Conv3dSpec::cubic(mid, channels, 1),
                false,
                rng,
            )?,
            norm3: InstNorm::new(reg, &format!("{prefix}.norm3"), channels)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, tape: Option<&Tape<T>>) -> CoreResult<Tensor<T>> {
        let h = leaky_relu(&self.norm1.forward(&self.reduce.forward(x, tape)?, tape)?, LEAKY_SLOPE)?;
        let h = leaky_relu(&self.norm2.forward(&self.conv.forward(&h, tape)?, tape)?, LEAKY_SLOPE)?;
        let h = self.norm3.forward(&self.expand.forward(&h, tape)?, tape)?;
        leaky_relu(&add(&h, x)?, LEAKY_SLOPE)
    }
}

/// Deep-supervision head: 1x1x1 projection to class logits followed by
/// nearest-neighbor upsampling to full resolution.
pub struct AuxHead<T: Element> {
    conv: Conv3<T>,
    factor: usize,
}

impl<T: Element> AuxHead<T> {
    pub fn new(
        reg: &mut ParamRegistry<T>,
        prefix: &str,
        in_channels: usize,
        classes: usize,
        factor: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(AuxHead {
            conv: Conv3::new(reg, prefix, Conv3dSpec::cubic(in_channels, classes, 1), true, rng)?,
            factor,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, tape: Option<&Tape<T>>) -> CoreResult<Tensor<T>> {
        nearest_upsample3d(&self.conv.forward(x, tape)?, self.factor)
    }
}

/// Channel-concat of a decoder path with its skip connection.
pub fn merge_inputs<T: Element>(up: &Tensor<T>, skip: &Tensor<T>) -> CoreResult<Tensor<T>> {
    concat_channels(&[up, skip])
}
